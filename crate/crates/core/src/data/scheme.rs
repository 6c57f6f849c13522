//! Synthetic copy-and-shift sequences: a short fragment is repeated, each
//! repetition transposed from the previous one by the next delta of a cyclic
//! transposition scheme.

use super::{Corpus, FrameSequence, SeqMeta};
use crate::error::{Error, Result};
use crate::mathcore::{derive_seed, seeded_rng, Rng64};
use rand::Rng;

/// A cyclic list of signed pitch shifts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranspositionScheme {
    pub deltas: Vec<i32>,
}

impl TranspositionScheme {
    pub fn new(deltas: Vec<i32>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::InvalidArgument(
                "transposition scheme must be non-empty".into(),
            ));
        }
        Ok(TranspositionScheme { deltas })
    }

    pub fn delta(&self, repetition: usize) -> i32 {
        self.deltas[repetition % self.deltas.len()]
    }
}

/// The ten stock schemes used by the structured-sequence experiment.
pub fn default_schemes() -> Vec<TranspositionScheme> {
    [
        vec![5],
        vec![7],
        vec![-5],
        vec![-7],
        vec![12, -12],
        vec![3, -3],
        vec![4, -4],
        vec![9, -9],
        vec![4, -8],
        vec![-4, 8],
    ]
    .into_iter()
    .map(|d| TranspositionScheme { deltas: d })
    .collect()
}

/// Parse a scheme config: one scheme per line, comma-separated signed
/// integers, `#` comments.
pub fn parse_schemes(text: &str) -> Result<Vec<TranspositionScheme>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let deltas: Result<Vec<i32>> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<i32>().map_err(|_| {
                    Error::Config(format!("schemes line {}: invalid delta '{}'", idx + 1, tok))
                })
            })
            .collect();
        out.push(TranspositionScheme::new(deltas?)?);
    }
    if out.is_empty() {
        return Err(Error::Config("no transposition schemes found".into()));
    }
    Ok(out)
}

/// Where fragments come from: a bounded random walk, or windows sampled
/// from a user corpus (monophonic sequences only; pitches taken modulo the
/// target alphabet).
#[derive(Debug, Clone)]
pub enum FragmentSource {
    RandomWalk,
    FromCorpus(Corpus),
}

impl FragmentSource {
    fn sample(&self, len: usize, alphabet: usize, rng: &mut Rng64) -> Result<Vec<u16>> {
        match self {
            FragmentSource::RandomWalk => {
                let m = alphabet as i64;
                let center = m / 2;
                let mut p = rng.random_range((center - 8).max(0)..=(center + 8).min(m - 1));
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    out.push(p.rem_euclid(m) as u16);
                    p = (p + rng.random_range(-4i64..=4)).rem_euclid(m);
                }
                Ok(out)
            }
            FragmentSource::FromCorpus(corpus) => {
                let candidates: Vec<(usize, usize)> = corpus
                    .sequences
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.is_monophonic() && s.len() >= len)
                    .flat_map(|(i, s)| (0..=(s.len() - len)).map(move |o| (i, o)))
                    .collect();
                if candidates.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "fragment source has no monophonic window of length {}",
                        len
                    )));
                }
                let (si, off) = candidates[rng.random_range(0..candidates.len())];
                let pitches = corpus.sequences[si].pitches()?;
                Ok(pitches[off..off + len]
                    .iter()
                    .map(|&p| (p as usize % alphabet) as u16)
                    .collect())
            }
        }
    }
}

/// Grid description of a scheme dataset: every (scheme, fragment length)
/// cell yields `train + test + eval` sequences built from distinct
/// fragments.
#[derive(Debug, Clone)]
pub struct SchemeDatasetSpec {
    pub schemes: Vec<TranspositionScheme>,
    pub fragment_lengths: Vec<usize>,
    pub train_per_cell: usize,
    pub test_per_cell: usize,
    pub eval_per_cell: usize,
    pub sequence_length: usize,
    pub alphabet: usize,
    pub seed: u64,
}

impl SchemeDatasetSpec {
    pub fn sequences_per_cell(&self) -> usize {
        self.train_per_cell + self.test_per_cell + self.eval_per_cell
    }
}

fn realize_sequence(
    fragment: &[u16],
    scheme: &TranspositionScheme,
    length: usize,
    alphabet: usize,
) -> Vec<u16> {
    let m = alphabet as i64;
    let mut out = Vec::with_capacity(length);
    let mut block: Vec<i64> = fragment.iter().map(|&p| p as i64).collect();
    let mut rep = 0usize;
    'fill: loop {
        for &p in &block {
            if out.len() == length {
                break 'fill;
            }
            out.push(p.rem_euclid(m) as u16);
        }
        let d = scheme.delta(rep) as i64;
        for p in block.iter_mut() {
            *p = (*p + d).rem_euclid(m);
        }
        rep += 1;
    }
    out
}

/// Build the (train, test, eval) corpora of a scheme dataset. Deterministic
/// given the spec seed; the three splits never share a fragment within a
/// (scheme, length) cell.
pub fn generate_scheme_dataset(
    spec: &SchemeDatasetSpec,
    source: &FragmentSource,
) -> Result<(Corpus, Corpus, Corpus)> {
    if spec.schemes.is_empty() || spec.fragment_lengths.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset needs at least one scheme and one fragment length".into(),
        ));
    }
    for &l in &spec.fragment_lengths {
        if l == 0 || l > spec.sequence_length {
            return Err(Error::InvalidArgument(format!(
                "fragment length {} invalid for sequence length {}",
                l, spec.sequence_length
            )));
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut eval = Vec::new();

    for (si, scheme) in spec.schemes.iter().enumerate() {
        for (li, &frag_len) in spec.fragment_lengths.iter().enumerate() {
            let mut rng = seeded_rng(derive_seed(spec.seed, &[si as u64, li as u64]));
            let want = spec.sequences_per_cell();
            let mut fragments: Vec<Vec<u16>> = Vec::with_capacity(want);
            let mut attempts = 0;
            while fragments.len() < want {
                let f = source.sample(frag_len, spec.alphabet, &mut rng)?;
                if fragments.contains(&f) {
                    attempts += 1;
                    if attempts > 1000 * want {
                        return Err(Error::InvalidArgument(
                            "fragment source cannot produce enough distinct fragments".into(),
                        ));
                    }
                    continue;
                }
                fragments.push(f);
            }

            for (fi, fragment) in fragments.iter().enumerate() {
                let pitches =
                    realize_sequence(fragment, scheme, spec.sequence_length, spec.alphabet);
                let mut seq = FrameSequence::from_pitches(&pitches, spec.alphabet)?;
                seq.meta = SeqMeta {
                    scheme: Some(si),
                    fragment_len: Some(frag_len),
                    source: None,
                };
                if fi < spec.train_per_cell {
                    train.push(seq);
                } else if fi < spec.train_per_cell + spec.test_per_cell {
                    test.push(seq);
                } else {
                    eval.push(seq);
                }
            }
        }
    }

    Ok((
        Corpus::new(spec.alphabet, train)?,
        Corpus::new(spec.alphabet, test)?,
        Corpus::new(spec.alphabet, eval)?,
    ))
}

/// Check that a monophonic sequence realizes `scheme` with blocks of
/// `fragment_len`: every block equals the previous block transposed by the
/// scheme's next cyclic delta (the final partial block is checked on its
/// prefix).
pub fn verify_scheme_structure(
    seq: &FrameSequence,
    scheme: &TranspositionScheme,
    fragment_len: usize,
) -> bool {
    let pitches = match seq.pitches() {
        Ok(p) => p,
        Err(_) => return false,
    };
    let m = seq.alphabet as i64;
    let blocks: Vec<&[u16]> = pitches.chunks(fragment_len).collect();
    for i in 1..blocks.len() {
        let d = scheme.delta(i - 1) as i64;
        for (j, &p) in blocks[i].iter().enumerate() {
            let expect = (blocks[i - 1][j] as i64 + d).rem_euclid(m);
            if p as i64 != expect {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SchemeDatasetSpec {
        SchemeDatasetSpec {
            schemes: default_schemes(),
            fragment_lengths: vec![4, 8, 16],
            train_per_cell: 2,
            test_per_cell: 1,
            eval_per_cell: 1,
            sequence_length: 64,
            alphabet: 64,
            seed,
        }
    }

    #[test]
    fn direct_construction_constant_scheme() {
        let scheme = TranspositionScheme::new(vec![5]).unwrap();
        let got = realize_sequence(&[10, 12], &scheme, 8, 64);
        assert_eq!(got, vec![10, 12, 15, 17, 20, 22, 25, 27]);
    }

    #[test]
    fn alternating_scheme_round_trips() {
        let scheme = TranspositionScheme::new(vec![12, -12]).unwrap();
        let got = realize_sequence(&[10, 12], &scheme, 8, 64);
        assert_eq!(got, vec![10, 12, 22, 24, 10, 12, 22, 24]);
    }

    #[test]
    fn fragment_longer_than_sequence_rejected() {
        let mut s = spec(1);
        s.fragment_lengths = vec![128];
        assert!(generate_scheme_dataset(&s, &FragmentSource::RandomWalk).is_err());
    }

    #[test]
    fn split_counts_and_step_totals() {
        let mut s = spec(7);
        s.train_per_cell = 20;
        s.test_per_cell = 5;
        s.eval_per_cell = 1;
        s.sequence_length = 512;
        let (train, test, eval) =
            generate_scheme_dataset(&s, &FragmentSource::RandomWalk).unwrap();
        assert_eq!(train.len(), 600);
        assert_eq!(test.len(), 150);
        assert_eq!(eval.len(), 30);
        // 26 sequences x 512 steps x 10 schemes per fragment length.
        let per_length: usize = train
            .sequences
            .iter()
            .chain(&test.sequences)
            .chain(&eval.sequences)
            .filter(|q| q.meta.fragment_len == Some(4))
            .map(|q| q.len())
            .sum();
        assert_eq!(per_length, 133_120);
    }

    #[test]
    fn generated_sequences_verify_and_splits_share_no_fragment() {
        let s = spec(3);
        let (train, test, eval) =
            generate_scheme_dataset(&s, &FragmentSource::RandomWalk).unwrap();
        let all = [&train, &test, &eval];
        for corpus in all {
            for q in &corpus.sequences {
                let scheme = &s.schemes[q.meta.scheme.unwrap()];
                assert!(verify_scheme_structure(q, scheme, q.meta.fragment_len.unwrap()));
            }
        }
        // Fragments (the first block) are pairwise distinct within a cell.
        for scheme_id in 0..s.schemes.len() {
            for &fl in &s.fragment_lengths {
                let mut firsts = Vec::new();
                for corpus in all {
                    for q in &corpus.sequences {
                        if q.meta.scheme == Some(scheme_id) && q.meta.fragment_len == Some(fl) {
                            firsts.push(q.pitches().unwrap()[..fl].to_vec());
                        }
                    }
                }
                let unique: std::collections::HashSet<_> = firsts.iter().cloned().collect();
                assert_eq!(unique.len(), firsts.len());
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(11);
        let a = generate_scheme_dataset(&s, &FragmentSource::RandomWalk).unwrap();
        let b = generate_scheme_dataset(&s, &FragmentSource::RandomWalk).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn corpus_fragment_source() {
        let melody = FrameSequence::from_pitches(&(30..60).collect::<Vec<u16>>(), 64).unwrap();
        let corpus = Corpus::new(64, vec![melody]).unwrap();
        let mut s = spec(5);
        s.fragment_lengths = vec![4];
        let (train, _, _) =
            generate_scheme_dataset(&s, &FragmentSource::FromCorpus(corpus)).unwrap();
        assert!(!train.is_empty());
        for q in &train.sequences {
            assert!(verify_scheme_structure(
                q,
                &s.schemes[q.meta.scheme.unwrap()],
                4
            ));
        }
    }

    #[test]
    fn parse_schemes_round_trip() {
        let text = "# comment\n5\n12, -12\n4,-8\n";
        let parsed = parse_schemes(text).unwrap();
        assert_eq!(parsed[0].deltas, vec![5]);
        assert_eq!(parsed[1].deltas, vec![12, -12]);
        assert_eq!(parsed[2].deltas, vec![4, -8]);
        assert!(parse_schemes("").is_err());
        assert!(parse_schemes("1,foo").is_err());
    }
}
