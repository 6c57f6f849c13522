//! Frame corpora: the multi-hot pitch-frame representation, plain-text
//! corpus file I/O, k-fold splits, transposition augmentation, and the
//! synthetic copy-and-shift dataset generator (in [`scheme`]).

mod corpus_io;
mod scheme;

pub use corpus_io::{read_corpus, read_corpus_str, write_corpus, write_corpus_string};
pub use scheme::{
    default_schemes, generate_scheme_dataset, parse_schemes, verify_scheme_structure,
    FragmentSource, SchemeDatasetSpec, TranspositionScheme,
};

use crate::error::{Error, Result};
use crate::mathcore::{derive_seed, seeded_rng};
use rand::seq::SliceRandom;
use rand::Rng;

/// One time frame: the set of active pitch indices, sorted ascending.
pub type Frame = Vec<u16>;

/// Optional provenance attached to a sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeqMeta {
    pub scheme: Option<usize>,
    pub fragment_len: Option<usize>,
    pub source: Option<String>,
}

impl SeqMeta {
    pub fn is_empty(&self) -> bool {
        self.scheme.is_none() && self.fragment_len.is_none() && self.source.is_none()
    }
}

/// A time-ordered list of multi-hot pitch frames over an alphabet of size
/// `alphabet`. Monophonic sequences have exactly one on-bit per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub alphabet: usize,
    pub meta: SeqMeta,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, alphabet: usize) -> Result<Self> {
        for (t, frame) in frames.iter().enumerate() {
            for &p in frame {
                if (p as usize) >= alphabet {
                    return Err(Error::InvalidArgument(format!(
                        "pitch {} out of range [0, {}) at frame {}",
                        p, alphabet, t
                    )));
                }
            }
        }
        let mut frames = frames;
        for f in frames.iter_mut() {
            f.sort_unstable();
            f.dedup();
        }
        Ok(FrameSequence {
            frames,
            alphabet,
            meta: SeqMeta::default(),
        })
    }

    pub fn from_pitches(pitches: &[u16], alphabet: usize) -> Result<Self> {
        FrameSequence::new(pitches.iter().map(|&p| vec![p]).collect(), alphabet)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_monophonic(&self) -> bool {
        self.frames.iter().all(|f| f.len() == 1)
    }

    /// Pitch list of a monophonic sequence.
    pub fn pitches(&self) -> Result<Vec<u16>> {
        self.frames
            .iter()
            .map(|f| {
                if f.len() == 1 {
                    Ok(f[0])
                } else {
                    Err(Error::InvalidArgument(
                        "sequence is not monophonic".into(),
                    ))
                }
            })
            .collect()
    }
}

/// A set of sequences over one shared pitch alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub alphabet: usize,
    pub sequences: Vec<FrameSequence>,
}

impl Corpus {
    pub fn new(alphabet: usize, sequences: Vec<FrameSequence>) -> Result<Self> {
        for s in &sequences {
            if s.alphabet != alphabet {
                return Err(Error::InvalidArgument(format!(
                    "sequence alphabet {} differs from corpus alphabet {}",
                    s.alphabet, alphabet
                )));
            }
        }
        Ok(Corpus {
            alphabet,
            sequences,
        })
    }

    pub fn empty(alphabet: usize) -> Self {
        Corpus {
            alphabet,
            sequences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }
}

/// Cyclically shift the bits of a frame: the output bit at index `i` takes
/// the input bit at `(i + delta) mod M`. Shared convention with the gated
/// autoencoder's shift operation.
pub fn shift_frame(frame: &Frame, delta: i64, alphabet: usize) -> Frame {
    let m = alphabet as i64;
    let mut out: Frame = frame
        .iter()
        .map(|&p| (p as i64 - delta).rem_euclid(m) as u16)
        .collect();
    out.sort_unstable();
    out
}

/// Transpose every frame of every sequence by one shared delta drawn
/// uniformly from `delta_range` (inclusive). Interval structure is
/// preserved; pitch arithmetic wraps modulo the alphabet.
pub fn augment_transpose(
    batch: &[FrameSequence],
    delta_range: (i32, i32),
    seed: u64,
) -> Vec<FrameSequence> {
    let mut rng = seeded_rng(seed);
    let delta = if delta_range.0 == delta_range.1 {
        delta_range.0 as i64
    } else {
        rng.random_range(delta_range.0..=delta_range.1) as i64
    };
    batch
        .iter()
        .map(|seq| {
            let frames = seq
                .frames
                .iter()
                .map(|f| shift_frame(f, delta, seq.alphabet))
                .collect();
            FrameSequence {
                frames,
                alphabet: seq.alphabet,
                meta: seq.meta.clone(),
            }
        })
        .collect()
}

/// Deterministic k-fold split: shuffled sequence indices partitioned into k
/// disjoint folds whose sizes differ by at most one.
pub fn kfold_split(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<(Corpus, Corpus)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds corpus size {}",
            k,
            corpus.len()
        )));
    }
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = seeded_rng(derive_seed(seed, &[0x6b666f6c64])); // "kfold"
    indices.shuffle(&mut rng);

    let base = corpus.len() / k;
    let extra = corpus.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }

    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let test_set: std::collections::HashSet<usize> = folds[f].iter().cloned().collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, seq) in corpus.sequences.iter().enumerate() {
            if test_set.contains(&i) {
                test.push(seq.clone());
            } else {
                train.push(seq.clone());
            }
        }
        out.push((
            Corpus::new(corpus.alphabet, train)?,
            Corpus::new(corpus.alphabet, test)?,
        ));
    }
    Ok(out)
}
