//! Frame-corpus text format.
//!
//! UTF-8 text; one frame per line as space-separated ASCII decimal pitch
//! indices; one or more blank lines separate sequences; lines starting with
//! `#` are comments; an optional `#M=<int>` header sets the alphabet size.
//! `#meta` comment lines carry optional per-sequence provenance and are
//! ignored by readers that do not know them.

use super::{Corpus, Frame, FrameSequence, SeqMeta};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Alphabet used when a file carries no `#M=` header.
pub const DEFAULT_ALPHABET: usize = 128;

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_corpus_str(&text, &path.display().to_string())
}

pub fn read_corpus_str(text: &str, origin: &str) -> Result<Corpus> {
    let mut alphabet: Option<usize> = None;
    let mut sequences: Vec<FrameSequence> = Vec::new();
    let mut frames: Vec<Frame> = Vec::new();
    let mut pending_meta = SeqMeta::default();
    let mut current_meta = SeqMeta::default();

    let err = |line: usize, message: String| Error::CorpusFormat {
        path: origin.to_string(),
        line,
        message,
    };

    let flush =
        |frames: &mut Vec<Frame>, meta: &mut SeqMeta, sequences: &mut Vec<FrameSequence>| {
            if !frames.is_empty() {
                sequences.push(FrameSequence {
                    frames: std::mem::take(frames),
                    alphabet: 0, // patched below once the alphabet is known
                    meta: std::mem::take(meta),
                });
            }
        };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut frames, &mut current_meta, &mut sequences);
            pending_meta = SeqMeta::default();
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(m) = rest.strip_prefix("M=") {
                let m: usize = m
                    .trim()
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid alphabet size '{}'", m)))?;
                if m == 0 {
                    return Err(err(lineno, "alphabet size must be positive".into()));
                }
                alphabet = Some(m);
            } else if let Some(kv) = rest.strip_prefix("meta") {
                for item in kv.split_whitespace() {
                    if let Some((k, v)) = item.split_once('=') {
                        match k {
                            "scheme" => pending_meta.scheme = v.parse().ok(),
                            "fraglen" => pending_meta.fragment_len = v.parse().ok(),
                            "source" => pending_meta.source = Some(v.to_string()),
                            _ => {}
                        }
                    }
                }
            }
            // other comments ignored
            continue;
        }
        if frames.is_empty() {
            current_meta = std::mem::take(&mut pending_meta);
        }
        let mut frame: Frame = Vec::new();
        for tok in line.split(' ') {
            if tok.is_empty() {
                return Err(err(lineno, "pitches must be separated by single spaces".into()));
            }
            let p: u16 = tok
                .parse()
                .map_err(|_| err(lineno, format!("invalid pitch index '{}'", tok)))?;
            frame.push(p);
        }
        frame.sort_unstable();
        frame.dedup();
        frames.push(frame);
    }
    flush(&mut frames, &mut current_meta, &mut sequences);

    let alphabet = alphabet.unwrap_or(DEFAULT_ALPHABET);
    for (i, seq) in sequences.iter_mut().enumerate() {
        seq.alphabet = alphabet;
        for (t, f) in seq.frames.iter().enumerate() {
            for &p in f {
                if p as usize >= alphabet {
                    return Err(Error::CorpusFormat {
                        path: origin.to_string(),
                        line: 0,
                        message: format!(
                            "pitch {} out of range [0, {}) in sequence {} frame {}",
                            p, alphabet, i, t
                        ),
                    });
                }
            }
        }
    }
    Corpus::new(alphabet, sequences)
}

pub fn write_corpus_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#M={}", corpus.alphabet);
    for seq in &corpus.sequences {
        if !seq.meta.is_empty() {
            let mut line = String::from("#meta");
            if let Some(s) = seq.meta.scheme {
                let _ = write!(line, " scheme={}", s);
            }
            if let Some(l) = seq.meta.fragment_len {
                let _ = write!(line, " fraglen={}", l);
            }
            if let Some(src) = &seq.meta.source {
                let _ = write!(line, " source={}", src);
            }
            let _ = writeln!(out, "{}", line);
        }
        for frame in &seq.frames {
            let toks: Vec<String> = frame.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{}", toks.join(" "));
        }
        let _ = writeln!(out);
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::model_io::atomic_write(path, write_corpus_string(corpus).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = read_corpus_str("", "test").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn single_sequence() {
        let c = read_corpus_str("60\n62\n64\n", "test").unwrap();
        assert_eq!(c.alphabet, DEFAULT_ALPHABET);
        assert_eq!(c.len(), 1);
        assert!(c.sequences[0].is_monophonic());
        assert_eq!(c.sequences[0].pitches().unwrap(), vec![60, 62, 64]);
    }

    #[test]
    fn header_and_multiple_sequences() {
        let text = "#M=64\n10 12\n14\n\n\n20\n21\n";
        let c = read_corpus_str(text, "test").unwrap();
        assert_eq!(c.alphabet, 64);
        assert_eq!(c.len(), 2);
        assert_eq!(c.sequences[0].frames[0], vec![10, 12]);
        assert_eq!(c.sequences[1].len(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "#M=64\n10\nbogus\n";
        match read_corpus_str(text, "f.txt") {
            Err(Error::CorpusFormat { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {:?}", other),
        }
    }

    #[test]
    fn out_of_range_pitch_is_error() {
        let text = "#M=16\n20\n";
        assert!(read_corpus_str(text, "f.txt").is_err());
    }

    #[test]
    fn round_trip_with_meta() {
        let mut seq = FrameSequence::from_pitches(&[1, 2, 3], 32).unwrap();
        seq.meta.scheme = Some(4);
        seq.meta.fragment_len = Some(8);
        let corpus = Corpus::new(32, vec![seq]).unwrap();
        let text = write_corpus_string(&corpus);
        let back = read_corpus_str(&text, "mem").unwrap();
        assert_eq!(back, corpus);
        // Second round trip is byte-identical.
        assert_eq!(write_corpus_string(&back), text);
    }
}
