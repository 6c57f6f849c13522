//! Evaluation metrics and machine-readable reports: teacher-forced
//! cross-entropy, free-running continuation precision, the share of
//! flawlessly continued sequences, and exact parameter counts.

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::model_io::atomic_write;
use crate::recurrent::PitchModel;
use std::fmt::Write as _;
use std::path::Path;

/// Evaluation results in the shape of the structured report file. Fields
/// that a given evaluation does not produce stay `None` and are omitted
/// from the file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub config_digest: String,
    pub param_count: Option<usize>,
    pub mean_ce_bits: Option<f64>,
    pub precision_mean: Option<f64>,
    pub pct_above_99: Option<f64>,
    /// Per-sequence rows, in corpus order.
    pub per_sequence: Vec<SeqRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeqRow {
    pub ce_bits: Option<f64>,
    pub precision: Option<f64>,
}

/// Mean cross-entropy in bits per prediction event over a corpus, plus the
/// per-sequence means. The corpus-level mean is aggregated in a canonical
/// order, so reordering the corpus cannot change it.
pub fn evaluate_ce(model: &PitchModel, corpus: &Corpus) -> Result<(f64, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.alphabet != model.alphabet() {
        return Err(Error::ShapeMismatch(format!(
            "corpus alphabet {} vs model alphabet {}",
            corpus.alphabet,
            model.alphabet()
        )));
    }
    let mut per_seq = Vec::with_capacity(corpus.len());
    let mut totals: Vec<(f64, usize)> = Vec::with_capacity(corpus.len());
    for seq in &corpus.sequences {
        let preds = model.forward(seq)?;
        let mut bits = 0.0;
        for (t, p) in preds.iter().enumerate() {
            bits += crate::recurrent::categorical_cross_entropy(seq.frames[t + 1][0] as usize, p);
        }
        per_seq.push(bits / preds.len() as f64);
        totals.push((bits, preds.len()));
    }
    let mut sums: Vec<f64> = totals.iter().map(|&(b, _)| b).collect();
    sums.sort_by(f64::total_cmp);
    let events: usize = totals.iter().map(|&(_, e)| e).sum();
    Ok((sums.iter().sum::<f64>() / events as f64, per_seq))
}

#[derive(Debug, Clone)]
pub struct ContinuationStats {
    pub precision_mean: f64,
    pub pct_above_threshold: f64,
    pub per_sequence: Vec<f64>,
}

/// Free-running continuation: prime each test sequence with its first
/// `primer_len` frames, generate the rest by argmax feedback, and score the
/// fraction of frames whose pitch matches the ground truth. A sequence
/// counts as flawless when its precision strictly exceeds `threshold`.
pub fn evaluate_continuation(
    model: &PitchModel,
    corpus: &Corpus,
    primer_len: usize,
    threshold: f64,
) -> Result<ContinuationStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut per_sequence = Vec::with_capacity(corpus.len());
    for seq in &corpus.sequences {
        if seq.len() <= primer_len {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} frames is not longer than the primer {}",
                seq.len(),
                primer_len
            )));
        }
        let primer = crate::data::FrameSequence {
            frames: seq.frames[..primer_len].to_vec(),
            alphabet: seq.alphabet,
            meta: seq.meta.clone(),
        };
        let steps = seq.len() - primer_len;
        let generated = model.continue_sequence(&primer, steps)?;
        let mut correct = 0usize;
        for (g, truth) in generated.frames.iter().zip(&seq.frames[primer_len..]) {
            if g == truth {
                correct += 1;
            }
        }
        per_sequence.push(correct as f64 / steps as f64);
    }
    let mut sorted = per_sequence.clone();
    sorted.sort_by(f64::total_cmp);
    let precision_mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let above = per_sequence.iter().filter(|&&p| p > threshold).count();
    Ok(ContinuationStats {
        precision_mean,
        pct_above_threshold: 100.0 * above as f64 / per_sequence.len() as f64,
        per_sequence,
    })
}

/// Exact number of scalar parameters (all matrices and biases).
pub fn count_parameters(model: &PitchModel) -> usize {
    model.param_count()
}

// ---------------------------------------------------------------------------
// Report file
// ---------------------------------------------------------------------------
//
// Schema (`rgae-report-v1`): `key = value` lines in a fixed key order
// (schema, config_digest, param_count, mean_ce_bits, precision_mean,
// pct_above_99), absent metrics omitted, reals printed with 6 fixed
// decimals. Then one `seq <index> [ce=..] [precision=..]` row per
// sequence. Parsing the file reproduces every number exactly as printed.

pub const REPORT_SCHEMA: &str = "rgae-report-v1";

pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema = {}", REPORT_SCHEMA);
    let _ = writeln!(out, "config_digest = {}", report.config_digest);
    if let Some(pc) = report.param_count {
        let _ = writeln!(out, "param_count = {}", pc);
    }
    if let Some(v) = report.mean_ce_bits {
        let _ = writeln!(out, "mean_ce_bits = {:.6}", v);
    }
    if let Some(v) = report.precision_mean {
        let _ = writeln!(out, "precision_mean = {:.6}", v);
    }
    if let Some(v) = report.pct_above_99 {
        let _ = writeln!(out, "pct_above_99 = {:.6}", v);
    }
    for (i, row) in report.per_sequence.iter().enumerate() {
        let mut line = format!("seq {}", i);
        if let Some(ce) = row.ce_bits {
            let _ = write!(line, " ce={:.6}", ce);
        }
        if let Some(p) = row.precision {
            let _ = write!(line, " precision={:.6}", p);
        }
        let _ = writeln!(out, "{}", line);
    }
    out
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), format_report(report).as_bytes())
}

pub fn parse_report(text: &str) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("report line {line}: {msg}"));
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("seq ") {
            let mut parts = rest.split_whitespace();
            let index: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(idx + 1, "bad sequence index"))?;
            if index != report.per_sequence.len() {
                return Err(bad(idx + 1, "sequence rows out of order"));
            }
            let mut row = SeqRow::default();
            for item in parts {
                if let Some(v) = item.strip_prefix("ce=") {
                    row.ce_bits = Some(v.parse().map_err(|_| bad(idx + 1, "bad ce"))?);
                } else if let Some(v) = item.strip_prefix("precision=") {
                    row.precision = Some(v.parse().map_err(|_| bad(idx + 1, "bad precision"))?);
                }
            }
            report.per_sequence.push(row);
        } else if let Some((key, value)) = line.split_once(" = ") {
            match key {
                "schema" => {
                    if value != REPORT_SCHEMA {
                        return Err(bad(idx + 1, "unknown schema"));
                    }
                }
                "config_digest" => report.config_digest = value.to_string(),
                "param_count" => {
                    report.param_count =
                        Some(value.parse().map_err(|_| bad(idx + 1, "bad param_count"))?)
                }
                "mean_ce_bits" => {
                    report.mean_ce_bits =
                        Some(value.parse().map_err(|_| bad(idx + 1, "bad mean_ce_bits"))?)
                }
                "precision_mean" => {
                    report.precision_mean =
                        Some(value.parse().map_err(|_| bad(idx + 1, "bad precision_mean"))?)
                }
                "pct_above_99" => {
                    report.pct_above_99 =
                        Some(value.parse().map_err(|_| bad(idx + 1, "bad pct_above_99"))?)
                }
                _ => return Err(bad(idx + 1, "unknown key")),
            }
        } else {
            return Err(bad(idx + 1, "unparseable line"));
        }
    }
    Ok(report)
}
