//! Flat key-value run configuration.
//!
//! Format: `key = value` lines, `#` comments, and `include <preset-or-path>`
//! lines (later lines override included values). The named experiment
//! presets are compiled in; any other include is resolved as a file path
//! relative to the including file. Unknown keys are rejected before any
//! computation starts.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

macro_rules! run_config {
    ($( $key:ident : $ty:ty = $default:expr, $help:expr; )*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $( pub $key: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $( $key: $default, )* }
            }
        }

        /// Every config key with a one-line description; the CLI help and
        /// the parser share this table.
        pub const CONFIG_KEYS: &[(&str, &str)] = &[
            $( (stringify!($key), $help), )*
        ];

        impl RunConfig {
            pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($key) => {
                        self.$key = parse_value(key, value)?;
                        Ok(())
                    } )*
                    _ => Err(Error::Config(format!("unknown config key '{}'", key))),
                }
            }

            /// Canonical serialization: every key in table order.
            pub fn canonical_string(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{} = {}", stringify!($key), ValueRepr::repr(&self.$key)); )*
                out
            }
        }
    };
}

run_config! {
    seed: u64 = 0, "global random seed; every command is a pure function of config, inputs, and seed";
    alphabet_size: usize = 64, "pitch alphabet size M";
    schemes_file: String = String::new(), "transposition scheme file (one comma-separated scheme per line); empty = built-in set";
    fragment_lengths: Vec<usize> = vec![4, 8, 16], "comma-separated fragment lengths for dataset generation";
    train_per_cell: usize = 20, "training sequences per (scheme, fragment length) cell";
    test_per_cell: usize = 5, "test sequences per cell";
    eval_per_cell: usize = 1, "evaluation sequences per cell";
    sequence_length: usize = 512, "frames per generated sequence";
    fragment_source: String = "random-walk".into(), "'random-walk' or a corpus file to sample fragments from";
    data_out_dir: String = "data".into(), "output directory for gen-data";
    context_len: usize = 16, "context window length n of the gated autoencoder";
    gae_factors: usize = 512, "factor layer size F";
    gae_mapping: usize = 64, "mapping layer size K";
    pretrain_epochs: usize = 50, "gated-autoencoder pre-training epochs";
    delta_min: i32 = -30, "smallest transposition delta (pre-training game and augmentation)";
    delta_max: i32 = 30, "largest transposition delta";
    dropout_rate: f64 = 0.0, "inverted input dropout rate";
    sparsity_target: f64 = 0.05, "target batch-mean mapping activation";
    sparsity_weight: f64 = 0.1, "weight of the sparsity penalty";
    norm_deviation_weight: f64 = 0.1, "weight of the column-norm deviation penalty";
    norm_cap: f64 = 1.0, "maximum column norm of the input projections";
    pretrain_batch_size: usize = 64, "(context, target) pairs per pre-training batch";
    hidden_size: usize = 64, "GRU hidden units of the relative-pitch model";
    epochs: usize = 50, "recurrent training epochs";
    finetune_epochs: usize = 0, "trailing epochs that unfreeze the gated autoencoder";
    learning_rate: f64 = 0.001, "initial learning rate, decayed linearly to 0";
    grad_clip_norm: f64 = 5.0, "global gradient norm clip";
    batch_size: usize = 8, "sequences per recurrent training batch";
    augment_transpose: bool = false, "randomly transpose every training batch";
    baseline_hidden: usize = 512, "GRU hidden units of the absolute-pitch baseline";
    baseline_window: usize = 16, "input window of the baseline (frames)";
    baseline_epochs: usize = 60, "baseline training epochs";
    rmsprop_decay: f64 = 0.9, "RMSProp accumulator decay";
    rmsprop_epsilon: f64 = 1e-8, "RMSProp stabilizer";
    primer_len: usize = 64, "teacher-forced primer length for continuation";
    precision_threshold: f64 = 0.99, "precision above which a continuation counts as flawless";
    kfold: usize = 0, "cross-validation folds (0 = off)";
    fold: usize = 0, "fold index used by training commands when kfold > 0";
    ensemble_bias: f64 = 0.5, "entropy-weight bias b of the ensemble";
    entropy_floor: f64 = 1e-6, "lower clamp on relative entropy";
    train_corpus: String = String::new(), "training corpus file";
    corpus: String = String::new(), "evaluation corpus file";
    gae_model: String = String::new(), "pre-trained gated-autoencoder model file (input of train)";
    model: String = String::new(), "model file to evaluate or continue ({fold} expands per fold)";
    models: Vec<String> = Vec::new(), "comma-separated model files to ensemble";
    out: String = String::new(), "primary output path (command-specific default when empty)";
    trace_out: String = String::new(), "loss trace path (default: <out>.trace)";
}

trait ValueRepr {
    fn repr(&self) -> String;
}

impl ValueRepr for u64 {
    fn repr(&self) -> String {
        self.to_string()
    }
}
impl ValueRepr for usize {
    fn repr(&self) -> String {
        self.to_string()
    }
}
impl ValueRepr for i32 {
    fn repr(&self) -> String {
        self.to_string()
    }
}
impl ValueRepr for f64 {
    fn repr(&self) -> String {
        format!("{:?}", self)
    }
}
impl ValueRepr for bool {
    fn repr(&self) -> String {
        self.to_string()
    }
}
impl ValueRepr for String {
    fn repr(&self) -> String {
        self.clone()
    }
}
impl ValueRepr for Vec<usize> {
    fn repr(&self) -> String {
        self.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}
impl ValueRepr for Vec<String> {
    fn repr(&self) -> String {
        self.join(",")
    }
}

trait ValueParse: Sized {
    fn parse_from(key: &str, value: &str) -> Result<Self>;
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value '{}' for key '{}'", value, key))
}

macro_rules! impl_parse_fromstr {
    ($($ty:ty),*) => {
        $( impl ValueParse for $ty {
            fn parse_from(key: &str, value: &str) -> Result<Self> {
                value.trim().parse().map_err(|_| bad_value(key, value))
            }
        } )*
    };
}
impl_parse_fromstr!(u64, usize, i32, f64, bool);

impl ValueParse for String {
    fn parse_from(_key: &str, value: &str) -> Result<Self> {
        Ok(value.trim().to_string())
    }
}

impl ValueParse for Vec<usize> {
    fn parse_from(key: &str, value: &str) -> Result<Self> {
        value
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|_| bad_value(key, value)))
            .collect()
    }
}

impl ValueParse for Vec<String> {
    fn parse_from(_key: &str, value: &str) -> Result<Self> {
        Ok(value
            .split(',')
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect())
    }
}

fn parse_value<T: ValueParse>(key: &str, value: &str) -> Result<T> {
    T::parse_from(key, value)
}

/// Compiled-in experiment presets, usable as `include <name>`.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "exp1-rgae",
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/exp1-rgae.cfg")),
    ),
    (
        "exp1-baseline",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../presets/exp1-baseline.cfg"
        )),
    ),
    (
        "exp2-rgae",
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/exp2-rgae.cfg")),
    ),
    (
        "exp2-baseline",
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../presets/exp2-baseline.cfg"
        )),
    ),
    (
        "exp2-desk",
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/exp2-desk.cfg")),
    ),
];

/// The stock scheme table shipped alongside the presets.
pub const SCHEMES_PRESET: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../presets/schemes.cfg"
));

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.load_file(path.as_ref(), 0)?;
        Ok(cfg)
    }

    pub fn from_str_at(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.load_text(text, base_dir, 0)?;
        Ok(cfg)
    }

    /// Start from a named preset.
    pub fn from_preset(name: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.load_text(preset_text(name)?, Path::new("."), 0)?;
        Ok(cfg)
    }

    fn load_file(&mut self, path: &Path, depth: usize) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let base = path.parent().map(PathBuf::from).unwrap_or_default();
        self.load_text(&text, &base, depth)
    }

    fn load_text(&mut self, text: &str, base_dir: &Path, depth: usize) -> Result<()> {
        if depth > 8 {
            return Err(Error::Config("include depth exceeds 8".into()));
        }
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inc) = line.strip_prefix("include ") {
                let inc = inc.trim();
                if let Ok(preset) = preset_text(inc) {
                    self.load_text(preset, Path::new("."), depth + 1)?;
                } else {
                    self.load_file(&base_dir.join(inc), depth + 1)?;
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected 'key = value', got '{}'", line)))?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// 64-bit FNV-1a of the canonical serialization; any field change
    /// changes the digest.
    pub fn digest(&self) -> String {
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in self.canonical_string().bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{:016x}", hash)
    }
}

fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("no preset named '{}'", name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_apply() {
        let mut cfg = RunConfig::default();
        cfg.apply("seed", "42").unwrap();
        cfg.apply("fragment_lengths", "2, 4").unwrap();
        cfg.apply("augment_transpose", "true").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.fragment_lengths, vec![2, 4]);
        assert!(cfg.augment_transpose);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply("bogus_key", "1").is_err());
        assert!(RunConfig::from_str_at("bogus_key = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn presets_parse_and_match_sources() {
        for (name, _) in PRESETS {
            let cfg = RunConfig::from_preset(name).unwrap();
            assert!(cfg.alphabet_size > 0, "{name}");
        }
        let desk = RunConfig::from_preset("exp2-desk").unwrap();
        assert_eq!(desk.train_per_cell, 8);
        assert_eq!(desk.test_per_cell, 3);
        assert_eq!(desk.sequence_length, 256);
        // Values pulled in through the include.
        assert_eq!(desk.context_len, 16);
        assert_eq!(desk.hidden_size, 64);
        assert!(desk.augment_transpose);
        assert_eq!(desk.baseline_hidden, 512);

        let exp2 = RunConfig::from_preset("exp2-rgae").unwrap();
        assert_eq!(exp2.train_per_cell, 20);
        assert_eq!(exp2.sequence_length, 512);
        assert_eq!(exp2.pretrain_epochs, 50);

        let exp1 = RunConfig::from_preset("exp1-rgae").unwrap();
        assert_eq!(exp1.context_len, 8);
        assert_eq!(exp1.hidden_size, 16);
        assert_eq!(exp1.pretrain_epochs, 250);
        assert_eq!(exp1.epochs, 110);
        assert_eq!(exp1.finetune_epochs, 10);
        assert_eq!(exp1.dropout_rate, 0.5);

        let b1 = RunConfig::from_preset("exp1-baseline").unwrap();
        assert_eq!(b1.baseline_hidden, 50);
        assert_eq!(b1.baseline_window, 1);
        assert_eq!(b1.baseline_epochs, 70);
    }

    #[test]
    fn scheme_preset_matches_builtin() {
        let parsed = crate::data::parse_schemes(SCHEMES_PRESET).unwrap();
        assert_eq!(parsed, crate::data::default_schemes());
    }

    #[test]
    fn digest_changes_with_any_field() {
        let base = RunConfig::default();
        let d0 = base.digest();
        for (key, sample) in [
            ("seed", "123"),
            ("alphabet_size", "65"),
            ("dropout_rate", "0.25"),
            ("models", "a,b"),
            ("augment_transpose", "true"),
            ("out", "somewhere"),
        ] {
            let mut cfg = base.clone();
            cfg.apply(key, sample).unwrap();
            assert_ne!(cfg.digest(), d0, "digest must react to {key}");
        }
        assert_eq!(base.digest(), RunConfig::default().digest());
    }

    #[test]
    fn include_file_and_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("base.cfg"), "seed = 7\nepochs = 3\n").unwrap();
        std::fs::write(
            dir.path().join("run.cfg"),
            "include base.cfg\nepochs = 9\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(dir.path().join("run.cfg")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 9);
    }

    #[test]
    fn config_keys_cover_struct() {
        // The canonical serialization mentions every registered key.
        let canon = RunConfig::default().canonical_string();
        for (key, _) in CONFIG_KEYS {
            assert!(canon.contains(&format!("{} = ", key)), "{key}");
        }
        assert_eq!(canon.lines().count(), CONFIG_KEYS.len());
    }
}
