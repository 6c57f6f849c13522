//! Command layer shared by the CLI, the Python bindings, and the
//! integration tests: each function is a pure mapping from (config, input
//! files, seed) to output files, so reruns are bit-identical.

use crate::config::RunConfig;
use crate::data::{
    generate_scheme_dataset, kfold_split, parse_schemes, read_corpus, write_corpus, Corpus,
    FragmentSource, SchemeDatasetSpec,
};
use crate::ensemble::{combine, WeightedCombineConfig};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate_ce, evaluate_continuation, EvalReport, SeqRow,
};
use crate::gae::{pretrain, GaeParams, GaePretrainConfig};
use crate::mathcore::{derive_seed, LrSchedule};
use crate::model_io::{atomic_write, read_tensor_file, write_tensor_file};
use crate::recurrent::{rgae_train, rnn_train, BaselineRnn, PitchModel, RgaeModel, TrainConfig};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct GenDataOutcome {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub eval_path: PathBuf,
    pub manifest_path: PathBuf,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub eval_sequences: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub trace_path: PathBuf,
    pub trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NAN)
    }
}

fn out_path(cfg: &RunConfig, default: &str) -> PathBuf {
    if cfg.out.is_empty() {
        PathBuf::from(default)
    } else {
        PathBuf::from(&cfg.out)
    }
}

fn trace_path(cfg: &RunConfig, model_path: &Path) -> PathBuf {
    if cfg.trace_out.is_empty() {
        let mut p = model_path.as_os_str().to_owned();
        p.push(".trace");
        PathBuf::from(p)
    } else {
        PathBuf::from(&cfg.trace_out)
    }
}

fn write_trace(path: &Path, trace: &[f64], lr: &LrSchedule) -> Result<()> {
    let mut text = String::new();
    for (e, loss) in trace.iter().enumerate() {
        let _ = writeln!(text, "epoch={} loss={:.9} lr={:.9}", e + 1, loss, lr.rate(e));
    }
    atomic_write(path, text.as_bytes())
}

fn require_file(path: &str, what: &str) -> Result<()> {
    if path.is_empty() {
        return Err(Error::Config(format!("no {what} configured")));
    }
    if !Path::new(path).exists() {
        return Err(Error::Config(format!("{what} '{path}' does not exist")));
    }
    Ok(())
}

fn dataset_spec(cfg: &RunConfig, scale: f64) -> Result<SchemeDatasetSpec> {
    let schemes = if cfg.schemes_file.is_empty() {
        crate::data::default_schemes()
    } else {
        require_file(&cfg.schemes_file, "schemes file")?;
        let text = std::fs::read_to_string(&cfg.schemes_file)
            .map_err(|e| Error::io(cfg.schemes_file.clone(), e))?;
        parse_schemes(&text)?
    };
    let scaled = |count: usize| -> usize { (count as f64 * scale + 0.5).floor() as usize };
    Ok(SchemeDatasetSpec {
        schemes,
        fragment_lengths: cfg.fragment_lengths.clone(),
        train_per_cell: scaled(cfg.train_per_cell),
        test_per_cell: scaled(cfg.test_per_cell),
        eval_per_cell: scaled(cfg.eval_per_cell),
        sequence_length: cfg.sequence_length,
        alphabet: cfg.alphabet_size,
        seed: cfg.seed,
    })
}

fn fragment_source(cfg: &RunConfig) -> Result<FragmentSource> {
    if cfg.fragment_source == "random-walk" {
        Ok(FragmentSource::RandomWalk)
    } else {
        require_file(&cfg.fragment_source, "fragment source corpus")?;
        Ok(FragmentSource::FromCorpus(read_corpus(&cfg.fragment_source)?))
    }
}

/// Generate the scheme dataset and write train/test/eval corpora plus a
/// manifest recording the seed and the full spec.
pub fn cmd_gen_data(cfg: &RunConfig, scale: f64) -> Result<GenDataOutcome> {
    let spec = dataset_spec(cfg, scale)?;
    let source = fragment_source(cfg)?;
    let (train, test, eval) = generate_scheme_dataset(&spec, &source)?;

    let dir = if cfg.out.is_empty() {
        PathBuf::from(&cfg.data_out_dir)
    } else {
        PathBuf::from(&cfg.out)
    };
    let train_path = dir.join("train.corpus");
    let test_path = dir.join("test.corpus");
    let eval_path = dir.join("eval.corpus");
    write_corpus(&train, &train_path)?;
    write_corpus(&test, &test_path)?;
    write_corpus(&eval, &eval_path)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_digest = {}", cfg.digest());
    let _ = writeln!(manifest, "seed = {}", spec.seed);
    let _ = writeln!(manifest, "scale = {:?}", scale);
    let _ = writeln!(manifest, "alphabet = {}", spec.alphabet);
    let _ = writeln!(manifest, "sequence_length = {}", spec.sequence_length);
    let _ = writeln!(
        manifest,
        "fragment_lengths = {}",
        spec.fragment_lengths
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let _ = writeln!(
        manifest,
        "schemes = {}",
        spec.schemes
            .iter()
            .map(|s| s
                .deltas
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","))
            .collect::<Vec<_>>()
            .join("; ")
    );
    let _ = writeln!(
        manifest,
        "per_cell = train {} / test {} / eval {}",
        spec.train_per_cell, spec.test_per_cell, spec.eval_per_cell
    );
    let _ = writeln!(
        manifest,
        "sequences = train {} / test {} / eval {}",
        train.len(),
        test.len(),
        eval.len()
    );
    let manifest_path = dir.join("manifest.txt");
    atomic_write(&manifest_path, manifest.as_bytes())?;

    Ok(GenDataOutcome {
        train_path,
        test_path,
        eval_path,
        manifest_path,
        train_sequences: train.len(),
        test_sequences: test.len(),
        eval_sequences: eval.len(),
    })
}

fn load_training_corpus(cfg: &RunConfig) -> Result<Corpus> {
    require_file(&cfg.train_corpus, "training corpus")?;
    let corpus = read_corpus(&cfg.train_corpus)?;
    if cfg.kfold > 0 {
        if cfg.fold >= cfg.kfold {
            return Err(Error::Config(format!(
                "fold {} out of range for kfold {}",
                cfg.fold, cfg.kfold
            )));
        }
        let folds = kfold_split(&corpus, cfg.kfold, cfg.seed)?;
        Ok(folds.into_iter().nth(cfg.fold).unwrap().0)
    } else {
        Ok(corpus)
    }
}

fn pretrain_config(cfg: &RunConfig) -> GaePretrainConfig {
    GaePretrainConfig {
        epochs: cfg.pretrain_epochs,
        delta_min: cfg.delta_min,
        delta_max: cfg.delta_max,
        dropout_rate: cfg.dropout_rate,
        sparsity_target: cfg.sparsity_target,
        sparsity_weight: cfg.sparsity_weight,
        norm_deviation_weight: cfg.norm_deviation_weight,
        norm_cap: cfg.norm_cap,
        lr: LrSchedule::new(cfg.learning_rate, cfg.pretrain_epochs),
        batch_size: cfg.pretrain_batch_size,
        augment_transpose: cfg.augment_transpose,
        rmsprop_decay: cfg.rmsprop_decay,
        rmsprop_epsilon: cfg.rmsprop_epsilon,
        seed: derive_seed(cfg.seed, &[0x707265]),
    }
}

fn train_config(cfg: &RunConfig, epochs: usize, finetune: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        finetune_epochs: finetune,
        lr: LrSchedule::new(cfg.learning_rate, epochs),
        dropout_rate: cfg.dropout_rate,
        grad_clip_norm: cfg.grad_clip_norm,
        batch_size: cfg.batch_size,
        augment_transpose: cfg.augment_transpose,
        augment_min: cfg.delta_min,
        augment_max: cfg.delta_max,
        rmsprop_decay: cfg.rmsprop_decay,
        rmsprop_epsilon: cfg.rmsprop_epsilon,
        seed: derive_seed(cfg.seed, &[0x7472]),
    }
}

/// Pre-train a gated autoencoder on the training corpus and save it.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<TrainOutcome> {
    let corpus = load_training_corpus(cfg)?;
    let mut params = GaeParams::init(
        cfg.context_len,
        cfg.alphabet_size,
        cfg.gae_factors,
        cfg.gae_mapping,
        derive_seed(cfg.seed, &[0x676165]),
    );
    let pcfg = pretrain_config(cfg);
    let trace = pretrain(&mut params, &corpus, &pcfg)?;
    let model_path = out_path(cfg, "gae.rgae");
    write_tensor_file(&model_path, &params.to_named_tensors("gae"))?;
    let tpath = trace_path(cfg, &model_path);
    write_trace(&tpath, &trace, &pcfg.lr)?;
    Ok(TrainOutcome {
        model_path,
        trace_path: tpath,
        trace,
    })
}

/// Train the recurrent gated autoencoder on top of a pre-trained GAE.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    if cfg.gae_model.is_empty() {
        return Err(Error::Config(
            "no gae_model configured: pre-train a gated autoencoder first \
             (pretrain command) and point gae_model at it"
                .into(),
        ));
    }
    if !Path::new(&cfg.gae_model).exists() {
        return Err(Error::Config(format!(
            "gae_model '{}' does not exist: run the pretrain command first",
            cfg.gae_model
        )));
    }
    let corpus = load_training_corpus(cfg)?;
    let tensors = read_tensor_file(&cfg.gae_model)?;
    let gae = GaeParams::from_named_tensors(&tensors, "gae", Some(cfg.context_len))?;
    if gae.alphabet() != cfg.alphabet_size {
        return Err(Error::Config(format!(
            "gae model alphabet {} vs configured alphabet {}",
            gae.alphabet(),
            cfg.alphabet_size
        )));
    }
    let mut model = RgaeModel::init(gae, cfg.hidden_size, derive_seed(cfg.seed, &[0x677275]));
    let tcfg = train_config(cfg, cfg.epochs, cfg.finetune_epochs);
    let trace = rgae_train(&mut model, &corpus, &tcfg)?;
    let model_path = out_path(cfg, "rgae.rgae");
    PitchModel::Rgae(model).save(&model_path)?;
    let tpath = trace_path(cfg, &model_path);
    write_trace(&tpath, &trace, &tcfg.lr)?;
    Ok(TrainOutcome {
        model_path,
        trace_path: tpath,
        trace,
    })
}

/// Train the absolute-pitch baseline GRU.
pub fn cmd_train_baseline(cfg: &RunConfig) -> Result<TrainOutcome> {
    let corpus = load_training_corpus(cfg)?;
    let mut model = BaselineRnn::init(
        cfg.baseline_window,
        cfg.alphabet_size,
        cfg.baseline_hidden,
        derive_seed(cfg.seed, &[0x726e6e]),
    );
    let tcfg = train_config(cfg, cfg.baseline_epochs, 0);
    let trace = rnn_train(&mut model, &corpus, &tcfg)?;
    let model_path = out_path(cfg, "baseline.rgae");
    PitchModel::Baseline(model).save(&model_path)?;
    let tpath = trace_path(cfg, &model_path);
    write_trace(&tpath, &trace, &tcfg.lr)?;
    Ok(TrainOutcome {
        model_path,
        trace_path: tpath,
        trace,
    })
}

fn load_eval_corpus(cfg: &RunConfig) -> Result<Corpus> {
    require_file(&cfg.corpus, "evaluation corpus")?;
    read_corpus(&cfg.corpus)
}

/// Teacher-forced cross-entropy evaluation; with `kfold > 0` and a
/// `{fold}` placeholder in the model path, each fold's model is scored on
/// that fold's held-out split and the fold means are averaged.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let corpus = load_eval_corpus(cfg)?;
    let mut report = EvalReport {
        config_digest: cfg.digest(),
        ..Default::default()
    };

    if cfg.kfold > 0 && cfg.model.contains("{fold}") {
        let folds = kfold_split(&corpus, cfg.kfold, cfg.seed)?;
        let mut fold_means = Vec::new();
        for (i, (_, test)) in folds.iter().enumerate() {
            let path = cfg.model.replace("{fold}", &i.to_string());
            require_file(&path, "model")?;
            let model = PitchModel::load(&path)?;
            report.param_count.get_or_insert(model.param_count());
            let (mean, per_seq) = evaluate_ce(&model, test)?;
            fold_means.push(mean);
            report.per_sequence.extend(per_seq.into_iter().map(|ce| SeqRow {
                ce_bits: Some(ce),
                precision: None,
            }));
        }
        report.mean_ce_bits = Some(fold_means.iter().sum::<f64>() / fold_means.len() as f64);
    } else {
        require_file(&cfg.model, "model")?;
        let model = PitchModel::load(&cfg.model)?;
        report.param_count = Some(model.param_count());
        let (mean, per_seq) = evaluate_ce(&model, &corpus)?;
        report.mean_ce_bits = Some(mean);
        report.per_sequence = per_seq
            .into_iter()
            .map(|ce| SeqRow {
                ce_bits: Some(ce),
                precision: None,
            })
            .collect();
    }

    emit_report(&report, out_path(cfg, "eval-report.txt"))?;
    Ok(report)
}

/// Free-running continuation evaluation.
pub fn cmd_continue(cfg: &RunConfig) -> Result<EvalReport> {
    require_file(&cfg.model, "model")?;
    let corpus = load_eval_corpus(cfg)?;
    let model = PitchModel::load(&cfg.model)?;
    let stats = evaluate_continuation(&model, &corpus, cfg.primer_len, cfg.precision_threshold)?;
    let report = EvalReport {
        config_digest: cfg.digest(),
        param_count: Some(model.param_count()),
        mean_ce_bits: None,
        precision_mean: Some(stats.precision_mean),
        pct_above_99: Some(stats.pct_above_threshold),
        per_sequence: stats
            .per_sequence
            .into_iter()
            .map(|p| SeqRow {
                ce_bits: None,
                precision: Some(p),
            })
            .collect(),
    };
    emit_report(&report, out_path(cfg, "continue-report.txt"))?;
    Ok(report)
}

/// Combine the per-step prediction distributions of several models with
/// the entropy-weighted geometric mean and report the combined
/// cross-entropy.
pub fn cmd_ensemble(cfg: &RunConfig) -> Result<EvalReport> {
    if cfg.models.len() < 2 {
        return Err(Error::Config(
            "ensemble needs at least two model paths in 'models'".into(),
        ));
    }
    let corpus = load_eval_corpus(cfg)?;
    let mut models = Vec::with_capacity(cfg.models.len());
    for path in &cfg.models {
        require_file(path, "ensemble model")?;
        models.push(PitchModel::load(path)?);
    }
    let alphabet = models[0].alphabet();
    for (m, path) in models.iter().zip(&cfg.models) {
        if m.alphabet() != alphabet {
            return Err(Error::Config(format!(
                "model '{}' has alphabet {}, expected {}",
                path,
                m.alphabet(),
                alphabet
            )));
        }
    }
    let ccfg = WeightedCombineConfig {
        bias: cfg.ensemble_bias,
        entropy_floor: cfg.entropy_floor,
    };

    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut per_sequence = Vec::with_capacity(corpus.len());
    let mut totals: Vec<(f64, usize)> = Vec::with_capacity(corpus.len());
    for seq in &corpus.sequences {
        let per_model: Vec<Vec<Vec<f64>>> = models
            .iter()
            .map(|m| m.forward(seq))
            .collect::<Result<_>>()?;
        let steps = per_model[0].len();
        let mut bits = 0.0;
        for t in 0..steps {
            let dists: Vec<Vec<f64>> = per_model.iter().map(|p| p[t].clone()).collect();
            let mixed = combine(&dists, &ccfg)?;
            bits += crate::recurrent::categorical_cross_entropy(
                seq.frames[t + 1][0] as usize,
                &mixed,
            );
        }
        per_sequence.push(SeqRow {
            ce_bits: Some(bits / steps as f64),
            precision: None,
        });
        totals.push((bits, steps));
    }
    let mut sums: Vec<f64> = totals.iter().map(|&(b, _)| b).collect();
    sums.sort_by(f64::total_cmp);
    let events: usize = totals.iter().map(|&(_, e)| e).sum();
    let report = EvalReport {
        config_digest: cfg.digest(),
        param_count: Some(models.iter().map(|m| m.param_count()).sum()),
        mean_ce_bits: Some(sums.iter().sum::<f64>() / events as f64),
        precision_mean: None,
        pct_above_99: None,
        per_sequence,
    };
    emit_report(&report, out_path(cfg, "ensemble-report.txt"))?;
    Ok(report)
}
