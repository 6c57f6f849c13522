//! Python bindings: corpora, the gated autoencoder, both sequence models,
//! the evaluation metrics, and the ensemble rule.
//!
//! Frames cross the boundary as lists of pitch indices, sequences as lists
//! of frames, distributions as lists of floats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rgae_core::data as core_data;
use rgae_core::ensemble as core_ensemble;
use rgae_core::error::Error as CoreError;
use rgae_core::eval as core_eval;
use rgae_core::gae as core_gae;
use rgae_core::mathcore::LrSchedule;
use rgae_core::model_io;
use rgae_core::recurrent as core_rnn;

fn pyerr(e: CoreError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type PyFrames = Vec<Vec<u16>>;

fn to_sequence(frames: PyFrames, alphabet: usize) -> PyResult<core_data::FrameSequence> {
    core_data::FrameSequence::new(frames, alphabet).map_err(pyerr)
}

/// A set of frame sequences over one pitch alphabet.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Corpus {
    inner: core_data::Corpus,
}

#[pymethods]
impl Corpus {
    #[new]
    fn new(alphabet: usize, sequences: Vec<PyFrames>) -> PyResult<Self> {
        let seqs = sequences
            .into_iter()
            .map(|frames| to_sequence(frames, alphabet))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Corpus {
            inner: core_data::Corpus::new(alphabet, seqs).map_err(pyerr)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Corpus {
            inner: core_data::read_corpus(path).map_err(pyerr)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        core_data::write_corpus(&self.inner, path).map_err(pyerr)
    }

    #[getter]
    fn alphabet(&self) -> usize {
        self.inner.alphabet
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn sequences(&self) -> Vec<PyFrames> {
        self.inner
            .sequences
            .iter()
            .map(|s| s.frames.clone())
            .collect()
    }
}

/// The gated autoencoder: interval mappings between a context window and a
/// target frame.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Gae {
    inner: core_gae::GaeParams,
}

#[pymethods]
impl Gae {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let tensors = model_io::read_tensor_file(path).map_err(pyerr)?;
        Ok(Gae {
            inner: core_gae::GaeParams::from_named_tensors(&tensors, "gae", None).map_err(pyerr)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model_io::write_tensor_file(path, &self.inner.to_named_tensors("gae")).map_err(pyerr)
    }

    #[getter]
    fn context_len(&self) -> usize {
        self.inner.context_len()
    }

    #[getter]
    fn alphabet(&self) -> usize {
        self.inner.alphabet()
    }

    #[getter]
    fn mapping_size(&self) -> usize {
        self.inner.mapping_size()
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn infer_mapping(&self, context: PyFrames, target: Vec<u16>) -> PyResult<Vec<f64>> {
        core_gae::infer_mapping(&self.inner, &context, &target).map_err(pyerr)
    }

    #[pyo3(signature = (context, mapping, softmax = true))]
    fn reconstruct(&self, context: PyFrames, mapping: Vec<f64>, softmax: bool) -> PyResult<Vec<f64>> {
        let kind = if softmax {
            core_gae::OutputKind::Softmax
        } else {
            core_gae::OutputKind::Sigmoid
        };
        core_gae::reconstruct(&self.inner, &context, &mapping, kind).map_err(pyerr)
    }
}

/// A trained sequence model (recurrent gated autoencoder or baseline GRU).
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Model {
    inner: core_rnn::PitchModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: core_rnn::PitchModel::load(path).map_err(pyerr)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(pyerr)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            core_rnn::PitchModel::Rgae(_) => "rgae",
            core_rnn::PitchModel::Baseline(_) => "baseline",
        }
    }

    #[getter]
    fn alphabet(&self) -> usize {
        self.inner.alphabet()
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Teacher-forced prediction distributions for each next frame.
    fn forward(&self, frames: PyFrames, alphabet: usize) -> PyResult<Vec<Vec<f64>>> {
        let seq = to_sequence(frames, alphabet)?;
        self.inner.forward(&seq).map_err(pyerr)
    }

    /// Consume the primer, then generate frames by argmax feedback.
    fn continue_sequence(
        &self,
        primer: PyFrames,
        alphabet: usize,
        steps: usize,
    ) -> PyResult<PyFrames> {
        let seq = to_sequence(primer, alphabet)?;
        Ok(self
            .inner
            .continue_sequence(&seq, steps)
            .map_err(pyerr)?
            .frames)
    }
}

/// Generate a copy-and-shift dataset; returns (train, test, eval) corpora.
#[pyfunction]
#[pyo3(signature = (alphabet, fragment_lengths, train_per_cell, test_per_cell, eval_per_cell,
                    sequence_length, seed, schemes = None))]
#[allow(clippy::too_many_arguments)]
fn generate_scheme_dataset(
    alphabet: usize,
    fragment_lengths: Vec<usize>,
    train_per_cell: usize,
    test_per_cell: usize,
    eval_per_cell: usize,
    sequence_length: usize,
    seed: u64,
    schemes: Option<Vec<Vec<i32>>>,
) -> PyResult<(Corpus, Corpus, Corpus)> {
    let schemes = match schemes {
        Some(list) => list
            .into_iter()
            .map(core_data::TranspositionScheme::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(pyerr)?,
        None => core_data::default_schemes(),
    };
    let spec = core_data::SchemeDatasetSpec {
        schemes,
        fragment_lengths,
        train_per_cell,
        test_per_cell,
        eval_per_cell,
        sequence_length,
        alphabet,
        seed,
    };
    let (train, test, eval) =
        core_data::generate_scheme_dataset(&spec, &core_data::FragmentSource::RandomWalk)
            .map_err(pyerr)?;
    Ok((
        Corpus { inner: train },
        Corpus { inner: test },
        Corpus { inner: eval },
    ))
}

/// Pre-train a gated autoencoder; returns the model and the per-epoch loss
/// trace.
#[pyfunction]
#[pyo3(signature = (corpus, context_len, factors, mapping, epochs, seed,
                    learning_rate = 0.001, dropout = 0.0, augment = false))]
#[allow(clippy::too_many_arguments)]
fn pretrain_gae(
    corpus: &Corpus,
    context_len: usize,
    factors: usize,
    mapping: usize,
    epochs: usize,
    seed: u64,
    learning_rate: f64,
    dropout: f64,
    augment: bool,
) -> PyResult<(Gae, Vec<f64>)> {
    let mut params = core_gae::GaeParams::init(
        context_len,
        corpus.inner.alphabet,
        factors,
        mapping,
        seed,
    );
    let cfg = core_gae::GaePretrainConfig {
        epochs,
        dropout_rate: dropout,
        lr: LrSchedule::new(learning_rate, epochs),
        augment_transpose: augment,
        seed,
        ..Default::default()
    };
    let trace = core_gae::pretrain(&mut params, &corpus.inner, &cfg).map_err(pyerr)?;
    Ok((Gae { inner: params }, trace))
}

/// Train the recurrent gated autoencoder on top of a pre-trained GAE.
#[pyfunction]
#[pyo3(signature = (gae, corpus, hidden, epochs, seed, finetune_epochs = 0,
                    learning_rate = 0.001, dropout = 0.0, augment = false))]
#[allow(clippy::too_many_arguments)]
fn train_rgae(
    gae: &Gae,
    corpus: &Corpus,
    hidden: usize,
    epochs: usize,
    seed: u64,
    finetune_epochs: usize,
    learning_rate: f64,
    dropout: f64,
    augment: bool,
) -> PyResult<(Model, Vec<f64>)> {
    let mut model = core_rnn::RgaeModel::init(gae.inner.clone(), hidden, seed);
    let cfg = core_rnn::TrainConfig {
        epochs,
        finetune_epochs,
        lr: LrSchedule::new(learning_rate, epochs),
        dropout_rate: dropout,
        augment_transpose: augment,
        seed,
        ..Default::default()
    };
    let trace = core_rnn::rgae_train(&mut model, &corpus.inner, &cfg).map_err(pyerr)?;
    Ok((
        Model {
            inner: core_rnn::PitchModel::Rgae(model),
        },
        trace,
    ))
}

/// Train the absolute-pitch baseline GRU.
#[pyfunction]
#[pyo3(signature = (corpus, window, hidden, epochs, seed,
                    learning_rate = 0.001, dropout = 0.0, augment = false))]
#[allow(clippy::too_many_arguments)]
fn train_baseline(
    corpus: &Corpus,
    window: usize,
    hidden: usize,
    epochs: usize,
    seed: u64,
    learning_rate: f64,
    dropout: f64,
    augment: bool,
) -> PyResult<(Model, Vec<f64>)> {
    let mut model = core_rnn::BaselineRnn::init(window, corpus.inner.alphabet, hidden, seed);
    let cfg = core_rnn::TrainConfig {
        epochs,
        lr: LrSchedule::new(learning_rate, epochs),
        dropout_rate: dropout,
        augment_transpose: augment,
        seed,
        ..Default::default()
    };
    let trace = core_rnn::rnn_train(&mut model, &corpus.inner, &cfg).map_err(pyerr)?;
    Ok((
        Model {
            inner: core_rnn::PitchModel::Baseline(model),
        },
        trace,
    ))
}

/// Mean teacher-forced cross-entropy in bits plus per-sequence means.
#[pyfunction]
fn evaluate_ce(model: &Model, corpus: &Corpus) -> PyResult<(f64, Vec<f64>)> {
    core_eval::evaluate_ce(&model.inner, &corpus.inner).map_err(pyerr)
}

/// Continuation precision: (mean, pct_above_threshold, per_sequence).
#[pyfunction]
#[pyo3(signature = (model, corpus, primer_len = 64, threshold = 0.99))]
fn evaluate_continuation(
    model: &Model,
    corpus: &Corpus,
    primer_len: usize,
    threshold: f64,
) -> PyResult<(f64, f64, Vec<f64>)> {
    let stats =
        core_eval::evaluate_continuation(&model.inner, &corpus.inner, primer_len, threshold)
            .map_err(pyerr)?;
    Ok((
        stats.precision_mean,
        stats.pct_above_threshold,
        stats.per_sequence,
    ))
}

#[pyfunction]
fn shannon_entropy(p: Vec<f64>) -> PyResult<f64> {
    core_ensemble::shannon_entropy(&p).map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (p, entropy_floor = 1e-6))]
fn relative_entropy(p: Vec<f64>, entropy_floor: f64) -> PyResult<f64> {
    let cfg = core_ensemble::WeightedCombineConfig {
        bias: 0.5,
        entropy_floor,
    };
    core_ensemble::relative_entropy(&p, &cfg).map_err(pyerr)
}

/// Entropy-weighted geometric mean of prediction distributions.
#[pyfunction]
#[pyo3(signature = (dists, bias = 0.5, entropy_floor = 1e-6))]
fn combine(dists: Vec<Vec<f64>>, bias: f64, entropy_floor: f64) -> PyResult<Vec<f64>> {
    let cfg = core_ensemble::WeightedCombineConfig {
        bias,
        entropy_floor,
    };
    core_ensemble::combine(&dists, &cfg).map_err(pyerr)
}

/// Cyclic pitch-space shift of one frame.
#[pyfunction]
fn shift(frame: Vec<u16>, delta: i64, alphabet: usize) -> Vec<u16> {
    core_gae::shift(&frame, delta, alphabet)
}

#[pymodule]
fn rgae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Gae>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate_scheme_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain_gae, m)?)?;
    m.add_function(wrap_pyfunction!(train_rgae, m)?)?;
    m.add_function(wrap_pyfunction!(train_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_ce, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_continuation, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(shift, m)?)?;
    Ok(())
}
