//! The two sequence models and their shared prediction protocol: process
//! one frame at a time, after each frame emit a distribution over the next
//! one. Free-running continuation feeds argmax picks back as input.

use super::gru::{gru_step_batch, GruParams};
use crate::data::{Frame, FrameSequence, SeqMeta};
use crate::error::{Error, Result};
use crate::gae::{
    frame_to_sparse, infer_mapping_sparse, reconstruct_sparse, GaeParams, OutputKind, SparseVec,
};
use crate::mathcore::{softplus_scalar, BatchMat};
use crate::model_io::{read_tensor_file, write_tensor_file, NamedTensor};
use std::path::Path;

/// -log2 of the probability assigned to the observed pitch, clamped away
/// from zero.
pub fn categorical_cross_entropy(target_index: usize, dist: &[f64]) -> f64 {
    -dist[target_index].max(1e-12).log2()
}

/// GRU over gated-autoencoder mappings. The GRU's input and output live in
/// the GAE's mapping space.
#[derive(Debug, Clone, PartialEq)]
pub struct RgaeModel {
    pub gae: GaeParams,
    pub gru: GruParams,
}

impl RgaeModel {
    pub fn new(gae: GaeParams, gru: GruParams) -> Result<Self> {
        if gru.input_dim() != gae.mapping_size() || gru.output_dim() != gae.mapping_size() {
            return Err(Error::ShapeMismatch(format!(
                "gru dims in={} out={} must equal the gae mapping size {}",
                gru.input_dim(),
                gru.output_dim(),
                gae.mapping_size()
            )));
        }
        Ok(RgaeModel { gae, gru })
    }

    pub fn init(gae: GaeParams, hidden: usize, seed: u64) -> Self {
        let k = gae.mapping_size();
        RgaeModel {
            gru: GruParams::init(k, hidden, k, seed),
            gae,
        }
    }

    pub fn param_count(&self) -> usize {
        self.gae.param_count() + self.gru.param_count()
    }
}

/// Absolute-pitch GRU baseline: the input at each step is the concatenated
/// window of the last `window` frames, the output a softmax over pitches.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRnn {
    pub window: usize,
    pub alphabet: usize,
    pub gru: GruParams,
}

impl BaselineRnn {
    pub fn new(window: usize, alphabet: usize, gru: GruParams) -> Result<Self> {
        if gru.input_dim() != window * alphabet || gru.output_dim() != alphabet {
            return Err(Error::ShapeMismatch(format!(
                "gru dims in={} out={} inconsistent with window {} over alphabet {}",
                gru.input_dim(),
                gru.output_dim(),
                window,
                alphabet
            )));
        }
        Ok(BaselineRnn {
            window,
            alphabet,
            gru,
        })
    }

    pub fn init(window: usize, alphabet: usize, hidden: usize, seed: u64) -> Self {
        BaselineRnn {
            window,
            alphabet,
            gru: GruParams::init(window * alphabet, hidden, alphabet, seed),
        }
    }

    pub fn param_count(&self) -> usize {
        self.gru.param_count()
    }
}

/// Rolling context of the last `capacity` frames, oldest first, zero-padded
/// with empty frames until enough real frames arrived.
#[derive(Debug, Clone)]
struct RollingWindow {
    frames: std::collections::VecDeque<Frame>,
    capacity: usize,
}

impl RollingWindow {
    fn new(capacity: usize) -> Self {
        let mut frames = std::collections::VecDeque::with_capacity(capacity);
        for _ in 0..capacity {
            frames.push_back(Frame::new());
        }
        RollingWindow { frames, capacity }
    }

    fn push(&mut self, frame: Frame) {
        self.frames.pop_front();
        self.frames.push_back(frame);
        debug_assert_eq!(self.frames.len(), self.capacity);
    }

    fn to_sparse(&self, alphabet: usize) -> SparseVec {
        let mut sv = SparseVec::default();
        for (w, frame) in self.frames.iter().enumerate() {
            for &p in frame {
                sv.push((w * alphabet + p as usize) as u32, 1.0);
            }
        }
        sv
    }
}

/// Incremental prediction state of either model.
#[derive(Debug, Clone)]
enum StepState {
    Rgae {
        /// Window of frames strictly before the current position.
        ctx: RollingWindow,
        h: Vec<f64>,
    },
    Baseline {
        /// Window of frames including the current position.
        win: RollingWindow,
        h: Vec<f64>,
    },
}

/// A trained sequence model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum PitchModel {
    Rgae(RgaeModel),
    Baseline(BaselineRnn),
}

impl PitchModel {
    pub fn alphabet(&self) -> usize {
        match self {
            PitchModel::Rgae(m) => m.gae.alphabet(),
            PitchModel::Baseline(m) => m.alphabet,
        }
    }

    /// Minimum primer length for continuation.
    pub fn min_primer(&self) -> usize {
        match self {
            PitchModel::Rgae(m) => m.gae.context_len(),
            PitchModel::Baseline(m) => m.window,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            PitchModel::Rgae(m) => m.param_count(),
            PitchModel::Baseline(m) => m.param_count(),
        }
    }

    fn fresh_state(&self) -> StepState {
        match self {
            PitchModel::Rgae(m) => StepState::Rgae {
                ctx: RollingWindow::new(m.gae.context_len()),
                h: vec![0.0; m.gru.hidden()],
            },
            PitchModel::Baseline(m) => StepState::Baseline {
                win: RollingWindow::new(m.window),
                h: vec![0.0; m.gru.hidden()],
            },
        }
    }

    /// Consume one frame, return the distribution over the next frame.
    fn step(&self, state: &mut StepState, frame: &Frame) -> Vec<f64> {
        match (self, state) {
            (PitchModel::Rgae(m), StepState::Rgae { ctx, h }) => {
                let alphabet = m.gae.alphabet();
                let ctx_sv = ctx.to_sparse(alphabet);
                let target_sv = frame_to_sparse(frame);
                let mt = infer_mapping_sparse(&m.gae, &ctx_sv, &target_sv);
                *h = gru_one(&m.gru, &mt.mapping, h);
                let mut pred_mapping = vec![0.0; m.gru.output_dim()];
                for (k, out) in pred_mapping.iter_mut().enumerate() {
                    *out = softplus_scalar(dot(m.gru.u_o.row(k), h));
                }
                ctx.push(frame.clone());
                let decode_sv = ctx.to_sparse(alphabet);
                reconstruct_sparse(&m.gae, &decode_sv, &pred_mapping, OutputKind::Softmax).output
            }
            (PitchModel::Baseline(m), StepState::Baseline { win, h }) => {
                win.push(frame.clone());
                let x = win.to_sparse(m.alphabet);
                let mut dense = vec![0.0; m.gru.input_dim()];
                for (&i, &v) in x.idx.iter().zip(&x.val) {
                    dense[i as usize] = v;
                }
                *h = gru_one(&m.gru, &dense, h);
                let mut pre = vec![0.0; m.alphabet];
                for (j, out) in pre.iter_mut().enumerate() {
                    *out = dot(m.gru.u_o.row(j), h);
                }
                crate::mathcore::softmax(&pre)
            }
            _ => unreachable!("state kind matches model kind"),
        }
    }

    /// Teacher-forced forward pass: distribution over frame t+1 for every
    /// t in [0, len-1), conditioning on the ground-truth prefix.
    pub fn forward(&self, seq: &FrameSequence) -> Result<Vec<Vec<f64>>> {
        if seq.len() < 2 {
            return Err(Error::InvalidArgument(
                "sequence must have at least 2 frames".into(),
            ));
        }
        if seq.alphabet != self.alphabet() {
            return Err(Error::ShapeMismatch(format!(
                "sequence alphabet {} vs model alphabet {}",
                seq.alphabet,
                self.alphabet()
            )));
        }
        if !seq.is_monophonic() {
            return Err(Error::InvalidArgument(
                "prediction requires monophonic frames".into(),
            ));
        }
        let mut state = self.fresh_state();
        let mut out = Vec::with_capacity(seq.len() - 1);
        for (t, frame) in seq.frames.iter().enumerate() {
            let p = self.step(&mut state, frame);
            if t + 1 < seq.len() {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Consume `primer` with teacher forcing, then generate `steps` frames
    /// by argmax, feeding each pick back as input. Deterministic; ties
    /// resolve to the lowest pitch.
    pub fn continue_sequence(&self, primer: &FrameSequence, steps: usize) -> Result<FrameSequence> {
        if primer.len() < self.min_primer() {
            return Err(Error::InvalidArgument(format!(
                "primer has {} frames, model needs at least {}",
                primer.len(),
                self.min_primer()
            )));
        }
        if primer.alphabet != self.alphabet() {
            return Err(Error::ShapeMismatch(format!(
                "primer alphabet {} vs model alphabet {}",
                primer.alphabet,
                self.alphabet()
            )));
        }
        let mut state = self.fresh_state();
        let mut dist = Vec::new();
        for frame in &primer.frames {
            dist = self.step(&mut state, frame);
        }
        let mut frames = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = vec![argmax(&dist) as u16];
            dist = self.step(&mut state, &next);
            frames.push(next);
        }
        Ok(FrameSequence {
            frames,
            alphabet: primer.alphabet,
            meta: SeqMeta::default(),
        })
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        match self {
            PitchModel::Rgae(m) => {
                let mut t = m.gae.to_named_tensors("gae");
                t.extend(m.gru.to_named_tensors("gru"));
                t
            }
            PitchModel::Baseline(m) => m.gru.to_named_tensors("rnn"),
        }
    }

    pub fn from_named_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        if tensors.iter().any(|t| t.name.starts_with("gru.")) {
            let gae = GaeParams::from_named_tensors(tensors, "gae", None)?;
            let gru = GruParams::from_named_tensors(tensors, "gru")?;
            Ok(PitchModel::Rgae(RgaeModel::new(gae, gru)?))
        } else if tensors.iter().any(|t| t.name.starts_with("rnn.")) {
            let gru = GruParams::from_named_tensors(tensors, "rnn")?;
            let alphabet = gru.output_dim();
            if alphabet == 0 || gru.input_dim() % alphabet != 0 {
                return Err(Error::ModelFormat(format!(
                    "baseline input dim {} is not a multiple of the alphabet {}",
                    gru.input_dim(),
                    alphabet
                )));
            }
            let window = gru.input_dim() / alphabet;
            Ok(PitchModel::Baseline(BaselineRnn::new(window, alphabet, gru)?))
        } else {
            Err(Error::ModelFormat(
                "file holds neither an rgae nor a baseline model (a pre-trained \
                 gae alone cannot predict sequences)"
                    .into(),
            ))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor_file(path, &self.to_named_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PitchModel::from_named_tensors(&read_tensor_file(path)?)
    }
}

fn gru_one(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut xb = BatchMat::zeros(p.input_dim(), 1);
    xb.data_mut().copy_from_slice(x);
    let mut hb = BatchMat::zeros(p.hidden(), 1);
    hb.data_mut().copy_from_slice(h);
    gru_step_batch(p, &xb, &hb).h.data().to_vec()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Lowest-index maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
