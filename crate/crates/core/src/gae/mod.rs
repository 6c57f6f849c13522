//! Gated autoencoder over pitch frames.
//!
//! The model relates a context window of `n` frames to a target frame
//! through elementwise products of their filter responses: mapping
//! inference projects both inputs into a factor layer, multiplies them, and
//! encodes the result; reconstruction runs the same wiring backwards to
//! turn a mapping plus a context into a distribution over the next frame.
//! After transposition-invariance pre-training (see [`pretrain`]) the
//! mapping vector is an approximately transposition-invariant code for the
//! intervals between context and target.

mod pretrain;

pub use pretrain::{
    pretrain, prepare_pretrain_batch, pretrain_loss, pretrain_loss_and_grads, pretrain_step,
    GaeGrads, GaeOptState, GaePretrainConfig, PreparedPretrainBatch,
};

use crate::data::{shift_frame, Frame};
use crate::error::{Error, Result};
use crate::mathcore::{
    seeded_rng, sigmoid, snap_to_f32, softmax_in_place, softplus, Matrix,
};
use crate::model_io::NamedTensor;

/// A sparse input vector: explicit (index, value) pairs over an implicit
/// dense dimension. Context windows and target frames are one-hot or
/// dropout-scaled, so all projections reduce to a few row gathers.
#[derive(Debug, Clone, Default)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn push(&mut self, idx: u32, val: f64) {
        self.idx.push(idx);
        self.val.push(val);
    }
}

/// Output nonlinearity of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Independent per-pitch probabilities (polyphonic targets,
    /// pre-training).
    Sigmoid,
    /// One distribution over the pitch alphabet (monophonic prediction).
    Softmax,
}

/// Weights of the gated autoencoder.
///
/// The two input projections are stored transposed (`q_t`: [n*M x F],
/// `v_t`: [M x F]) so that one-hot inputs turn into contiguous row
/// gathers; `w_m` is [K x F]. The logical shapes Q: [F x n*M] and
/// V: [F x M] appear at the serialization boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeParams {
    context_len: usize,
    alphabet: usize,
    factors: usize,
    mapping_size: usize,
    pub(crate) q_t: Matrix,
    pub(crate) v_t: Matrix,
    pub(crate) w_m: Matrix,
}

impl GaeParams {
    pub fn init(
        context_len: usize,
        alphabet: usize,
        factors: usize,
        mapping_size: usize,
        seed: u64,
    ) -> Self {
        let n_in = context_len * alphabet;
        let mut rng = seeded_rng(seed);
        let q_t = Matrix::glorot_uniform(n_in, factors, n_in, factors, &mut rng);
        let v_t = Matrix::glorot_uniform(alphabet, factors, alphabet, factors, &mut rng);
        let w_m = Matrix::glorot_uniform(mapping_size, factors, factors, mapping_size, &mut rng);
        GaeParams {
            context_len,
            alphabet,
            factors,
            mapping_size,
            q_t,
            v_t,
            w_m,
        }
    }

    pub fn zeros(context_len: usize, alphabet: usize, factors: usize, mapping_size: usize) -> Self {
        GaeParams {
            context_len,
            alphabet,
            factors,
            mapping_size,
            q_t: Matrix::zeros(context_len * alphabet, factors),
            v_t: Matrix::zeros(alphabet, factors),
            w_m: Matrix::zeros(mapping_size, factors),
        }
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn mapping_size(&self) -> usize {
        self.mapping_size
    }

    pub fn param_count(&self) -> usize {
        self.q_t.data().len() + self.v_t.data().len() + self.w_m.data().len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.q_t.data());
        out.extend_from_slice(self.v_t.data());
        out.extend_from_slice(self.w_m.data());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let (a, rest) = flat.split_at(self.q_t.data().len());
        let (b, c) = rest.split_at(self.v_t.data().len());
        self.q_t.data_mut().copy_from_slice(a);
        self.v_t.data_mut().copy_from_slice(b);
        self.w_m.data_mut().copy_from_slice(c);
    }

    /// Project any logical Q/V column (stored row) whose norm exceeds the
    /// cap back onto it. The tiny margin keeps the norm under the cap even
    /// after values are snapped to f32.
    pub fn apply_norm_cap(&mut self, cap: f64) {
        for m in [&mut self.q_t, &mut self.v_t] {
            for r in 0..m.rows() {
                let norm = norm_of(m.row(r));
                if norm > cap {
                    let scale = cap * (1.0 - 1e-7) / norm;
                    for v in m.row_mut(r) {
                        *v *= scale;
                    }
                }
            }
        }
        snap_to_f32(self.q_t.data_mut());
        snap_to_f32(self.v_t.data_mut());
    }

    /// Largest column norm of the logical Q and V.
    pub fn max_col_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for m in [&self.q_t, &self.v_t] {
            for r in 0..m.rows() {
                best = best.max(norm_of(m.row(r)));
            }
        }
        best
    }

    pub fn to_named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        vec![
            NamedTensor::from_matrix(
                format!("{prefix}.q"),
                &self.q_t.transposed(), // logical F x n*M
            ),
            NamedTensor::from_matrix(format!("{prefix}.v"), &self.v_t.transposed()),
            NamedTensor::from_matrix(format!("{prefix}.w_m"), &self.w_m),
        ]
    }

    pub fn from_named_tensors(
        tensors: &[NamedTensor],
        prefix: &str,
        context_len_hint: Option<usize>,
    ) -> Result<Self> {
        let q = NamedTensor::find(tensors, &format!("{prefix}.q"))?.to_matrix()?;
        let v = NamedTensor::find(tensors, &format!("{prefix}.v"))?.to_matrix()?;
        let w_m = NamedTensor::find(tensors, &format!("{prefix}.w_m"))?.to_matrix()?;
        let factors = q.rows();
        let alphabet = v.cols();
        if v.rows() != factors || w_m.cols() != factors {
            return Err(Error::ModelFormat(
                "inconsistent factor dimension across gae tensors".into(),
            ));
        }
        if alphabet == 0 || q.cols() % alphabet != 0 {
            return Err(Error::ModelFormat(format!(
                "q input dimension {} is not a multiple of the alphabet {}",
                q.cols(),
                alphabet
            )));
        }
        let context_len = q.cols() / alphabet;
        if let Some(hint) = context_len_hint {
            if hint != context_len {
                return Err(Error::ModelFormat(format!(
                    "context length {} in file, expected {}",
                    context_len, hint
                )));
            }
        }
        Ok(GaeParams {
            context_len,
            alphabet,
            factors,
            mapping_size: w_m.rows(),
            q_t: q.transposed(),
            v_t: v.transposed(),
            w_m,
        })
    }

    fn check_window(&self, ctx: &[Frame]) -> Result<()> {
        if ctx.len() != self.context_len {
            return Err(Error::ShapeMismatch(format!(
                "context window has {} frames, model expects {}",
                ctx.len(),
                self.context_len
            )));
        }
        for f in ctx {
            for &p in f {
                if p as usize >= self.alphabet {
                    return Err(Error::ShapeMismatch(format!(
                        "context pitch {} out of range [0, {})",
                        p, self.alphabet
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        for &p in frame {
            if p as usize >= self.alphabet {
                return Err(Error::ShapeMismatch(format!(
                    "pitch {} out of range [0, {})",
                    p, self.alphabet
                )));
            }
        }
        Ok(())
    }
}

fn norm_of(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flatten a window of frames into a sparse one-hot vector over n*M.
pub(crate) fn window_to_sparse(ctx: &[Frame], alphabet: usize) -> SparseVec {
    let mut sv = SparseVec::default();
    for (w, frame) in ctx.iter().enumerate() {
        for &p in frame {
            sv.push((w * alphabet + p as usize) as u32, 1.0);
        }
    }
    sv
}

pub(crate) fn frame_to_sparse(frame: &Frame) -> SparseVec {
    let mut sv = SparseVec::default();
    for &p in frame {
        sv.push(p as u32, 1.0);
    }
    sv
}

/// Gather rows: out = sum_i val_i * W_t[idx_i, :].
pub(crate) fn project_sparse(w_t: &Matrix, sv: &SparseVec, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (&i, &v) in sv.idx.iter().zip(&sv.val) {
        let row = w_t.row(i as usize);
        for (o, &r) in out.iter_mut().zip(row) {
            *o += v * r;
        }
    }
}

/// Mapping inference: softplus(W_m ((Q ctx) . (V target))).
pub fn infer_mapping(params: &GaeParams, ctx: &[Frame], target: &Frame) -> Result<Vec<f64>> {
    params.check_window(ctx)?;
    params.check_frame(target)?;
    let ctx_sv = window_to_sparse(ctx, params.alphabet);
    let tgt_sv = frame_to_sparse(target);
    Ok(infer_mapping_sparse(params, &ctx_sv, &tgt_sv).mapping)
}

pub(crate) struct MappingTrace {
    pub ctx_factors: Vec<f64>,    // Q ctx
    pub target_factors: Vec<f64>, // V target
    pub pre: Vec<f64>,            // W_m (a . b)
    pub mapping: Vec<f64>,        // softplus(pre)
}

pub(crate) fn infer_mapping_sparse(
    params: &GaeParams,
    ctx: &SparseVec,
    target: &SparseVec,
) -> MappingTrace {
    let f = params.factors;
    let mut a = vec![0.0; f];
    let mut b = vec![0.0; f];
    project_sparse(&params.q_t, ctx, &mut a);
    project_sparse(&params.v_t, target, &mut b);
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mut pre = vec![0.0; params.mapping_size];
    params.w_m.matvec(&prod, &mut pre);
    let mapping = softplus(&pre);
    MappingTrace {
        ctx_factors: a,
        target_factors: b,
        pre,
        mapping,
    }
}

/// Reconstruction: sigma(V^T ((W_m^T mapping) . (Q ctx))) with sigma either
/// the elementwise sigmoid or the softmax over the pitch alphabet.
pub fn reconstruct(
    params: &GaeParams,
    ctx: &[Frame],
    mapping: &[f64],
    output: OutputKind,
) -> Result<Vec<f64>> {
    params.check_window(ctx)?;
    if mapping.len() != params.mapping_size {
        return Err(Error::ShapeMismatch(format!(
            "mapping has {} entries, model expects {}",
            mapping.len(),
            params.mapping_size
        )));
    }
    let ctx_sv = window_to_sparse(ctx, params.alphabet);
    Ok(reconstruct_sparse(params, &ctx_sv, mapping, output).output)
}

pub(crate) struct ReconTrace {
    pub ctx_factors: Vec<f64>,    // Q ctx
    pub mapped_factors: Vec<f64>, // W_m^T mapping
    pub gated: Vec<f64>,          // (W_m^T mapping) . (Q ctx)
    pub output: Vec<f64>,
}

pub(crate) fn reconstruct_sparse(
    params: &GaeParams,
    ctx: &SparseVec,
    mapping: &[f64],
    output: OutputKind,
) -> ReconTrace {
    let f = params.factors;
    let mut a = vec![0.0; f];
    project_sparse(&params.q_t, ctx, &mut a);
    let mut u = vec![0.0; f];
    params.w_m.matvec_t_add(mapping, &mut u);
    let gated: Vec<f64> = u.iter().zip(&a).map(|(x, y)| x * y).collect();
    let mut pre = vec![0.0; params.alphabet];
    // v_t is [M x F]: row dot products give V^T gated.
    for j in 0..params.alphabet {
        pre[j] = dot(params.v_t.row(j), &gated);
    }
    let out = match output {
        OutputKind::Sigmoid => sigmoid(&pre),
        OutputKind::Softmax => {
            softmax_in_place(&mut pre);
            pre
        }
    };
    ReconTrace {
        ctx_factors: a,
        mapped_factors: u,
        gated,
        output: out,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Cyclic pitch-space shift of one frame (the output bit at index i takes
/// the input bit at (i + delta) mod M).
pub fn shift(frame: &Frame, delta: i64, alphabet: usize) -> Frame {
    shift_frame(frame, delta, alphabet)
}

/// Shift every frame of a window independently.
pub fn shift_window(ctx: &[Frame], delta: i64, alphabet: usize) -> Vec<Frame> {
    ctx.iter().map(|f| shift_frame(f, delta, alphabet)).collect()
}

pub(crate) fn shift_sparse(sv: &SparseVec, delta: i64, alphabet: usize) -> SparseVec {
    let m = alphabet as i64;
    let idx = sv
        .idx
        .iter()
        .map(|&i| {
            let w = i as i64 / m;
            let p = i as i64 % m;
            (w * m + (p - delta).rem_euclid(m)) as u32
        })
        .collect();
    SparseVec {
        idx,
        val: sv.val.clone(),
    }
}

/// Mean binary cross-entropy in bits over the components of one frame:
/// -(1/N) sum_n [x_n log2 r_n + (1 - x_n) log2(1 - r_n)], with the
/// reconstruction clamped away from {0, 1}.
pub fn binary_cross_entropy(target: &[f64], recon: &[f64]) -> f64 {
    assert_eq!(target.len(), recon.len(), "bce length");
    let n = target.len() as f64;
    let mut acc = 0.0;
    for (&x, &r) in target.iter().zip(recon) {
        let r = r.clamp(1e-12, 1.0 - 1e-12);
        acc += x * r.log2() + (1.0 - x) * (1.0 - r).log2();
    }
    -acc / n
}

pub(crate) fn frame_to_dense(frame: &Frame, alphabet: usize) -> Vec<f64> {
    let mut out = vec![0.0; alphabet];
    for &p in frame {
        out[p as usize] = 1.0;
    }
    out
}

/// Sparsity and column-norm-deviation penalties used during pre-training.
///
/// sparsity = weight * sum_k (mean_batch(m_k) - target)^2
/// norm_dev = weight * sum over columns of Q and V of (norm - mean norm)^2
pub fn regularization_terms(
    params: &GaeParams,
    batch_mappings: &[Vec<f64>],
    config: &GaePretrainConfig,
) -> (f64, f64) {
    let sparsity = if batch_mappings.is_empty() {
        0.0
    } else {
        let k = params.mapping_size;
        let b = batch_mappings.len() as f64;
        let mut acc = 0.0;
        for ki in 0..k {
            let mean: f64 = batch_mappings.iter().map(|m| m[ki]).sum::<f64>() / b;
            let d = mean - config.sparsity_target;
            acc += d * d;
        }
        config.sparsity_weight * acc
    };

    let mut norm_dev = 0.0;
    for m in [&params.q_t, &params.v_t] {
        let norms: Vec<f64> = (0..m.rows()).map(|r| norm_of(m.row(r))).collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        norm_dev += norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>();
    }
    (sparsity, config.norm_deviation_weight * norm_dev)
}
