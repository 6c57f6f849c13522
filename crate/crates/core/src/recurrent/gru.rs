//! Gated recurrent unit over batched column vectors.
//!
//! Input-side weights are stored transposed ([D_in x H]) so that one-hot
//! and dropout-scaled inputs reduce to contiguous row gathers; recurrent
//! weights are row-major [H x H]. `BatchMat` columns carry independent
//! sequences in lockstep, which keeps the big recurrent matrices streaming
//! once per time step instead of once per sequence.

use crate::error::{Error, Result};
use crate::mathcore::{seeded_rng, sigmoid_scalar, BatchMat, Matrix};
use crate::model_io::NamedTensor;

/// GRU weights plus the output projection `u_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    pub(crate) w_z_t: Matrix,
    pub(crate) w_r_t: Matrix,
    pub(crate) w_h_t: Matrix,
    pub(crate) u_z: Matrix,
    pub(crate) u_r: Matrix,
    pub(crate) u_h: Matrix,
    pub(crate) b_z: Vec<f64>,
    pub(crate) b_r: Vec<f64>,
    pub(crate) b_h: Vec<f64>,
    pub(crate) u_o: Matrix,
}

impl GruParams {
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let w = |rows, cols, fi, fo, rng: &mut _| Matrix::glorot_uniform(rows, cols, fi, fo, rng);
        GruParams {
            input_dim,
            hidden,
            output_dim,
            w_z_t: w(input_dim, hidden, input_dim, hidden, &mut rng),
            w_r_t: w(input_dim, hidden, input_dim, hidden, &mut rng),
            w_h_t: w(input_dim, hidden, input_dim, hidden, &mut rng),
            u_z: w(hidden, hidden, hidden, hidden, &mut rng),
            u_r: w(hidden, hidden, hidden, hidden, &mut rng),
            u_h: w(hidden, hidden, hidden, hidden, &mut rng),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
            u_o: w(output_dim, hidden, hidden, output_dim, &mut rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        GruParams {
            input_dim,
            hidden,
            output_dim,
            w_z_t: Matrix::zeros(input_dim, hidden),
            w_r_t: Matrix::zeros(input_dim, hidden),
            w_h_t: Matrix::zeros(input_dim, hidden),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
            u_o: Matrix::zeros(output_dim, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn param_count(&self) -> usize {
        3 * self.input_dim * self.hidden
            + 3 * self.hidden * self.hidden
            + 3 * self.hidden
            + self.output_dim * self.hidden
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in [
            &self.w_z_t, &self.w_r_t, &self.w_h_t, &self.u_z, &self.u_r, &self.u_h,
        ] {
            out.extend_from_slice(m.data());
        }
        out.extend_from_slice(&self.b_z);
        out.extend_from_slice(&self.b_r);
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(self.u_o.data());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut off = 0;
        for m in [
            &mut self.w_z_t, &mut self.w_r_t, &mut self.w_h_t, &mut self.u_z, &mut self.u_r,
            &mut self.u_h,
        ] {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        let hidden = self.hidden;
        for b in [&mut self.b_z, &mut self.b_r, &mut self.b_h] {
            b.copy_from_slice(&flat[off..off + hidden]);
            off += hidden;
        }
        let len = self.u_o.data().len();
        self.u_o.data_mut().copy_from_slice(&flat[off..off + len]);
    }

    /// Serialize in the logical orientation (W_* as [H x D_in]).
    pub fn to_named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        vec![
            NamedTensor::from_matrix(format!("{prefix}.w_z"), &self.w_z_t.transposed()),
            NamedTensor::from_matrix(format!("{prefix}.w_r"), &self.w_r_t.transposed()),
            NamedTensor::from_matrix(format!("{prefix}.w_h"), &self.w_h_t.transposed()),
            NamedTensor::from_matrix(format!("{prefix}.u_z"), &self.u_z),
            NamedTensor::from_matrix(format!("{prefix}.u_r"), &self.u_r),
            NamedTensor::from_matrix(format!("{prefix}.u_h"), &self.u_h),
            NamedTensor::from_vector(format!("{prefix}.b_z"), &self.b_z),
            NamedTensor::from_vector(format!("{prefix}.b_r"), &self.b_r),
            NamedTensor::from_vector(format!("{prefix}.b_h"), &self.b_h),
            NamedTensor::from_matrix(format!("{prefix}.u_o"), &self.u_o),
        ]
    }

    pub fn from_named_tensors(tensors: &[NamedTensor], prefix: &str) -> Result<Self> {
        let mat = |name: &str| -> Result<Matrix> {
            NamedTensor::find(tensors, &format!("{prefix}.{name}"))?.to_matrix()
        };
        let vecf = |name: &str| -> Result<Vec<f64>> {
            NamedTensor::find(tensors, &format!("{prefix}.{name}"))?.to_vector()
        };
        let w_z = mat("w_z")?;
        let hidden = w_z.rows();
        let input_dim = w_z.cols();
        let u_o = mat("u_o")?;
        let out = GruParams {
            input_dim,
            hidden,
            output_dim: u_o.rows(),
            w_z_t: w_z.transposed(),
            w_r_t: mat("w_r")?.transposed(),
            w_h_t: mat("w_h")?.transposed(),
            u_z: mat("u_z")?,
            u_r: mat("u_r")?,
            u_h: mat("u_h")?,
            b_z: vecf("b_z")?,
            b_r: vecf("b_r")?,
            b_h: vecf("b_h")?,
            u_o,
        };
        if out.u_z.rows() != out.hidden
            || out.u_z.cols() != out.hidden
            || out.b_z.len() != out.hidden
            || out.u_o.cols() != out.hidden
        {
            return Err(Error::ModelFormat(format!(
                "inconsistent hidden dimension in '{prefix}' tensors"
            )));
        }
        Ok(out)
    }
}

/// Activations of one GRU step, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct GruStepCache {
    pub z: BatchMat,
    pub r: BatchMat,
    pub g: BatchMat,
    pub h: BatchMat,
}

/// One batched step. `x` holds the (already projected or raw dense) inputs;
/// sparse inputs instead enter through `pre_*` via
/// [`add_sparse_input`] before calling [`gru_step_pre`].
pub(crate) fn gru_step_batch(
    p: &GruParams,
    x: &BatchMat,
    h_prev: &BatchMat,
) -> GruStepCache {
    let nb = x.batch();
    let mut pre_z = BatchMat::zeros(p.hidden, nb);
    let mut pre_r = BatchMat::zeros(p.hidden, nb);
    let mut pre_h = BatchMat::zeros(p.hidden, nb);
    pre_z.affine_t_add(&p.w_z_t, x);
    pre_r.affine_t_add(&p.w_r_t, x);
    pre_h.affine_t_add(&p.w_h_t, x);
    gru_step_pre(p, pre_z, pre_r, pre_h, h_prev)
}

/// Scatter a sparse input into the three gate preactivations.
pub(crate) fn add_sparse_input(
    p: &GruParams,
    pre_z: &mut BatchMat,
    pre_r: &mut BatchMat,
    pre_h: &mut BatchMat,
    b: usize,
    idx: &[u32],
    val: &[f64],
) {
    let nb = pre_z.batch();
    let h = p.hidden;
    for (&i, &v) in idx.iter().zip(val) {
        let rz = p.w_z_t.row(i as usize);
        let rr = p.w_r_t.row(i as usize);
        let rh = p.w_h_t.row(i as usize);
        let dz = pre_z.data_mut();
        for j in 0..h {
            dz[j * nb + b] += v * rz[j];
        }
        let dr = pre_r.data_mut();
        for j in 0..h {
            dr[j * nb + b] += v * rr[j];
        }
        let dh = pre_h.data_mut();
        for j in 0..h {
            dh[j * nb + b] += v * rh[j];
        }
    }
}

/// Finish a GRU step from input-projected preactivations:
///   z = sigmoid(pre_z + U_z h + b_z)
///   r = sigmoid(pre_r + U_r h + b_r)
///   g = tanh(pre_h + U_h (r . h) + b_h)
///   h' = z . h + (1 - z) . g
pub(crate) fn gru_step_pre(
    p: &GruParams,
    mut pre_z: BatchMat,
    mut pre_r: BatchMat,
    mut pre_h: BatchMat,
    h_prev: &BatchMat,
) -> GruStepCache {
    let nb = pre_z.batch();
    let hd = p.hidden;
    pre_z.affine_add(&p.u_z, h_prev);
    pre_r.affine_add(&p.u_r, h_prev);
    for j in 0..hd {
        let bz = p.b_z[j];
        let br = p.b_r[j];
        for b in 0..nb {
            let z = sigmoid_scalar(pre_z.at(j, b) + bz);
            *pre_z.at_mut(j, b) = z;
            let r = sigmoid_scalar(pre_r.at(j, b) + br);
            *pre_r.at_mut(j, b) = r;
        }
    }
    let z = pre_z;
    let r = pre_r;

    let mut rh = BatchMat::zeros(hd, nb);
    for j in 0..hd * nb {
        rh.data_mut()[j] = r.data()[j] * h_prev.data()[j];
    }
    pre_h.affine_add(&p.u_h, &rh);
    for j in 0..hd {
        let bh = p.b_h[j];
        for b in 0..nb {
            *pre_h.at_mut(j, b) = (pre_h.at(j, b) + bh).tanh();
        }
    }
    let g = pre_h;

    let mut h = BatchMat::zeros(hd, nb);
    for j in 0..hd * nb {
        let zv = z.data()[j];
        h.data_mut()[j] = zv * h_prev.data()[j] + (1.0 - zv) * g.data()[j];
    }
    GruStepCache { z, r, g, h }
}

/// Gradient buffers matching [`GruParams`].
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub w_z_t: Matrix,
    pub w_r_t: Matrix,
    pub w_h_t: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub u_o: Matrix,
}

impl GruGrads {
    /// Flattened in the same order as [`GruParams::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in [
            &self.w_z_t, &self.w_r_t, &self.w_h_t, &self.u_z, &self.u_r, &self.u_h,
        ] {
            out.extend_from_slice(m.data());
        }
        out.extend_from_slice(&self.b_z);
        out.extend_from_slice(&self.b_r);
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(self.u_o.data());
        out
    }

    pub fn zeros_like(p: &GruParams) -> Self {
        GruGrads {
            w_z_t: Matrix::zeros(p.input_dim, p.hidden),
            w_r_t: Matrix::zeros(p.input_dim, p.hidden),
            w_h_t: Matrix::zeros(p.input_dim, p.hidden),
            u_z: Matrix::zeros(p.hidden, p.hidden),
            u_r: Matrix::zeros(p.hidden, p.hidden),
            u_h: Matrix::zeros(p.hidden, p.hidden),
            b_z: vec![0.0; p.hidden],
            b_r: vec![0.0; p.hidden],
            b_h: vec![0.0; p.hidden],
            u_o: Matrix::zeros(p.output_dim, p.hidden),
        }
    }
}

/// Backward through one step. `dh` is the incoming gradient on this step's
/// output h; on return it holds the gradient on h_prev. When `dx` is given
/// it receives the gradient on the dense input; the returned gate
/// preactivation gradients let the caller scatter into sparse input
/// weights.
pub(crate) struct GruBackwardOut {
    pub da_z: BatchMat,
    pub da_r: BatchMat,
    pub da_g: BatchMat,
}

pub(crate) fn gru_backward_step(
    p: &GruParams,
    cache: &GruStepCache,
    h_prev: &BatchMat,
    dh: &mut BatchMat,
    grads: &mut GruGrads,
    dx: Option<&mut BatchMat>,
) -> GruBackwardOut {
    let nb = dh.batch();
    let hd = p.hidden;
    let len = hd * nb;

    let mut da_z = BatchMat::zeros(hd, nb);
    let mut da_g = BatchMat::zeros(hd, nb);
    for j in 0..len {
        let z = cache.z.data()[j];
        let g = cache.g.data()[j];
        let hp = h_prev.data()[j];
        let d = dh.data()[j];
        da_z.data_mut()[j] = d * (hp - g) * z * (1.0 - z);
        da_g.data_mut()[j] = d * (1.0 - z) * (1.0 - g * g);
    }

    // dhr = U_h^T da_g, needed for both the reset gate and h_prev.
    let mut dhr = BatchMat::zeros(hd, nb);
    dhr.affine_t_add(&p.u_h, &da_g);

    let mut da_r = BatchMat::zeros(hd, nb);
    for j in 0..len {
        let r = cache.r.data()[j];
        da_r.data_mut()[j] = dhr.data()[j] * h_prev.data()[j] * r * (1.0 - r);
    }

    // Recurrent weight gradients (rank-B updates).
    BatchMat::accumulate_outer(&mut grads.u_z, &da_z, h_prev);
    BatchMat::accumulate_outer(&mut grads.u_r, &da_r, h_prev);
    let mut rh = BatchMat::zeros(hd, nb);
    for j in 0..len {
        rh.data_mut()[j] = cache.r.data()[j] * h_prev.data()[j];
    }
    BatchMat::accumulate_outer(&mut grads.u_h, &da_g, &rh);
    for j in 0..hd {
        for b in 0..nb {
            grads.b_z[j] += da_z.at(j, b);
            grads.b_r[j] += da_r.at(j, b);
            grads.b_h[j] += da_g.at(j, b);
        }
    }

    // Gradient on h_prev: through the convex combination, both gates, and
    // the reset path.
    let mut dh_prev = BatchMat::zeros(hd, nb);
    for j in 0..len {
        dh_prev.data_mut()[j] =
            dh.data()[j] * cache.z.data()[j] + dhr.data()[j] * cache.r.data()[j];
    }
    dh_prev.affine_t_add(&p.u_z, &da_z);
    dh_prev.affine_t_add(&p.u_r, &da_r);

    if let Some(dx) = dx {
        // din = W_z^T da_z + ... : with transposed storage this is a plain
        // affine application of each [D_in x H] matrix.
        dx.affine_add(&p.w_z_t, &da_z);
        dx.affine_add(&p.w_r_t, &da_r);
        dx.affine_add(&p.w_h_t, &da_g);
    }

    *dh = dh_prev;
    GruBackwardOut { da_z, da_r, da_g }
}

/// Accumulate input-weight gradients for a dense input batch.
pub(crate) fn accumulate_input_grads_dense(
    grads: &mut GruGrads,
    x: &BatchMat,
    back: &GruBackwardOut,
) {
    BatchMat::accumulate_outer(&mut grads.w_z_t, x, &back.da_z);
    BatchMat::accumulate_outer(&mut grads.w_r_t, x, &back.da_r);
    BatchMat::accumulate_outer(&mut grads.w_h_t, x, &back.da_g);
}

/// Accumulate input-weight gradients for one sparse input column.
pub(crate) fn accumulate_input_grads_sparse(
    grads: &mut GruGrads,
    b: usize,
    idx: &[u32],
    val: &[f64],
    back: &GruBackwardOut,
) {
    let nb = back.da_z.batch();
    let hd = back.da_z.dim();
    for (&i, &v) in idx.iter().zip(val) {
        let rz = grads.w_z_t.row_mut(i as usize);
        for j in 0..hd {
            rz[j] += v * back.da_z.data()[j * nb + b];
        }
        let rr = grads.w_r_t.row_mut(i as usize);
        for j in 0..hd {
            rr[j] += v * back.da_r.data()[j * nb + b];
        }
        let rh = grads.w_h_t.row_mut(i as usize);
        for j in 0..hd {
            rh[j] += v * back.da_g.data()[j * nb + b];
        }
    }
}

/// Single-vector GRU step (the public cell contract).
pub fn gru_step(params: &GruParams, input: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "gru input has {} entries, expected {}",
            input.len(),
            params.input_dim
        )));
    }
    if h_prev.len() != params.hidden {
        return Err(Error::ShapeMismatch(format!(
            "gru hidden state has {} entries, expected {}",
            h_prev.len(),
            params.hidden
        )));
    }
    let mut x = BatchMat::zeros(params.input_dim, 1);
    x.data_mut().copy_from_slice(input);
    let mut h = BatchMat::zeros(params.hidden, 1);
    h.data_mut().copy_from_slice(h_prev);
    let cache = gru_step_batch(params, &x, &h);
    Ok(cache.h.data().to_vec())
}
