use crate::error::{Error, Result};
use rand::Rng;

/// Dense row-major matrix of `f64`.
///
/// The storage invariant is `data.len() == rows * cols`; every operation in
/// this module keeps entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Uniform init in [-s, s] with s = sqrt(6 / (fan_in + fan_out)),
    /// snapped to f32-representable values so a save/load cycle is lossless.
    pub fn glorot_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut data = vec![0.0; rows * cols];
        for v in data.iter_mut() {
            *v = rng.random_range(-s..=s) as f32 as f64;
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// y = A x (row dot products).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(y.len(), self.rows, "matvec output length");
        for r in 0..self.rows {
            y[r] = dot(self.row(r), x);
        }
    }

    /// y += A^T x, streaming A row by row.
    pub fn matvec_t_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows, "matvec_t input length");
        assert_eq!(y.len(), self.cols, "matvec_t output length");
        for r in 0..self.rows {
            axpy(y, x[r], self.row(r));
        }
    }

    /// A += alpha * outer(u, v), i.e. A[r][c] += alpha * u[r] * v[c].
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows, "outer row length");
        assert_eq!(v.len(), self.cols, "outer col length");
        for r in 0..self.rows {
            let a = alpha * u[r];
            if a != 0.0 {
                axpy(self.row_mut(r), a, v);
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Euclidean norm of column `c`.
    pub fn col_norm(&self, c: usize) -> f64 {
        let mut s = 0.0;
        for r in 0..self.rows {
            let v = self.data[r * self.cols + c];
            s += v * v;
        }
        s.sqrt()
    }

    pub fn scale_col(&mut self, c: usize, factor: f64) {
        for r in 0..self.rows {
            self.data[r * self.cols + c] *= factor;
        }
    }
}

/// Batch of `batch` column vectors of dimension `dim`, stored interleaved as
/// `data[j * batch + b]` so the innermost loop over the batch index is
/// contiguous. `batch == 1` degenerates to a plain vector.
#[derive(Debug, Clone)]
pub struct BatchMat {
    dim: usize,
    batch: usize,
    data: Vec<f64>,
}

impl BatchMat {
    pub fn zeros(dim: usize, batch: usize) -> Self {
        BatchMat {
            dim,
            batch,
            data: vec![0.0; dim * batch],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, j: usize, b: usize) -> f64 {
        self.data[j * self.batch + b]
    }

    #[inline]
    pub fn at_mut(&mut self, j: usize, b: usize) -> &mut f64 {
        &mut self.data[j * self.batch + b]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn column(&self, b: usize) -> Vec<f64> {
        (0..self.dim).map(|j| self.at(j, b)).collect()
    }

    pub fn set_column(&mut self, b: usize, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        for (j, &x) in v.iter().enumerate() {
            *self.at_mut(j, b) = x;
        }
    }

    /// Y += W X for a row-major W of shape [out_dim x dim]. W is streamed
    /// once; four interleaved accumulator chains per output row keep the
    /// FMA pipeline busy on long inner dimensions.
    pub fn affine_add(&mut self, w: &Matrix, x: &BatchMat) {
        assert_eq!(w.cols(), x.dim, "affine input dim");
        assert_eq!(w.rows(), self.dim, "affine output dim");
        assert_eq!(x.batch, self.batch, "affine batch");
        let nb = self.batch;
        if nb == 8 {
            return self.affine_add_nb::<8>(w, x);
        }
        if nb == 1 {
            return self.affine_add_nb::<1>(w, x);
        }
        let cols = w.cols();
        for i in 0..w.rows() {
            let wrow = w.row(i);
            let out = &mut self.data[i * nb..(i + 1) * nb];
            for j in 0..cols {
                let wij = wrow[j];
                let xs = &x.data[j * nb..(j + 1) * nb];
                for b in 0..nb {
                    out[b] += wij * xs[b];
                }
            }
        }
    }

    fn affine_add_nb<const NB: usize>(&mut self, w: &Matrix, x: &BatchMat) {
        let cols = w.cols();
        for i in 0..w.rows() {
            let wrow = w.row(i);
            let mut a0 = [0.0f64; NB];
            let mut a1 = [0.0f64; NB];
            let mut a2 = [0.0f64; NB];
            let mut a3 = [0.0f64; NB];
            let mut j = 0;
            while j + 4 <= cols {
                let x0 = &x.data[j * NB..(j + 1) * NB];
                let x1 = &x.data[(j + 1) * NB..(j + 2) * NB];
                let x2 = &x.data[(j + 2) * NB..(j + 3) * NB];
                let x3 = &x.data[(j + 3) * NB..(j + 4) * NB];
                let (w0, w1, w2, w3) = (wrow[j], wrow[j + 1], wrow[j + 2], wrow[j + 3]);
                for b in 0..NB {
                    a0[b] += w0 * x0[b];
                    a1[b] += w1 * x1[b];
                    a2[b] += w2 * x2[b];
                    a3[b] += w3 * x3[b];
                }
                j += 4;
            }
            while j < cols {
                let xs = &x.data[j * NB..(j + 1) * NB];
                let wj = wrow[j];
                for b in 0..NB {
                    a0[b] += wj * xs[b];
                }
                j += 1;
            }
            let out = &mut self.data[i * NB..(i + 1) * NB];
            for b in 0..NB {
                out[b] += (a0[b] + a1[b]) + (a2[b] + a3[b]);
            }
        }
    }

    /// Y += W^T X for a row-major W of shape [in_dim x dim] (the transposed
    /// orientation used for input-side weights): Y[i] += sum_j W[j][i] X[j].
    pub fn affine_t_add(&mut self, w: &Matrix, x: &BatchMat) {
        assert_eq!(w.rows(), x.dim, "affine_t input dim");
        assert_eq!(w.cols(), self.dim, "affine_t output dim");
        assert_eq!(x.batch, self.batch, "affine_t batch");
        let nb = self.batch;
        let out_dim = self.dim;
        let mut j = 0;
        // Four input rows per pass: one load/store of each output element
        // covers four fused multiply-adds.
        while j + 4 <= w.rows() {
            let w0 = w.row(j);
            let w1 = w.row(j + 1);
            let w2 = w.row(j + 2);
            let w3 = w.row(j + 3);
            let x0 = &x.data[j * nb..(j + 1) * nb];
            let x1 = &x.data[(j + 1) * nb..(j + 2) * nb];
            let x2 = &x.data[(j + 2) * nb..(j + 3) * nb];
            let x3 = &x.data[(j + 3) * nb..(j + 4) * nb];
            for i in 0..out_dim {
                let out = &mut self.data[i * nb..(i + 1) * nb];
                for b in 0..nb {
                    out[b] += (w0[i] * x0[b] + w1[i] * x1[b]) + (w2[i] * x2[b] + w3[i] * x3[b]);
                }
            }
            j += 4;
        }
        while j < w.rows() {
            let wrow = w.row(j);
            let xs = &x.data[j * nb..(j + 1) * nb];
            for i in 0..out_dim {
                let out = &mut self.data[i * nb..(i + 1) * nb];
                let wji = wrow[i];
                for b in 0..nb {
                    out[b] += wji * xs[b];
                }
            }
            j += 1;
        }
    }

    /// W += sum_b outer(Y[:,b], X[:,b]) accumulated as a rank-`batch` update:
    /// W[i][j] += sum_b Y[i,b] X[j,b]. W is touched once per call.
    pub fn accumulate_outer(w: &mut Matrix, y: &BatchMat, x: &BatchMat) {
        assert_eq!(w.rows(), y.dim, "outer rows");
        assert_eq!(w.cols(), x.dim, "outer cols");
        assert_eq!(x.batch, y.batch, "outer batch");
        match x.batch {
            8 => Self::accumulate_outer_nb::<8>(w, y, x),
            1 => Self::accumulate_outer_nb::<1>(w, y, x),
            _ => {
                let nb = x.batch;
                let cols = w.cols();
                for i in 0..w.rows() {
                    let ys = &y.data[i * nb..(i + 1) * nb];
                    let wrow = w.row_mut(i);
                    for j in 0..cols {
                        let xs = &x.data[j * nb..(j + 1) * nb];
                        let mut acc = 0.0;
                        for b in 0..nb {
                            acc += ys[b] * xs[b];
                        }
                        wrow[j] += acc;
                    }
                }
            }
        }
    }

    /// Transposes X once so the per-row update becomes NB fused axpys over
    /// the contiguous column dimension.
    fn accumulate_outer_nb<const NB: usize>(w: &mut Matrix, y: &BatchMat, x: &BatchMat) {
        let cols = w.cols();
        let mut xt = vec![0.0f64; NB * cols];
        for j in 0..cols {
            for b in 0..NB {
                xt[b * cols + j] = x.data[j * NB + b];
            }
        }
        for i in 0..w.rows() {
            let mut alpha = [0.0f64; NB];
            for (b, a) in alpha.iter_mut().enumerate() {
                *a = y.data[i * NB + b];
            }
            let wrow = w.row_mut(i);
            for j in 0..cols {
                let mut s = 0.0;
                for b in 0..NB {
                    s += alpha[b] * xt[b * cols + j];
                }
                wrow[j] += s;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// y += alpha * x
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for i in 0..y.len() {
        y[i] += alpha * x[i];
    }
}

/// Round every value to the nearest f32-representable number. Parameters are
/// snapped after each optimizer update so that the 32-bit model file format
/// stores them exactly and a save/load cycle is the identity.
pub fn snap_to_f32(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = *v as f32 as f64;
    }
}
