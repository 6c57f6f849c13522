//! Straight-line reference implementations used as independent oracles.
//!
//! Everything here is written with explicit loops over the logical weight
//! shapes as read from the serialized tensor form, sharing no code with
//! the library's computation paths.

#![allow(dead_code)]

use rgae_core::model_io::NamedTensor;

pub type Mat = Vec<Vec<f64>>;

pub fn mat_from(tensors: &[NamedTensor], name: &str) -> Mat {
    let t = tensors.iter().find(|t| t.name == name).expect(name);
    assert_eq!(t.dims.len(), 2, "{name} rank");
    let (r, c) = (t.dims[0] as usize, t.dims[1] as usize);
    (0..r)
        .map(|i| (0..c).map(|j| t.values[i * c + j] as f64).collect())
        .collect()
}

pub fn vec_from(tensors: &[NamedTensor], name: &str) -> Vec<f64> {
    let t = tensors.iter().find(|t| t.name == name).expect(name);
    assert_eq!(t.dims.len(), 1, "{name} rank");
    t.values.iter().map(|&v| v as f64).collect()
}

pub fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|&v| v / s).collect()
}

/// Gated autoencoder weights in their logical shapes: Q is [F x n*M],
/// V is [F x M], W_m is [K x F].
pub struct OracleGae {
    pub q: Mat,
    pub v: Mat,
    pub w_m: Mat,
    pub n: usize,
    pub m: usize,
}

impl OracleGae {
    pub fn from_tensors(tensors: &[NamedTensor], prefix: &str) -> Self {
        let q = mat_from(tensors, &format!("{prefix}.q"));
        let v = mat_from(tensors, &format!("{prefix}.v"));
        let w_m = mat_from(tensors, &format!("{prefix}.w_m"));
        let m = v[0].len();
        let n = q[0].len() / m;
        OracleGae { q, v, w_m, n, m }
    }

    fn window_onehot(&self, window: &[Vec<u16>]) -> Vec<f64> {
        let mut x = vec![0.0; self.n * self.m];
        for (w, frame) in window.iter().enumerate() {
            for &p in frame {
                x[w * self.m + p as usize] = 1.0;
            }
        }
        x
    }

    fn frame_onehot(&self, frame: &[u16]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for &p in frame {
            y[p as usize] = 1.0;
        }
        y
    }

    /// Mapping inference: softplus(W_m ((Q x) . (V y))).
    pub fn infer_mapping(&self, window: &[Vec<u16>], target: &[u16]) -> Vec<f64> {
        let x = self.window_onehot(window);
        let y = self.frame_onehot(target);
        let factors = self.q.len();
        let mut a = vec![0.0; factors];
        let mut b = vec![0.0; factors];
        for f in 0..factors {
            for (i, &xi) in x.iter().enumerate() {
                a[f] += self.q[f][i] * xi;
            }
            for (j, &yj) in y.iter().enumerate() {
                b[f] += self.v[f][j] * yj;
            }
        }
        let mut out = Vec::with_capacity(self.w_m.len());
        for row in &self.w_m {
            let mut pre = 0.0;
            for f in 0..factors {
                pre += row[f] * a[f] * b[f];
            }
            out.push(softplus(pre));
        }
        out
    }

    /// Reconstruction: sigma(V^T ((W_m^T m) . (Q x))).
    pub fn reconstruct(&self, window: &[Vec<u16>], mapping: &[f64], use_softmax: bool) -> Vec<f64> {
        let x = self.window_onehot(window);
        let factors = self.q.len();
        let mut a = vec![0.0; factors];
        let mut u = vec![0.0; factors];
        for f in 0..factors {
            for (i, &xi) in x.iter().enumerate() {
                a[f] += self.q[f][i] * xi;
            }
            for (k, &mk) in mapping.iter().enumerate() {
                u[f] += self.w_m[k][f] * mk;
            }
        }
        let mut pre = vec![0.0; self.m];
        for j in 0..self.m {
            for f in 0..factors {
                pre[j] += self.v[f][j] * u[f] * a[f];
            }
        }
        if use_softmax {
            softmax(&pre)
        } else {
            pre.iter().map(|&p| sigmoid(p)).collect()
        }
    }
}

/// GRU weights in their logical shapes.
pub struct OracleGru {
    pub w_z: Mat,
    pub w_r: Mat,
    pub w_h: Mat,
    pub u_z: Mat,
    pub u_r: Mat,
    pub u_h: Mat,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub u_o: Mat,
}

fn matvec(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

impl OracleGru {
    pub fn from_tensors(tensors: &[NamedTensor], prefix: &str) -> Self {
        OracleGru {
            w_z: mat_from(tensors, &format!("{prefix}.w_z")),
            w_r: mat_from(tensors, &format!("{prefix}.w_r")),
            w_h: mat_from(tensors, &format!("{prefix}.w_h")),
            u_z: mat_from(tensors, &format!("{prefix}.u_z")),
            u_r: mat_from(tensors, &format!("{prefix}.u_r")),
            u_h: mat_from(tensors, &format!("{prefix}.u_h")),
            b_z: vec_from(tensors, &format!("{prefix}.b_z")),
            b_r: vec_from(tensors, &format!("{prefix}.b_r")),
            b_h: vec_from(tensors, &format!("{prefix}.b_h")),
            u_o: mat_from(tensors, &format!("{prefix}.u_o")),
        }
    }

    /// z = sig(W_z x + U_z h + b_z); r likewise;
    /// h' = z . h + (1 - z) . tanh(W_h x + U_h (r . h) + b_h).
    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hd = h.len();
        let wz = matvec(&self.w_z, x);
        let uz = matvec(&self.u_z, h);
        let z: Vec<f64> = (0..hd).map(|i| sigmoid(wz[i] + uz[i] + self.b_z[i])).collect();
        let wr = matvec(&self.w_r, x);
        let ur = matvec(&self.u_r, h);
        let r: Vec<f64> = (0..hd).map(|i| sigmoid(wr[i] + ur[i] + self.b_r[i])).collect();
        let rh: Vec<f64> = (0..hd).map(|i| r[i] * h[i]).collect();
        let wh = matvec(&self.w_h, x);
        let uh = matvec(&self.u_h, &rh);
        (0..hd)
            .map(|i| {
                let g = (wh[i] + uh[i] + self.b_h[i]).tanh();
                z[i] * h[i] + (1.0 - z[i]) * g
            })
            .collect()
    }

    pub fn output(&self, h: &[f64]) -> Vec<f64> {
        matvec(&self.u_o, h)
    }
}

fn window_before(pitches: &[u16], t: i64, n: usize) -> Vec<Vec<u16>> {
    (0..n)
        .map(|w| {
            let ti = t - n as i64 + w as i64;
            if ti >= 0 {
                vec![pitches[ti as usize]]
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Full teacher-forced RGAE pass over a monophonic pitch sequence: the
/// mapping of each ground-truth step feeds the GRU, the GRU's softplus
/// output projection predicts the next mapping, and the decoder turns it
/// into a softmax over the next frame.
pub fn rgae_forward(gae: &OracleGae, gru: &OracleGru, pitches: &[u16]) -> Vec<Vec<f64>> {
    let hd = gru.b_z.len();
    let mut h = vec![0.0; hd];
    let mut out = Vec::new();
    for t in 0..pitches.len() - 1 {
        let ctx_inf = window_before(pitches, t as i64, gae.n);
        let m_t = gae.infer_mapping(&ctx_inf, &[pitches[t]]);
        h = gru.step(&m_t, &h);
        let m_pred: Vec<f64> = gru.output(&h).iter().map(|&v| softplus(v)).collect();
        let ctx_dec = window_before(pitches, t as i64 + 1, gae.n);
        out.push(gae.reconstruct(&ctx_dec, &m_pred, true));
    }
    out
}

/// Baseline pass: the input at step t is the concatenated one-hot window
/// of the last `window` frames including t, the prediction a softmax over
/// the output projection.
pub fn rnn_forward(gru: &OracleGru, pitches: &[u16], window: usize, alphabet: usize) -> Vec<Vec<f64>> {
    let hd = gru.b_z.len();
    let mut h = vec![0.0; hd];
    let mut out = Vec::new();
    for t in 0..pitches.len() - 1 {
        let mut x = vec![0.0; window * alphabet];
        for w in 0..window {
            let ti = t as i64 - (window as i64 - 1) + w as i64;
            if ti >= 0 {
                x[w * alphabet + pitches[ti as usize] as usize] = 1.0;
            }
        }
        h = gru.step(&x, &h);
        out.push(softmax(&gru.output(&h)));
    }
    out
}
