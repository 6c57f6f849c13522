//! Transposition-invariance pre-training.
//!
//! Per batch: infer mappings from the unshifted (context, target) pairs,
//! reconstruct through a pitch-shifted copy of the context, and score the
//! reconstruction against the equally shifted target. One shift delta is
//! drawn per batch; input dropout and an optional whole-batch random
//! transposition are applied to the pairs first. Sparsity of the batch-mean
//! mapping and the deviation of the Q/V column norms from their average are
//! penalized, and the column norms are capped after every update.

use super::{
    binary_cross_entropy, frame_to_dense, frame_to_sparse, infer_mapping_sparse,
    reconstruct_sparse, regularization_terms, shift_sparse, window_to_sparse, GaeParams,
    OutputKind, SparseVec,
};
use crate::data::{shift_frame, Corpus, Frame};
use crate::error::{Error, Result};
use crate::mathcore::{
    rmsprop_step, seeded_rng, sigmoid_scalar, snap_to_f32, derive_seed, LrSchedule, Matrix,
    RmsPropState, Rng64,
};
use rand::seq::SliceRandom;
use rand::Rng;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone)]
pub struct GaePretrainConfig {
    pub epochs: usize,
    /// Inclusive shift range for the reconstruction game (and for the
    /// optional input transposition augmentation).
    pub delta_min: i32,
    pub delta_max: i32,
    pub dropout_rate: f64,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub norm_deviation_weight: f64,
    pub norm_cap: f64,
    pub lr: LrSchedule,
    pub batch_size: usize,
    pub augment_transpose: bool,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub seed: u64,
}

impl Default for GaePretrainConfig {
    fn default() -> Self {
        GaePretrainConfig {
            epochs: 50,
            delta_min: -30,
            delta_max: 30,
            dropout_rate: 0.0,
            sparsity_target: 0.05,
            sparsity_weight: 0.1,
            norm_deviation_weight: 0.1,
            norm_cap: 1.0,
            lr: LrSchedule::new(0.001, 50),
            batch_size: 64,
            augment_transpose: false,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Gradients with the same layout as [`GaeParams`].
#[derive(Debug, Clone)]
pub struct GaeGrads {
    pub dq_t: Matrix,
    pub dv_t: Matrix,
    pub dw_m: Matrix,
}

impl GaeGrads {
    pub fn zeros_like(params: &GaeParams) -> Self {
        GaeGrads {
            dq_t: Matrix::zeros(params.q_t.rows(), params.q_t.cols()),
            dv_t: Matrix::zeros(params.v_t.rows(), params.v_t.cols()),
            dw_m: Matrix::zeros(params.w_m.rows(), params.w_m.cols()),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out =
            Vec::with_capacity(self.dq_t.data().len() + self.dv_t.data().len() + self.dw_m.data().len());
        out.extend_from_slice(self.dq_t.data());
        out.extend_from_slice(self.dv_t.data());
        out.extend_from_slice(self.dw_m.data());
        out
    }
}

/// A batch after the stochastic choices (augmentation, dropout, shift
/// delta) have been fixed; the loss is a deterministic function of the
/// parameters from here on, which is what gradient checking needs.
#[derive(Debug, Clone)]
pub struct PreparedPretrainBatch {
    pub ctx: Vec<SparseVec>,
    pub ctx_shifted: Vec<SparseVec>,
    pub target: Vec<SparseVec>,
    pub target_shifted: Vec<Vec<f64>>,
    pub delta: i64,
}

impl PreparedPretrainBatch {
    pub fn len(&self) -> usize {
        self.ctx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ctx.is_empty()
    }
}

/// Fix the stochastic parts of one pre-training batch: draw the shift
/// delta, optionally transpose every pair by one shared random delta, and
/// apply inverted dropout to the context windows.
pub fn prepare_pretrain_batch(
    params: &GaeParams,
    pairs: &[(Vec<Frame>, Frame)],
    cfg: &GaePretrainConfig,
    rng: &mut Rng64,
) -> Result<PreparedPretrainBatch> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = params.alphabet();
    let delta = draw_delta(cfg, rng);
    let augment = if cfg.augment_transpose {
        draw_delta(cfg, rng)
    } else {
        0
    };

    let keep = 1.0 - cfg.dropout_rate;
    let mut ctxs = Vec::with_capacity(pairs.len());
    let mut ctxs_shifted = Vec::with_capacity(pairs.len());
    let mut targets = Vec::with_capacity(pairs.len());
    let mut targets_shifted = Vec::with_capacity(pairs.len());

    for (ctx, target) in pairs {
        if ctx.len() != params.context_len() {
            return Err(Error::ShapeMismatch(format!(
                "pair context has {} frames, model expects {}",
                ctx.len(),
                params.context_len()
            )));
        }
        let (ctx, target) = if augment != 0 {
            (
                ctx.iter().map(|f| shift_frame(f, augment, m)).collect(),
                shift_frame(target, augment, m),
            )
        } else {
            (ctx.clone(), target.clone())
        };

        let mut ctx_sv = window_to_sparse(&ctx, m);
        if cfg.dropout_rate > 0.0 {
            let mut dropped = SparseVec::default();
            for (&i, &v) in ctx_sv.idx.iter().zip(&ctx_sv.val) {
                if rng.random_range(0.0..1.0) < keep {
                    dropped.push(i, v / keep);
                }
            }
            ctx_sv = dropped;
        }
        ctxs_shifted.push(shift_sparse(&ctx_sv, delta, m));
        ctxs.push(ctx_sv);
        targets.push(frame_to_sparse(&target));
        targets_shifted.push(frame_to_dense(&shift_frame(&target, delta, m), m));
    }

    Ok(PreparedPretrainBatch {
        ctx: ctxs,
        ctx_shifted: ctxs_shifted,
        target: targets,
        target_shifted: targets_shifted,
        delta,
    })
}

fn draw_delta(cfg: &GaePretrainConfig, rng: &mut Rng64) -> i64 {
    if cfg.delta_min == cfg.delta_max {
        cfg.delta_min as i64
    } else {
        rng.random_range(cfg.delta_min..=cfg.delta_max) as i64
    }
}

/// Pre-training loss of one prepared batch and its gradients:
/// batch-mean shifted-reconstruction cross-entropy plus the sparsity and
/// norm-deviation penalties.
pub fn pretrain_loss_and_grads(
    params: &GaeParams,
    batch: &PreparedPretrainBatch,
    cfg: &GaePretrainConfig,
) -> (f64, GaeGrads) {
    let b = batch.len();
    let bf = b as f64;
    let m = params.alphabet();
    let k = params.mapping_size();
    let f = params.factors();

    let mut grads = GaeGrads::zeros_like(params);

    // Forward, keeping per-item traces.
    let mut maps = Vec::with_capacity(b);
    let mut recons = Vec::with_capacity(b);
    let mut bce_sum = 0.0;
    for i in 0..b {
        let mt = infer_mapping_sparse(params, &batch.ctx[i], &batch.target[i]);
        let rt = reconstruct_sparse(params, &batch.ctx_shifted[i], &mt.mapping, OutputKind::Sigmoid);
        bce_sum += binary_cross_entropy(&batch.target_shifted[i], &rt.output);
        maps.push(mt);
        recons.push(rt);
    }

    let mean_mapping: Vec<f64> = (0..k)
        .map(|ki| maps.iter().map(|t| t.mapping[ki]).sum::<f64>() / bf)
        .collect();
    let mappings: Vec<Vec<f64>> = maps.iter().map(|t| t.mapping.clone()).collect();
    let (sparsity, norm_dev) = regularization_terms(params, &mappings, cfg);
    let loss = bce_sum / bf + sparsity + norm_dev;

    // Shared sparsity pull on every item's mapping.
    let dmean: Vec<f64> = mean_mapping
        .iter()
        .map(|&mu| 2.0 * cfg.sparsity_weight * (mu - cfg.sparsity_target) / bf)
        .collect();

    let mut dg = vec![0.0; f];
    let mut du;
    let mut da_shift;
    let mut dm = vec![0.0; k];
    let mut df = vec![0.0; f];
    for i in 0..b {
        let mt = &maps[i];
        let rt = &recons[i];

        // d(bce)/d(recon preactivation): sigmoid and the bit-based
        // cross-entropy combine to (output - target) / (M ln2), averaged
        // over the batch.
        let scale = 1.0 / (m as f64 * LN2 * bf);
        dg.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let dpre = (rt.output[j] - batch.target_shifted[i][j]) * scale;
            if dpre != 0.0 {
                axpy(&mut dg, dpre, params.v_t.row(j));
                axpy(grads.dv_t.row_mut(j), dpre, &rt.gated);
            }
        }
        du = mul(&dg, &rt.ctx_factors);
        da_shift = mul(&dg, &rt.mapped_factors);

        // Through the decoder's W_m^T and the shifted context's Q.
        for ki in 0..k {
            dm[ki] = dot(params.w_m.row(ki), &du) + dmean[ki];
            axpy(grads.dw_m.row_mut(ki), mt.mapping[ki], &du);
        }
        scatter_add(&mut grads.dq_t, &batch.ctx_shifted[i], &da_shift);

        // Through the mapping inference.
        df.iter_mut().for_each(|v| *v = 0.0);
        let prod = mul(&mt.ctx_factors, &mt.target_factors);
        for ki in 0..k {
            let ds = dm[ki] * sigmoid_scalar(mt.pre[ki]);
            if ds != 0.0 {
                axpy(&mut df, ds, params.w_m.row(ki));
                axpy(grads.dw_m.row_mut(ki), ds, &prod);
            }
        }
        let da = mul(&df, &mt.target_factors);
        let db = mul(&df, &mt.ctx_factors);
        scatter_add(&mut grads.dq_t, &batch.ctx[i], &da);
        scatter_add(&mut grads.dv_t, &batch.target[i], &db);
    }

    // Norm-deviation gradient: d/dw of sum_r (|row_r| - mean)^2 is
    // 2 (|row_r| - mean) w / |row_r| (the mean term cancels in the sum).
    for (mat, gmat) in [
        (&params.q_t, &mut grads.dq_t),
        (&params.v_t, &mut grads.dv_t),
    ] {
        let norms: Vec<f64> = (0..mat.rows())
            .map(|r| mat.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        for r in 0..mat.rows() {
            let coeff =
                2.0 * cfg.norm_deviation_weight * (norms[r] - mean) / norms[r].max(1e-12);
            if coeff != 0.0 {
                axpy(gmat.row_mut(r), coeff, mat.row(r));
            }
        }
    }

    (loss, grads)
}

/// Loss only, for finite-difference checks.
pub fn pretrain_loss(
    params: &GaeParams,
    batch: &PreparedPretrainBatch,
    cfg: &GaePretrainConfig,
) -> f64 {
    let b = batch.len() as f64;
    let mut bce_sum = 0.0;
    let mut mappings = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let mt = infer_mapping_sparse(params, &batch.ctx[i], &batch.target[i]);
        let rt = reconstruct_sparse(params, &batch.ctx_shifted[i], &mt.mapping, OutputKind::Sigmoid);
        bce_sum += binary_cross_entropy(&batch.target_shifted[i], &rt.output);
        mappings.push(mt.mapping);
    }
    let (sparsity, norm_dev) = regularization_terms(params, &mappings, cfg);
    bce_sum / b + sparsity + norm_dev
}

/// RMSProp state for the three GAE tensors.
#[derive(Debug, Clone)]
pub struct GaeOptState {
    q: RmsPropState,
    v: RmsPropState,
    w: RmsPropState,
}

impl GaeOptState {
    pub fn new(params: &GaeParams, cfg: &GaePretrainConfig) -> Self {
        GaeOptState {
            q: RmsPropState::new(params.q_t.data().len(), cfg.rmsprop_decay, cfg.rmsprop_epsilon),
            v: RmsPropState::new(params.v_t.data().len(), cfg.rmsprop_decay, cfg.rmsprop_epsilon),
            w: RmsPropState::new(params.w_m.data().len(), cfg.rmsprop_decay, cfg.rmsprop_epsilon),
        }
    }
}

/// One pre-training step on a batch of (context, target) pairs: fix the
/// batch randomness, take the gradient, apply RMSProp at the scheduled
/// rate, and re-cap the column norms. Returns the batch loss.
pub fn pretrain_step(
    params: &mut GaeParams,
    pairs: &[(Vec<Frame>, Frame)],
    cfg: &GaePretrainConfig,
    opt: &mut GaeOptState,
    epoch: usize,
    rng: &mut Rng64,
) -> Result<f64> {
    let prepared = prepare_pretrain_batch(params, pairs, cfg, rng)?;
    let (loss, grads) = pretrain_loss_and_grads(params, &prepared, cfg);
    let rate = cfg.lr.rate(epoch);
    rmsprop_step(params.q_t.data_mut(), grads.dq_t.data(), &mut opt.q, rate)?;
    rmsprop_step(params.v_t.data_mut(), grads.dv_t.data(), &mut opt.v, rate)?;
    rmsprop_step(params.w_m.data_mut(), grads.dw_m.data(), &mut opt.w, rate)?;
    snap_to_f32(params.q_t.data_mut());
    snap_to_f32(params.v_t.data_mut());
    snap_to_f32(params.w_m.data_mut());
    params.apply_norm_cap(cfg.norm_cap);
    Ok(loss)
}

/// Full pre-training over a corpus. Pairs are every position with a full
/// context window (sequence starts are skipped); each epoch shuffles the
/// positions into batches. Returns the per-epoch mean batch loss.
pub fn pretrain(
    params: &mut GaeParams,
    corpus: &Corpus,
    cfg: &GaePretrainConfig,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.alphabet != params.alphabet() {
        return Err(Error::ShapeMismatch(format!(
            "corpus alphabet {} vs model alphabet {}",
            corpus.alphabet,
            params.alphabet()
        )));
    }
    let n = params.context_len();
    let mut positions: Vec<(u32, u32)> = Vec::new();
    for (si, seq) in corpus.sequences.iter().enumerate() {
        for t in n..seq.len() {
            positions.push((si as u32, t as u32));
        }
    }
    if positions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no training positions: every sequence is shorter than the context window {}",
            n + 1
        )));
    }

    let mut opt = GaeOptState::new(params, cfg);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order_rng = seeded_rng(derive_seed(cfg.seed, &[0x70726531, epoch as u64]));
        positions.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in positions.chunks(cfg.batch_size.max(1)).enumerate() {
            let pairs: Vec<(Vec<Frame>, Frame)> = chunk
                .iter()
                .map(|&(si, t)| {
                    let seq = &corpus.sequences[si as usize];
                    let t = t as usize;
                    (seq.frames[t - n..t].to_vec(), seq.frames[t].clone())
                })
                .collect();
            let mut batch_rng =
                seeded_rng(derive_seed(cfg.seed, &[0x70726532, epoch as u64, bi as u64]));
            epoch_loss += pretrain_step(params, &pairs, cfg, &mut opt, epoch, &mut batch_rng)?;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(trace)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for i in 0..y.len() {
        y[i] += alpha * x[i];
    }
}

#[inline]
fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn scatter_add(grad: &mut Matrix, sv: &SparseVec, contribution: &[f64]) {
    for (&i, &v) in sv.idx.iter().zip(&sv.val) {
        axpy(grad.row_mut(i as usize), v, contribution);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gae::{infer_mapping, reconstruct};

    fn tiny_params(seed: u64) -> GaeParams {
        GaeParams::init(2, 5, 3, 2, seed)
    }

    fn tiny_pairs() -> Vec<(Vec<Frame>, Frame)> {
        vec![
            (vec![vec![0u16], vec![2u16]], vec![3u16]),
            (vec![vec![1u16], vec![4u16]], vec![0u16]),
            (vec![vec![2u16], vec![2u16]], vec![1u16]),
        ]
    }

    #[test]
    fn empty_batch_rejected() {
        let params = tiny_params(1);
        let cfg = GaePretrainConfig::default();
        let mut rng = seeded_rng(0);
        assert!(prepare_pretrain_batch(&params, &[], &cfg, &mut rng).is_err());
    }

    #[test]
    fn zero_delta_reduces_to_plain_predictive_training() {
        let params = tiny_params(7);
        let cfg = GaePretrainConfig {
            delta_min: 0,
            delta_max: 0,
            dropout_rate: 0.0,
            sparsity_weight: 0.0,
            norm_deviation_weight: 0.0,
            ..Default::default()
        };
        let pairs = tiny_pairs();
        let mut rng = seeded_rng(3);
        let batch = prepare_pretrain_batch(&params, &pairs, &cfg, &mut rng).unwrap();
        let (loss, _) = pretrain_loss_and_grads(&params, &batch, &cfg);

        let mut expect = 0.0;
        for (ctx, target) in &pairs {
            let m = infer_mapping(&params, ctx, target).unwrap();
            let r = reconstruct(&params, ctx, &m, OutputKind::Sigmoid).unwrap();
            expect += binary_cross_entropy(&frame_to_dense(target, 5), &r);
        }
        expect /= pairs.len() as f64;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn regularization_trivial_cases() {
        let params = tiny_params(2);
        let cfg = GaePretrainConfig {
            sparsity_weight: 0.5,
            sparsity_target: 0.05,
            norm_deviation_weight: 1.0,
            ..Default::default()
        };
        // Batch mean exactly at the target: zero sparsity penalty.
        let mappings = vec![vec![0.03, 0.08], vec![0.07, 0.02]];
        let (sp, _) = regularization_terms(&params, &mappings, &cfg);
        assert!(sp.abs() < 1e-15);
        // Equal-norm columns: zero norm penalty.
        let mut p = GaeParams::zeros(1, 4, 3, 2);
        p.q_t.data_mut().iter_mut().for_each(|v| *v = 0.5);
        p.v_t.data_mut().iter_mut().for_each(|v| *v = -0.25);
        let (_, nd) = regularization_terms(&p, &[], &cfg);
        assert!(nd.abs() < 1e-12);
    }

    #[test]
    fn step_reduces_loss_on_fixed_tiny_batch() {
        let mut params = tiny_params(11);
        let cfg = GaePretrainConfig {
            dropout_rate: 0.0,
            lr: LrSchedule::new(0.01, 1000),
            ..Default::default()
        };
        let pairs = tiny_pairs();
        let mut opt = GaeOptState::new(&params, &cfg);
        let mut first = None;
        let mut last = 0.0;
        for step in 0..60 {
            let mut rng = seeded_rng(derive_seed(1, &[step]));
            last = pretrain_step(&mut params, &pairs, &cfg, &mut opt, 0, &mut rng).unwrap();
            first.get_or_insert(last);
        }
        assert!(last < first.unwrap());
    }

    #[test]
    fn pretrain_trace_and_determinism() {
        let corpus = Corpus::new(
            8,
            vec![
                crate::data::FrameSequence::from_pitches(&[0, 2, 4, 5, 7, 5, 4, 2, 0, 2], 8)
                    .unwrap(),
            ],
        )
        .unwrap();
        let cfg = GaePretrainConfig {
            epochs: 3,
            batch_size: 4,
            delta_min: -3,
            delta_max: 3,
            dropout_rate: 0.5,
            lr: LrSchedule::new(0.001, 3),
            seed: 5,
            ..Default::default()
        };
        let mut p1 = GaeParams::init(2, 8, 4, 3, 9);
        let mut p2 = p1.clone();
        let t1 = pretrain(&mut p1, &corpus, &cfg).unwrap();
        let t2 = pretrain(&mut p2, &corpus, &cfg).unwrap();
        assert_eq!(t1.len(), 3);
        assert_eq!(t1, t2);
        assert_eq!(p1, p2);
        assert!(p1.max_col_norm() <= cfg.norm_cap + 1e-9);
    }
}
