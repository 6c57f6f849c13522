//! Backpropagation through time for the recurrent gated autoencoder and
//! the baseline GRU.
//!
//! The RGAE is processed one sequence at a time (its matrices are small
//! enough to stay cached); gradients accumulate over a batch of sequences
//! before one RMSProp update. During the main phase the gated autoencoder
//! is frozen and its mappings enter the GRU as constants; the final
//! fine-tuning epochs propagate gradients through the full unrolled graph,
//! including every mapping inference and decode. The baseline processes a
//! batch of equal-length sequences in lockstep so that its large recurrent
//! matrices stream once per time step rather than once per sequence.

use super::gru::{
    accumulate_input_grads_dense, accumulate_input_grads_sparse, add_sparse_input,
    gru_backward_step, gru_step_pre, GruGrads, GruParams, GruStepCache,
};
use super::models::{BaselineRnn, RgaeModel};
use crate::data::{augment_transpose, Corpus, FrameSequence};
use crate::error::{Error, Result};
use crate::gae::{
    infer_mapping_sparse, reconstruct_sparse, GaeGrads, MappingTrace, OutputKind, ReconTrace,
    SparseVec,
};
use crate::mathcore::{
    derive_seed, rmsprop_step, seeded_rng, sigmoid_scalar, snap_to_f32, BatchMat, LrSchedule,
    Matrix, RmsPropState, Rng64,
};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// The last `finetune_epochs` of `epochs` unfreeze the gated
    /// autoencoder (ignored by the baseline trainer).
    pub finetune_epochs: usize,
    pub lr: LrSchedule,
    pub dropout_rate: f64,
    pub grad_clip_norm: f64,
    /// Sequences per batch (within one same-length bucket).
    pub batch_size: usize,
    pub augment_transpose: bool,
    pub augment_min: i32,
    pub augment_max: i32,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            finetune_epochs: 0,
            lr: LrSchedule::new(0.001, 50),
            dropout_rate: 0.0,
            grad_clip_norm: 5.0,
            batch_size: 8,
            augment_transpose: false,
            augment_min: -30,
            augment_max: 30,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Whether gradients flow into the gated autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgaeGradMode {
    FrozenGae,
    FineTune,
}

/// Gradients for the full RGAE; `gae` is present in fine-tune mode.
pub struct RgaeGrads {
    pub gru: GruGrads,
    pub gae: Option<GaeGrads>,
}

// ---------------------------------------------------------------------------
// RGAE forward/backward over one sequence
// ---------------------------------------------------------------------------

struct RgaeSeqTrace {
    ctx_inf: Vec<SparseVec>,
    ctx_dec: Vec<SparseVec>,
    target_sv: Vec<SparseVec>,
    maps: Vec<MappingTrace>,
    gru: Vec<GruStepCache>,
    ao: Vec<Vec<f64>>,
    m_pred: Vec<Vec<f64>>,
    recon: Vec<ReconTrace>,
    next_pitch: Vec<usize>,
    ce_bits: f64,
}

/// Sparse one-hot context windows of a monophonic sequence with optional
/// inverted dropout. `ctx_inf[t]` ends just before frame t, `ctx_dec[t]`
/// ends at frame t; both zero-pad before the sequence start.
fn sequence_contexts(
    seq: &FrameSequence,
    n: usize,
    alphabet: usize,
    dropout: f64,
    rng: &mut Option<&mut Rng64>,
) -> (Vec<SparseVec>, Vec<SparseVec>) {
    let steps = seq.len() - 1;
    let keep = 1.0 - dropout;
    let drop = |sv: SparseVec, rng: &mut Option<&mut Rng64>| -> SparseVec {
        match rng {
            Some(r) if dropout > 0.0 => {
                let mut out = SparseVec::default();
                for (&i, &v) in sv.idx.iter().zip(&sv.val) {
                    if r.random_range(0.0..1.0) < keep {
                        out.push(i, v / keep);
                    }
                }
                out
            }
            _ => sv,
        }
    };
    let window_sparse = |end: i64| -> SparseVec {
        // Frames [end-n+1 ..= end]; negative positions are empty padding.
        let mut sv = SparseVec::default();
        for w in 0..n {
            let t = end - (n as i64 - 1) + w as i64;
            if t >= 0 {
                for &p in &seq.frames[t as usize] {
                    sv.push((w * alphabet + p as usize) as u32, 1.0);
                }
            }
        }
        sv
    };
    let mut ctx_inf = Vec::with_capacity(steps);
    let mut ctx_dec = Vec::with_capacity(steps);
    for t in 0..steps {
        ctx_inf.push(drop(window_sparse(t as i64 - 1), rng));
        ctx_dec.push(drop(window_sparse(t as i64), rng));
    }
    (ctx_inf, ctx_dec)
}

fn rgae_forward_seq(
    model: &RgaeModel,
    seq: &FrameSequence,
    dropout: f64,
    rng: &mut Option<&mut Rng64>,
    scale_events: f64,
) -> RgaeSeqTrace {
    let n = model.gae.context_len();
    let m = model.gae.alphabet();
    let k = model.gae.mapping_size();
    let hd = model.gru.hidden();
    let steps = seq.len() - 1;

    let (ctx_inf, ctx_dec) = sequence_contexts(seq, n, m, dropout, rng);
    let mut target_sv = Vec::with_capacity(steps);
    let mut maps = Vec::with_capacity(steps);
    let mut gru = Vec::with_capacity(steps);
    let mut ao = Vec::with_capacity(steps);
    let mut m_pred = Vec::with_capacity(steps);
    let mut recon = Vec::with_capacity(steps);
    let mut next_pitch = Vec::with_capacity(steps);
    let mut ce_bits = 0.0;

    let mut h = BatchMat::zeros(hd, 1);
    for t in 0..steps {
        let tsv = crate::gae::frame_to_sparse(&seq.frames[t]);
        let mt = infer_mapping_sparse(&model.gae, &ctx_inf[t], &tsv);
        let mut x = BatchMat::zeros(k, 1);
        x.data_mut().copy_from_slice(&mt.mapping);
        let cache = super::gru::gru_step_batch(&model.gru, &x, &h);
        h = cache.h.clone();

        let mut a_o = vec![0.0; k];
        model.gru.u_o.matvec(h.data(), &mut a_o);
        let mp: Vec<f64> = a_o.iter().map(|&v| crate::mathcore::softplus_scalar(v)).collect();
        let rt = reconstruct_sparse(&model.gae, &ctx_dec[t], &mp, OutputKind::Softmax);

        let next = seq.frames[t + 1][0] as usize;
        ce_bits += -rt.output[next].max(1e-12).log2() * scale_events;

        target_sv.push(tsv);
        maps.push(mt);
        gru.push(cache);
        ao.push(a_o);
        m_pred.push(mp);
        recon.push(rt);
        next_pitch.push(next);
    }

    RgaeSeqTrace {
        ctx_inf,
        ctx_dec,
        target_sv,
        maps,
        gru,
        ao,
        m_pred,
        recon,
        next_pitch,
        ce_bits,
    }
}

fn rgae_backward_seq(
    model: &RgaeModel,
    trace: &RgaeSeqTrace,
    mode: RgaeGradMode,
    total_events: f64,
    grads: &mut RgaeGrads,
) {
    let f = model.gae.factors();
    let k = model.gae.mapping_size();
    let m = model.gae.alphabet();
    let hd = model.gru.hidden();
    let steps = trace.maps.len();
    let scale = 1.0 / (LN2 * total_events);
    let finetune = mode == RgaeGradMode::FineTune;

    let zero_h = BatchMat::zeros(hd, 1);
    let mut dh = BatchMat::zeros(hd, 1);
    let mut dg = vec![0.0; f];
    let mut dm_pred = vec![0.0; k];
    let mut df = vec![0.0; f];

    for t in (0..steps).rev() {
        let rt = &trace.recon[t];
        let mt = &trace.maps[t];

        // Softmax + cross-entropy at the decode output.
        dg.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let y = if j == trace.next_pitch[t] { 1.0 } else { 0.0 };
            let dpre = (rt.output[j] - y) * scale;
            axpy(&mut dg, dpre, model.gae.v_t.row(j));
            if finetune {
                let gae = grads.gae.as_mut().unwrap();
                axpy(gae.dv_t.row_mut(j), dpre, &rt.gated);
            }
        }
        let du: Vec<f64> = dg.iter().zip(&rt.ctx_factors).map(|(x, y)| x * y).collect();
        for ki in 0..k {
            dm_pred[ki] = dot(model.gae.w_m.row(ki), &du);
        }
        if finetune {
            let gae = grads.gae.as_mut().unwrap();
            let da_shift: Vec<f64> = dg
                .iter()
                .zip(&rt.mapped_factors)
                .map(|(x, y)| x * y)
                .collect();
            for ki in 0..k {
                axpy(gae.dw_m.row_mut(ki), trace.m_pred[t][ki], &du);
            }
            scatter_add(&mut gae.dq_t, &trace.ctx_dec[t], &da_shift);
        }

        // Through the predicted-mapping softplus and the output projection.
        let h_t = trace.gru[t].h.data();
        for ki in 0..k {
            let da = dm_pred[ki] * sigmoid_scalar(trace.ao[t][ki]);
            axpy(grads.gru.u_o.row_mut(ki), da, h_t);
            axpy(dh.data_mut(), da, model.gru.u_o.row(ki));
        }

        // GRU step backward; the input gradient is only needed when the
        // mapping inference is being trained.
        let h_prev = if t == 0 { &zero_h } else { &trace.gru[t - 1].h };
        let mut dx = BatchMat::zeros(k, 1);
        let back = gru_backward_step(
            &model.gru,
            &trace.gru[t],
            h_prev,
            &mut dh,
            &mut grads.gru,
            finetune.then_some(&mut dx),
        );
        let mut x = BatchMat::zeros(k, 1);
        x.data_mut().copy_from_slice(&mt.mapping);
        accumulate_input_grads_dense(&mut grads.gru, &x, &back);

        if finetune {
            // Through the mapping inference of this step.
            let gae = grads.gae.as_mut().unwrap();
            df.iter_mut().for_each(|v| *v = 0.0);
            let prod: Vec<f64> = mt
                .ctx_factors
                .iter()
                .zip(&mt.target_factors)
                .map(|(x, y)| x * y)
                .collect();
            for ki in 0..k {
                let ds = dx.data()[ki] * sigmoid_scalar(mt.pre[ki]);
                if ds != 0.0 {
                    axpy(&mut df, ds, model.gae.w_m.row(ki));
                    axpy(gae.dw_m.row_mut(ki), ds, &prod);
                }
            }
            let da: Vec<f64> = df.iter().zip(&mt.target_factors).map(|(x, y)| x * y).collect();
            let db: Vec<f64> = df.iter().zip(&mt.ctx_factors).map(|(x, y)| x * y).collect();
            scatter_add(&mut gae.dq_t, &trace.ctx_inf[t], &da);
            scatter_add(&mut gae.dv_t, &trace.target_sv[t], &db);
        }
    }
}

/// Mean cross-entropy (bits per prediction event) and gradients of a batch
/// of sequences. Dropout has already been fixed by the caller through
/// `rng`; pass `None` for a deterministic loss (gradient checking).
pub fn rgae_loss_and_grads(
    model: &RgaeModel,
    sequences: &[FrameSequence],
    mode: RgaeGradMode,
    dropout: f64,
    mut rng: Option<&mut Rng64>,
) -> Result<(f64, RgaeGrads)> {
    if sequences.is_empty() {
        return Err(Error::EmptyBatch);
    }
    validate_batch(sequences)?;
    let total_events: usize = sequences.iter().map(|s| s.len() - 1).sum();
    let te = total_events as f64;
    let mut grads = RgaeGrads {
        gru: GruGrads::zeros_like(&model.gru),
        gae: (mode == RgaeGradMode::FineTune).then(|| GaeGrads::zeros_like(&model.gae)),
    };
    let mut loss = 0.0;
    for seq in sequences {
        let trace = rgae_forward_seq(model, seq, dropout, &mut rng, 1.0 / te);
        loss += trace.ce_bits;
        rgae_backward_seq(model, &trace, mode, te, &mut grads);
    }
    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Baseline forward/backward over a lockstep batch
// ---------------------------------------------------------------------------

/// Window on-bits of sequence `seq` at step `t` (frames t-w+1..=t), with
/// optional dropout already applied by the caller.
fn baseline_window_bits(seq: &FrameSequence, t: usize, window: usize, alphabet: usize) -> SparseVec {
    let mut sv = SparseVec::default();
    for w in 0..window {
        let ti = t as i64 - (window as i64 - 1) + w as i64;
        if ti >= 0 {
            for &p in &seq.frames[ti as usize] {
                sv.push((w * alphabet + p as usize) as u32, 1.0);
            }
        }
    }
    sv
}

fn dropout_sparse(sv: SparseVec, dropout: f64, rng: &mut Option<&mut Rng64>) -> SparseVec {
    match rng {
        Some(r) if dropout > 0.0 => {
            let keep = 1.0 - dropout;
            let mut out = SparseVec::default();
            for (&i, &v) in sv.idx.iter().zip(&sv.val) {
                if r.random_range(0.0..1.0) < keep {
                    out.push(i, v / keep);
                }
            }
            out
        }
        _ => sv,
    }
}

/// Mean cross-entropy and gradients of one lockstep batch of equal-length
/// sequences for the baseline GRU.
pub fn rnn_loss_and_grads(
    model: &BaselineRnn,
    sequences: &[FrameSequence],
    dropout: f64,
    mut rng: Option<&mut Rng64>,
) -> Result<(f64, GruGrads)> {
    if sequences.is_empty() {
        return Err(Error::EmptyBatch);
    }
    validate_batch(sequences)?;
    let t_len = sequences[0].len();
    if sequences.iter().any(|s| s.len() != t_len) {
        return Err(Error::ShapeMismatch(
            "lockstep batch requires equal-length sequences".into(),
        ));
    }
    let nb = sequences.len();
    let steps = t_len - 1;
    let hd = model.gru.hidden();
    let m = model.alphabet;
    let total_events = (nb * steps) as f64;
    let scale = 1.0 / (LN2 * total_events);

    // Fix dropout up front so forward and backward see the same bits.
    let mut inputs: Vec<Vec<SparseVec>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut per_b = Vec::with_capacity(nb);
        for seq in sequences {
            let sv = baseline_window_bits(seq, t, model.window, m);
            per_b.push(dropout_sparse(sv, dropout, &mut rng));
        }
        inputs.push(per_b);
    }

    // Forward.
    let mut caches: Vec<GruStepCache> = Vec::with_capacity(steps);
    let mut probs: Vec<BatchMat> = Vec::with_capacity(steps);
    let mut h = BatchMat::zeros(hd, nb);
    let mut loss = 0.0;
    for t in 0..steps {
        let mut pre_z = BatchMat::zeros(hd, nb);
        let mut pre_r = BatchMat::zeros(hd, nb);
        let mut pre_h = BatchMat::zeros(hd, nb);
        for (b, sv) in inputs[t].iter().enumerate() {
            add_sparse_input(&model.gru, &mut pre_z, &mut pre_r, &mut pre_h, b, &sv.idx, &sv.val);
        }
        let cache = gru_step_pre(&model.gru, pre_z, pre_r, pre_h, &h);
        h = cache.h.clone();

        let mut o = BatchMat::zeros(m, nb);
        o.affine_add(&model.gru.u_o, &h);
        // Column-wise softmax.
        for b in 0..nb {
            let mut col = o.column(b);
            crate::mathcore::softmax_in_place(&mut col);
            let next = sequences[b].frames[t + 1][0] as usize;
            loss += -col[next].max(1e-12).log2() / total_events;
            o.set_column(b, &col);
        }
        probs.push(o);
        caches.push(cache);
    }

    // Backward.
    let mut grads = GruGrads::zeros_like(&model.gru);
    let zero_h = BatchMat::zeros(hd, nb);
    let mut dh = BatchMat::zeros(hd, nb);
    for t in (0..steps).rev() {
        let mut do_t = probs[t].clone();
        for b in 0..nb {
            let next = sequences[b].frames[t + 1][0] as usize;
            *do_t.at_mut(next, b) -= 1.0;
        }
        do_t.data_mut().iter_mut().for_each(|v| *v *= scale);

        BatchMat::accumulate_outer(&mut grads.u_o, &do_t, &caches[t].h);
        dh.affine_t_add(&model.gru.u_o, &do_t);

        let h_prev = if t == 0 { &zero_h } else { &caches[t - 1].h };
        let back = gru_backward_step(&model.gru, &caches[t], h_prev, &mut dh, &mut grads, None);
        for (b, sv) in inputs[t].iter().enumerate() {
            accumulate_input_grads_sparse(&mut grads, b, &sv.idx, &sv.val, &back);
        }
    }

    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Optimizer plumbing
// ---------------------------------------------------------------------------

const GRU_TENSORS: usize = 10;

fn gru_tensor<'a>(p: &'a GruParams, i: usize) -> &'a [f64] {
    match i {
        0 => p.w_z_t.data(),
        1 => p.w_r_t.data(),
        2 => p.w_h_t.data(),
        3 => p.u_z.data(),
        4 => p.u_r.data(),
        5 => p.u_h.data(),
        6 => &p.b_z,
        7 => &p.b_r,
        8 => &p.b_h,
        9 => p.u_o.data(),
        _ => unreachable!(),
    }
}

fn gru_tensor_mut<'a>(p: &'a mut GruParams, i: usize) -> &'a mut [f64] {
    match i {
        0 => p.w_z_t.data_mut(),
        1 => p.w_r_t.data_mut(),
        2 => p.w_h_t.data_mut(),
        3 => p.u_z.data_mut(),
        4 => p.u_r.data_mut(),
        5 => p.u_h.data_mut(),
        6 => &mut p.b_z,
        7 => &mut p.b_r,
        8 => &mut p.b_h,
        9 => p.u_o.data_mut(),
        _ => unreachable!(),
    }
}

fn gru_grad<'a>(g: &'a GruGrads, i: usize) -> &'a [f64] {
    match i {
        0 => g.w_z_t.data(),
        1 => g.w_r_t.data(),
        2 => g.w_h_t.data(),
        3 => g.u_z.data(),
        4 => g.u_r.data(),
        5 => g.u_h.data(),
        6 => &g.b_z,
        7 => &g.b_r,
        8 => &g.b_h,
        9 => g.u_o.data(),
        _ => unreachable!(),
    }
}

fn gru_grad_mut<'a>(g: &'a mut GruGrads, i: usize) -> &'a mut [f64] {
    match i {
        0 => g.w_z_t.data_mut(),
        1 => g.w_r_t.data_mut(),
        2 => g.w_h_t.data_mut(),
        3 => g.u_z.data_mut(),
        4 => g.u_r.data_mut(),
        5 => g.u_h.data_mut(),
        6 => &mut g.b_z,
        7 => &mut g.b_r,
        8 => &mut g.b_h,
        9 => g.u_o.data_mut(),
        _ => unreachable!(),
    }
}

fn gae_grad_mut<'a>(g: &'a mut GaeGrads, i: usize) -> &'a mut [f64] {
    match i {
        0 => g.dq_t.data_mut(),
        1 => g.dv_t.data_mut(),
        2 => g.dw_m.data_mut(),
        _ => unreachable!(),
    }
}

/// Scale all gradients so their global Euclidean norm is at most `clip`.
fn clip_gradients(gru: &mut GruGrads, gae: Option<&mut GaeGrads>, clip: f64) {
    let mut sq = 0.0;
    for i in 0..GRU_TENSORS {
        sq += gru_grad(gru, i).iter().map(|v| v * v).sum::<f64>();
    }
    if let Some(g) = &gae {
        for d in [g.dq_t.data(), g.dv_t.data(), g.dw_m.data()] {
            sq += d.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > clip && norm > 0.0 {
        let s = clip / norm;
        for i in 0..GRU_TENSORS {
            gru_grad_mut(gru, i).iter_mut().for_each(|v| *v *= s);
        }
        if let Some(g) = gae {
            for i in 0..3 {
                gae_grad_mut(g, i).iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

fn new_gru_opt(p: &GruParams, cfg: &TrainConfig) -> Vec<RmsPropState> {
    (0..GRU_TENSORS)
        .map(|i| RmsPropState::new(gru_tensor(p, i).len(), cfg.rmsprop_decay, cfg.rmsprop_epsilon))
        .collect()
}

// ---------------------------------------------------------------------------
// Epoch loops
// ---------------------------------------------------------------------------

fn length_buckets(corpus: &Corpus) -> BTreeMap<usize, Vec<usize>> {
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.sequences.iter().enumerate() {
        buckets.entry(s.len()).or_default().push(i);
    }
    buckets
}

fn validate_batch(sequences: &[FrameSequence]) -> Result<()> {
    for s in sequences {
        if s.len() < 2 {
            return Err(Error::InvalidArgument(
                "sequences need at least 2 frames".into(),
            ));
        }
        if !s.is_monophonic() {
            return Err(Error::InvalidArgument(
                "training requires monophonic sequences".into(),
            ));
        }
    }
    Ok(())
}

fn validate_training_corpus(corpus: &Corpus, alphabet: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.alphabet != alphabet {
        return Err(Error::ShapeMismatch(format!(
            "corpus alphabet {} vs model alphabet {}",
            corpus.alphabet, alphabet
        )));
    }
    for s in &corpus.sequences {
        if s.len() < 2 {
            return Err(Error::InvalidArgument(
                "training sequences need at least 2 frames".into(),
            ));
        }
        if !s.is_monophonic() {
            return Err(Error::InvalidArgument(
                "training requires monophonic sequences".into(),
            ));
        }
    }
    Ok(())
}

fn make_batches(
    corpus: &Corpus,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let buckets = length_buckets(corpus);
    let mut batches = Vec::new();
    for (len, mut idxs) in buckets {
        let mut rng = seeded_rng(derive_seed(seed, &[0x626174, epoch as u64, len as u64]));
        idxs.shuffle(&mut rng);
        for chunk in idxs.chunks(batch_size.max(1)) {
            batches.push(chunk.to_vec());
        }
    }
    batches
}

fn batch_sequences(corpus: &Corpus, batch: &[usize], cfg: &TrainConfig, tag: u64) -> Vec<FrameSequence> {
    let seqs: Vec<FrameSequence> = batch
        .iter()
        .map(|&i| corpus.sequences[i].clone())
        .collect();
    if cfg.augment_transpose {
        augment_transpose(
            &seqs,
            (cfg.augment_min, cfg.augment_max),
            derive_seed(cfg.seed, &[0x617567, tag]),
        )
    } else {
        seqs
    }
}

/// Train the RGAE with BPTT: frozen-GAE epochs first, then the configured
/// number of fine-tuning epochs over the whole architecture. Returns the
/// per-epoch mean cross-entropy in bits per prediction event.
pub fn rgae_train(
    model: &mut RgaeModel,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if cfg.finetune_epochs > cfg.epochs {
        return Err(Error::Config(
            "finetune_epochs must not exceed epochs".into(),
        ));
    }
    validate_training_corpus(corpus, model.gae.alphabet())?;

    let mut gru_opt = new_gru_opt(&model.gru, cfg);
    let mut gae_opt: Vec<RmsPropState> = [
        model.gae.q_t.data().len(),
        model.gae.v_t.data().len(),
        model.gae.w_m.data().len(),
    ]
    .iter()
    .map(|&len| RmsPropState::new(len, cfg.rmsprop_decay, cfg.rmsprop_epsilon))
    .collect();

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mode = if epoch + cfg.finetune_epochs >= cfg.epochs && cfg.finetune_epochs > 0 {
            RgaeGradMode::FineTune
        } else {
            RgaeGradMode::FrozenGae
        };
        let rate = cfg.lr.rate(epoch);
        let batches = make_batches(corpus, cfg.batch_size, cfg.seed, epoch);
        let mut epoch_bits = 0.0;
        let mut epoch_events = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let tag = (epoch * 1_000_003 + bi) as u64;
            let seqs = batch_sequences(corpus, batch, cfg, tag);
            let events: usize = seqs.iter().map(|s| s.len() - 1).sum();
            let mut drop_rng = seeded_rng(derive_seed(cfg.seed, &[0x64726f70, tag]));
            let rng_opt = (cfg.dropout_rate > 0.0).then_some(&mut drop_rng);
            let (loss, mut grads) =
                rgae_loss_and_grads(model, &seqs, mode, cfg.dropout_rate, rng_opt)?;
            clip_gradients(&mut grads.gru, grads.gae.as_mut(), cfg.grad_clip_norm);

            for i in 0..GRU_TENSORS {
                rmsprop_step(
                    gru_tensor_mut(&mut model.gru, i),
                    gru_grad(&grads.gru, i),
                    &mut gru_opt[i],
                    rate,
                )?;
                snap_to_f32(gru_tensor_mut(&mut model.gru, i));
            }
            if let Some(gae_grads) = &grads.gae {
                rmsprop_step(
                    model.gae.q_t.data_mut(),
                    gae_grads.dq_t.data(),
                    &mut gae_opt[0],
                    rate,
                )?;
                rmsprop_step(
                    model.gae.v_t.data_mut(),
                    gae_grads.dv_t.data(),
                    &mut gae_opt[1],
                    rate,
                )?;
                rmsprop_step(
                    model.gae.w_m.data_mut(),
                    gae_grads.dw_m.data(),
                    &mut gae_opt[2],
                    rate,
                )?;
                snap_to_f32(model.gae.q_t.data_mut());
                snap_to_f32(model.gae.v_t.data_mut());
                snap_to_f32(model.gae.w_m.data_mut());
            }
            epoch_bits += loss * events as f64;
            epoch_events += events;
        }
        trace.push(epoch_bits / epoch_events as f64);
    }
    Ok(trace)
}

/// Train the baseline GRU with lockstep-batched BPTT.
pub fn rnn_train(
    model: &mut BaselineRnn,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    validate_training_corpus(corpus, model.alphabet)?;
    let mut opt = new_gru_opt(&model.gru, cfg);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let rate = cfg.lr.rate(epoch);
        let batches = make_batches(corpus, cfg.batch_size, cfg.seed, epoch);
        let mut epoch_bits = 0.0;
        let mut epoch_events = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let tag = (epoch * 1_000_003 + bi) as u64;
            let seqs = batch_sequences(corpus, batch, cfg, tag);
            let events: usize = seqs.iter().map(|s| s.len() - 1).sum();
            let mut drop_rng = seeded_rng(derive_seed(cfg.seed, &[0x64726f70, tag]));
            let rng_opt = (cfg.dropout_rate > 0.0).then_some(&mut drop_rng);
            let (loss, mut grads) = rnn_loss_and_grads(model, &seqs, cfg.dropout_rate, rng_opt)?;
            clip_gradients(&mut grads, None, cfg.grad_clip_norm);
            for i in 0..GRU_TENSORS {
                rmsprop_step(
                    gru_tensor_mut(&mut model.gru, i),
                    gru_grad(&grads, i),
                    &mut opt[i],
                    rate,
                )?;
                snap_to_f32(gru_tensor_mut(&mut model.gru, i));
            }
            epoch_bits += loss * events as f64;
            epoch_events += events;
        }
        trace.push(epoch_bits / epoch_events as f64);
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

fn scatter_add(grad: &mut Matrix, sv: &SparseVec, contribution: &[f64]) {
    for (&i, &v) in sv.idx.iter().zip(&sv.val) {
        axpy(grad.row_mut(i as usize), v, contribution);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FrameSequence;
    use crate::gae::GaeParams;
    use crate::recurrent::PitchModel;

    fn tiny_corpus() -> Corpus {
        let seqs = vec![
            FrameSequence::from_pitches(&[0, 2, 4, 6, 0, 2, 4, 6, 0, 2], 8).unwrap(),
            FrameSequence::from_pitches(&[1, 3, 5, 7, 1, 3, 5, 7, 1, 3], 8).unwrap(),
            FrameSequence::from_pitches(&[4, 4, 4, 4, 4, 4, 4, 4], 8).unwrap(),
        ];
        Corpus::new(8, seqs).unwrap()
    }

    fn tiny_rgae(seed: u64) -> RgaeModel {
        let gae = GaeParams::init(2, 8, 4, 3, seed);
        RgaeModel::init(gae, 4, seed + 1)
    }

    #[test]
    fn rgae_training_reduces_loss_and_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 12,
            lr: LrSchedule::new(0.01, 12),
            batch_size: 2,
            seed: 3,
            ..Default::default()
        };
        let corpus = tiny_corpus();
        let mut m1 = tiny_rgae(5);
        let mut m2 = m1.clone();
        let t1 = rgae_train(&mut m1, &corpus, &cfg).unwrap();
        let t2 = rgae_train(&mut m2, &corpus, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(m1, m2);
        assert_eq!(t1.len(), 12);
        assert!(t1.last().unwrap() < &t1[0], "loss should drop: {:?}", t1);
        assert!(t1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rnn_training_reduces_loss() {
        let cfg = TrainConfig {
            epochs: 15,
            lr: LrSchedule::new(0.01, 15),
            batch_size: 2,
            seed: 4,
            ..Default::default()
        };
        let corpus = tiny_corpus();
        let mut model = BaselineRnn::init(2, 8, 6, 9);
        let trace = rnn_train(&mut model, &corpus, &cfg).unwrap();
        assert!(trace.last().unwrap() < &trace[0], "{:?}", trace);
    }

    #[test]
    fn train_loss_matches_eval_forward() {
        // The batched training forward and the streaming eval forward are
        // independent paths; their cross-entropies must agree.
        let corpus = tiny_corpus();
        let model = BaselineRnn::init(2, 8, 6, 13);
        let (loss, _) = rnn_loss_and_grads(&model, &corpus.sequences[..2], 0.0, None).unwrap();
        let pm = PitchModel::Baseline(model);
        let mut bits = 0.0;
        let mut events = 0;
        for seq in &corpus.sequences[..2] {
            let preds = pm.forward(seq).unwrap();
            for (t, p) in preds.iter().enumerate() {
                bits += -p[seq.frames[t + 1][0] as usize].max(1e-12).log2();
                events += 1;
            }
        }
        assert!((loss - bits / events as f64).abs() < 1e-12);
    }

    #[test]
    fn rgae_train_loss_matches_eval_forward() {
        let corpus = tiny_corpus();
        let model = tiny_rgae(21);
        let (loss, _) = rgae_loss_and_grads(
            &model,
            &corpus.sequences,
            RgaeGradMode::FrozenGae,
            0.0,
            None,
        )
        .unwrap();
        let pm = PitchModel::Rgae(model);
        let mut bits = 0.0;
        let mut events = 0;
        for seq in &corpus.sequences {
            let preds = pm.forward(seq).unwrap();
            for (t, p) in preds.iter().enumerate() {
                bits += -p[seq.frames[t + 1][0] as usize].max(1e-12).log2();
                events += 1;
            }
        }
        assert!((loss - bits / events as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_rejected() {
        let cfg = TrainConfig::default();
        let mut model = tiny_rgae(1);
        assert!(matches!(
            rgae_train(&mut model, &Corpus::empty(8), &cfg),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn finetune_epochs_touch_gae_params() {
        let corpus = tiny_corpus();
        let cfg = TrainConfig {
            epochs: 4,
            finetune_epochs: 2,
            lr: LrSchedule::new(0.01, 4),
            batch_size: 3,
            seed: 8,
            ..Default::default()
        };
        let mut model = tiny_rgae(2);
        let frozen_gae = model.gae.clone();
        rgae_train(&mut model, &corpus, &cfg).unwrap();
        assert_ne!(model.gae, frozen_gae, "fine-tuning must update the gae");

        let cfg_frozen = TrainConfig {
            finetune_epochs: 0,
            ..cfg
        };
        let mut model2 = tiny_rgae(2);
        let gae_before = model2.gae.clone();
        rgae_train(&mut model2, &corpus, &cfg_frozen).unwrap();
        assert_eq!(model2.gae, gae_before, "frozen training must not touch the gae");
    }
}
