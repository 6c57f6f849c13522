//! Equivalence of the library's forward paths with independent
//! straight-line evaluations on small instances.

mod common;

use common::{OracleGae, OracleGru};
use rgae_core::data::FrameSequence;
use rgae_core::gae::{infer_mapping, reconstruct, GaeParams, OutputKind};
use rgae_core::mathcore::{seeded_rng, Rng64};
use rgae_core::model_io::NamedTensor;
use rgae_core::recurrent::{gru_step, BaselineRnn, GruParams, PitchModel, RgaeModel};
use rand::Rng;

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what} length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol,
            "{what}[{i}]: {x} vs {y} (diff {})",
            (x - y).abs()
        );
    }
}

fn random_pitches(len: usize, alphabet: usize, rng: &mut Rng64) -> Vec<u16> {
    (0..len).map(|_| rng.random_range(0..alphabet) as u16).collect()
}

#[test]
fn hand_set_tiny_gae_matches_oracle() {
    // M=3, n=1, F=2, K=2 with explicit weights.
    let tensors = vec![
        NamedTensor {
            name: "gae.q".into(),
            dims: vec![2, 3],
            values: vec![0.5, -0.25, 1.0, 0.75, 0.1, -0.6],
        },
        NamedTensor {
            name: "gae.v".into(),
            dims: vec![2, 3],
            values: vec![-0.3, 0.8, 0.2, 0.4, -0.9, 0.6],
        },
        NamedTensor {
            name: "gae.w_m".into(),
            dims: vec![2, 2],
            values: vec![1.2, -0.7, 0.3, 0.9],
        },
    ];
    let params = GaeParams::from_named_tensors(&tensors, "gae", None).unwrap();
    let oracle = OracleGae::from_tensors(&tensors, "gae");

    for ctx_pitch in 0..3u16 {
        for target_pitch in 0..3u16 {
            let ctx = vec![vec![ctx_pitch]];
            let target = vec![target_pitch];
            let got = infer_mapping(&params, &ctx, &target).unwrap();
            let want = oracle.infer_mapping(&ctx, &target);
            assert_close(&got, &want, 1e-9, "mapping");
            for kind in [OutputKind::Sigmoid, OutputKind::Softmax] {
                let recon = reconstruct(&params, &ctx, &want, kind).unwrap();
                let recon_o = oracle.reconstruct(&ctx, &want, kind == OutputKind::Softmax);
                assert_close(&recon, &recon_o, 1e-9, "reconstruction");
            }
        }
    }
}

#[test]
fn random_small_gae_matches_oracle() {
    for seed in 0..10 {
        let params = GaeParams::init(3, 4, 4, 3, seed);
        let tensors = params.to_named_tensors("gae");
        let oracle = OracleGae::from_tensors(&tensors, "gae");
        let mut rng = seeded_rng(seed + 100);
        for _ in 0..5 {
            let ctx: Vec<Vec<u16>> = (0..3)
                .map(|_| vec![rng.random_range(0..4) as u16])
                .collect();
            let target = vec![rng.random_range(0..4) as u16];
            let mapping = infer_mapping(&params, &ctx, &target).unwrap();
            assert_close(
                &mapping,
                &oracle.infer_mapping(&ctx, &target),
                1e-9,
                "mapping",
            );
            let recon = reconstruct(&params, &ctx, &mapping, OutputKind::Softmax).unwrap();
            assert_close(
                &recon,
                &oracle.reconstruct(&ctx, &mapping, true),
                1e-9,
                "recon",
            );
        }
    }
}

#[test]
fn gru_step_matches_oracle() {
    for seed in 0..10 {
        let params = GruParams::init(2, 2, 2, seed);
        let tensors = params.to_named_tensors("gru");
        let oracle = OracleGru::from_tensors(&tensors, "gru");
        let mut rng = seeded_rng(seed + 7);
        let mut h = vec![0.0, 0.0];
        let mut h_o = h.clone();
        for _ in 0..6 {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            h = gru_step(&params, &x, &h).unwrap();
            h_o = oracle.step(&x, &h_o);
            assert_close(&h, &h_o, 1e-9, "gru hidden");
        }
    }
}

#[test]
fn rgae_forward_matches_oracle_small() {
    // M, n, F, K, H <= 4, several seeds and sequences.
    for seed in 0..8 {
        let gae = GaeParams::init(2, 4, 4, 3, seed);
        let model = RgaeModel::init(gae, 4, seed + 1);
        let pitch_model = PitchModel::Rgae(model);
        let tensors = pitch_model.to_named_tensors();
        let o_gae = OracleGae::from_tensors(&tensors, "gae");
        let o_gru = OracleGru::from_tensors(&tensors, "gru");

        let mut rng = seeded_rng(seed + 50);
        let pitches = random_pitches(7, 4, &mut rng);
        let seq = FrameSequence::from_pitches(&pitches, 4).unwrap();
        let got = pitch_model.forward(&seq).unwrap();
        let want = common::rgae_forward(&o_gae, &o_gru, &pitches);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_close(g, w, 1e-6, "rgae prediction");
        }
    }
}

#[test]
fn rnn_forward_matches_oracle_small() {
    for seed in 0..8 {
        let model = BaselineRnn::init(3, 4, 4, seed);
        let pitch_model = PitchModel::Baseline(model);
        let tensors = pitch_model.to_named_tensors();
        let o_gru = OracleGru::from_tensors(&tensors, "rnn");

        let mut rng = seeded_rng(seed + 90);
        let pitches = random_pitches(9, 4, &mut rng);
        let seq = FrameSequence::from_pitches(&pitches, 4).unwrap();
        let got = pitch_model.forward(&seq).unwrap();
        let want = common::rnn_forward(&o_gru, &pitches, 3, 4);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_close(g, w, 1e-6, "rnn prediction");
        }
    }
}

#[test]
fn pretrain_batch_loss_matches_straight_line() {
    // Fixed tiny batch, delta fixed to 2, no dropout: the prepared-batch
    // loss must equal a from-scratch evaluation of the shifted
    // reconstruction game.
    use rgae_core::gae::{
        binary_cross_entropy, prepare_pretrain_batch, pretrain_loss_and_grads, shift,
        shift_window, GaePretrainConfig,
    };
    let params = GaeParams::init(2, 5, 3, 2, 42);
    let tensors = params.to_named_tensors("gae");
    let oracle = OracleGae::from_tensors(&tensors, "gae");
    let cfg = GaePretrainConfig {
        delta_min: 2,
        delta_max: 2,
        dropout_rate: 0.0,
        sparsity_target: 0.05,
        sparsity_weight: 0.3,
        norm_deviation_weight: 0.2,
        ..Default::default()
    };
    let pairs = vec![
        (vec![vec![0u16], vec![2u16]], vec![3u16]),
        (vec![vec![4u16], vec![1u16]], vec![0u16]),
    ];
    let mut rng = seeded_rng(1);
    let batch = prepare_pretrain_batch(&params, &pairs, &cfg, &mut rng).unwrap();
    let (loss, _) = pretrain_loss_and_grads(&params, &batch, &cfg);

    // Straight-line: mean shifted BCE + sparsity + norm deviation.
    let mut bce = 0.0;
    let mut mappings = Vec::new();
    for (ctx, target) in &pairs {
        let m = oracle.infer_mapping(ctx, target);
        let recon = oracle.reconstruct(&shift_window(ctx, 2, 5), &m, false);
        let shifted_target = shift(target, 2, 5);
        let mut dense = vec![0.0; 5];
        for &p in &shifted_target {
            dense[p as usize] = 1.0;
        }
        bce += binary_cross_entropy(&dense, &recon);
        mappings.push(m);
    }
    bce /= pairs.len() as f64;

    let mut sparsity = 0.0;
    for k in 0..2 {
        let mean = (mappings[0][k] + mappings[1][k]) / 2.0;
        sparsity += (mean - cfg.sparsity_target) * (mean - cfg.sparsity_target);
    }
    sparsity *= cfg.sparsity_weight;

    let mut norm_dev = 0.0;
    for mat in [&oracle.q, &oracle.v] {
        let cols = mat[0].len();
        let norms: Vec<f64> = (0..cols)
            .map(|c| mat.iter().map(|row| row[c] * row[c]).sum::<f64>().sqrt())
            .collect();
        let mean = norms.iter().sum::<f64>() / cols as f64;
        norm_dev += norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>();
    }
    norm_dev *= cfg.norm_deviation_weight;

    let want = bce + sparsity + norm_dev;
    assert!(
        (loss - want).abs() < 1e-6,
        "pretrain loss {loss} vs straight-line {want}"
    );
}
