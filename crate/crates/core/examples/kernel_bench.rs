//! Rough single-thread timings of the hot batched kernels.

use rgae_core::mathcore::{seeded_rng, BatchMat, Matrix};
use rand::Rng;
use std::time::Instant;

fn main() {
    let mut rng = seeded_rng(1);
    let h = 512usize;
    let nb = 8usize;
    let w = Matrix::glorot_uniform(h, h, h, h, &mut rng);
    let mut x = BatchMat::zeros(h, nb);
    for v in x.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut y = BatchMat::zeros(h, nb);
    let iters = 2000;

    let t = Instant::now();
    for _ in 0..iters {
        y.affine_add(&w, &x);
    }
    let dt = t.elapsed().as_secs_f64();
    let flops = (2 * h * h * nb * iters) as f64;
    println!("affine_add:       {:8.2} ms/call  {:6.2} Gflop/s", dt / iters as f64 * 1e3, flops / dt / 1e9);

    let t = Instant::now();
    for _ in 0..iters {
        y.affine_t_add(&w, &x);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("affine_t_add:     {:8.2} ms/call  {:6.2} Gflop/s", dt / iters as f64 * 1e3, flops / dt / 1e9);

    let mut g = Matrix::zeros(h, h);
    let t = Instant::now();
    for _ in 0..iters {
        BatchMat::accumulate_outer(&mut g, &y, &x);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("accumulate_outer: {:8.2} ms/call  {:6.2} Gflop/s", dt / iters as f64 * 1e3, flops / dt / 1e9);

    // elementwise gate cost
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..iters {
        for v in x.data() {
            acc += (1.0 / (1.0 + (-v).exp())) + v.tanh();
        }
    }
    let dt = t.elapsed().as_secs_f64();
    println!("sig+tanh 4096:    {:8.3} ms/call  (sink {acc:.3})", dt / iters as f64 * 1e3);

    // One full training batch at desk scale: 8 sequences x 256 frames.
    use rgae_core::data::{Corpus, FrameSequence};
    use rgae_core::recurrent::{rnn_loss_and_grads, BaselineRnn};
    let seqs: Vec<FrameSequence> = (0..8)
        .map(|s| {
            let pitches: Vec<u16> = (0..256).map(|t| ((t * 7 + s * 13) % 64) as u16).collect();
            FrameSequence::from_pitches(&pitches, 64).unwrap()
        })
        .collect();
    let corpus = Corpus::new(64, seqs).unwrap();
    let model = BaselineRnn::init(16, 64, 512, 3);
    let t = Instant::now();
    let n = 3;
    for _ in 0..n {
        let (loss, _) = rnn_loss_and_grads(&model, &corpus.sequences, 0.0, None).unwrap();
        std::hint::black_box(loss);
    }
    let dt = t.elapsed().as_secs_f64() / n as f64;
    println!("rnn batch fwd+bwd: {:7.1} ms/batch ({:.2} ms/step)", dt * 1e3, dt * 1e3 / 255.0);

    // Whole training epoch at desk scale (240 sequences).
    use rgae_core::mathcore::LrSchedule;
    use rgae_core::recurrent::{rnn_train, TrainConfig};
    let seqs: Vec<FrameSequence> = (0..240)
        .map(|s| {
            let pitches: Vec<u16> = (0..256).map(|t| ((t * 7 + s * 13) % 64) as u16).collect();
            FrameSequence::from_pitches(&pitches, 64).unwrap()
        })
        .collect();
    let corpus = Corpus::new(64, seqs).unwrap();
    let mut model = BaselineRnn::init(16, 64, 512, 3);
    let cfg = TrainConfig {
        epochs: 1,
        lr: LrSchedule::new(0.001, 1),
        augment_transpose: true,
        ..Default::default()
    };
    let t = Instant::now();
    rnn_train(&mut model, &corpus, &cfg).unwrap();
    println!("rnn_train 1 epoch: {:7.1} s", t.elapsed().as_secs_f64());

    // Same, on the generated scheme corpus if present, with the exact
    // seeds the CLI derives from a config seed of 0.
    if let Ok(real) = rgae_core::data::read_corpus("/tmp/desk/data/train.corpus") {
        use rgae_core::mathcore::derive_seed;
        let mut model = BaselineRnn::init(16, 64, 512, derive_seed(0, &[0x726e6e]));
        let cfg = TrainConfig {
            seed: derive_seed(0, &[0x7472]),
            ..cfg
        };
        let t = Instant::now();
        rnn_train(&mut model, &real, &cfg).unwrap();
        println!("rnn_train 1 epoch (scheme data, cli seeds): {:7.1} s", t.elapsed().as_secs_f64());
    }
}

// appended: full-step bench
