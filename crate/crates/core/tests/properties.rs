//! Property tests for the contracts that hold over whole input classes.

use proptest::prelude::*;
use rgae_core::data::{
    read_corpus_str, shift_frame, write_corpus_string, Corpus, FrameSequence,
};
use rgae_core::ensemble::{combine, WeightedCombineConfig};
use rgae_core::mathcore::{softmax, softplus, LrSchedule};

fn finite_vec(len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, len..=len)
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-9..1.0f64, len..=len).prop_map(|mut v| {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_sums_to_one(xs in finite_vec(6, 500.0)) {
        let p = softmax(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn softplus_finite_over_huge_range(xs in finite_vec(4, 1e6)) {
        let y = softplus(&xs);
        prop_assert!(y.iter().all(|&v| v.is_finite() && v > 0.0));
    }

    #[test]
    fn lr_schedule_non_increasing(initial in 1e-6..1.0f64, total in 1usize..200) {
        let s = LrSchedule::new(initial, total);
        prop_assert_eq!(s.rate(0), initial);
        prop_assert_eq!(s.rate(total), 0.0);
        let mut prev = f64::INFINITY;
        for e in 0..=total + 5 {
            let r = s.rate(e);
            prop_assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn shift_is_a_bijection(
        pitches in prop::collection::vec(0u16..32, 1..6),
        delta in -100i64..100,
    ) {
        let mut frame = pitches.clone();
        frame.sort_unstable();
        frame.dedup();
        let back = shift_frame(&shift_frame(&frame, delta, 32), -delta, 32);
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn corpus_round_trip(
        seqs in prop::collection::vec(
            prop::collection::vec(
                prop::collection::vec(0u16..24, 1..3),
                1..8,
            ),
            0..5,
        )
    ) {
        let sequences: Vec<FrameSequence> = seqs
            .into_iter()
            .map(|frames| FrameSequence::new(frames, 24).unwrap())
            .collect();
        let corpus = Corpus::new(24, sequences).unwrap();
        let text = write_corpus_string(&corpus);
        let back = read_corpus_str(&text, "prop").unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(write_corpus_string(&back), text);
    }

    #[test]
    fn combine_is_permutation_equivariant(
        d1 in distribution(5),
        d2 in distribution(5),
        bias in 0.0..2.0f64,
    ) {
        let cfg = WeightedCombineConfig { bias, entropy_floor: 1e-6 };
        let out = combine(&[d1.clone(), d2.clone()], &cfg).unwrap();
        // Rotate the alphabet by 2.
        let rot = |v: &[f64]| -> Vec<f64> {
            (0..v.len()).map(|i| v[(i + 2) % v.len()]).collect()
        };
        let out_rot = combine(&[rot(&d1), rot(&d2)], &cfg).unwrap();
        let expect = rot(&out);
        for (a, b) in out_rot.iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn combine_of_copies_is_identity(d in distribution(4), k in 1usize..5, bias in 0.0..2.0f64) {
        let cfg = WeightedCombineConfig { bias, entropy_floor: 1e-6 };
        let out = combine(&vec![d.clone(); k], &cfg).unwrap();
        for (a, b) in out.iter().zip(&d) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
