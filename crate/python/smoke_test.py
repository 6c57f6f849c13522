#!/usr/bin/env python3
"""Smoke test of the rgae_py extension module.

Builds nothing itself: run `cargo build --release -p rgae-python` first.
The script locates the cdylib under target/, exposes it as an importable
module, and drives a miniature end-to-end run: dataset generation, GAE
pre-training, RGAE and baseline training, evaluation, continuation, and
the ensemble rule.
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_rgae_py():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("librgae_py.so", "rgae_py.so", "librgae_py.dylib")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit(
            "rgae_py cdylib not found; run `cargo build --release -p rgae-python` first"
        )
    stage = tempfile.mkdtemp(prefix="rgae_py_")
    shutil.copy(built, os.path.join(stage, "rgae_py.so"))
    sys.path.insert(0, stage)
    import rgae_py

    return rgae_py


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    rp = import_rgae_py()

    # Shift is a bijection with the documented indexing.
    assert rp.shift([0], 1, 4) == [3]
    assert rp.shift(rp.shift([1, 3], 5, 12), -5, 12) == [1, 3]

    # Entropy and the ensemble rule.
    assert approx(rp.shannon_entropy([0.25] * 4), 2.0)
    assert approx(rp.relative_entropy([0.5, 0.25, 0.25, 0.0]), 0.75)
    same = rp.combine([[0.7, 0.1, 0.2], [0.7, 0.1, 0.2]])
    assert all(approx(a, b) for a, b in zip(same, [0.7, 0.1, 0.2]))

    # Tiny dataset: 2 schemes, short sequences.
    train, test, _ = rp.generate_scheme_dataset(
        alphabet=24,
        fragment_lengths=[2, 4],
        train_per_cell=3,
        test_per_cell=1,
        eval_per_cell=0,
        sequence_length=48,
        seed=7,
        schemes=[[5], [3, -3]],
    )
    assert len(train) == 2 * 2 * 3 and len(test) == 2 * 2 * 1
    assert train.alphabet == 24

    # Pre-train a small GAE and check the mapping/reconstruction contracts.
    gae, pre_trace = rp.pretrain_gae(
        train, context_len=4, factors=32, mapping=8, epochs=4, seed=1, augment=True
    )
    assert len(pre_trace) == 4 and pre_trace[-1] < pre_trace[0]
    window = [[10], [12], [15], [17]]
    mapping = gae.infer_mapping(window, [20])
    assert len(mapping) == 8 and all(v > 0 for v in mapping)
    dist = gae.reconstruct(window, mapping, softmax=True)
    assert approx(sum(dist), 1.0, 1e-9)

    # Train both models briefly and evaluate.
    rgae, trace = rp.train_rgae(gae, train, hidden=12, epochs=6, seed=2, augment=True)
    assert len(trace) == 6
    baseline, _ = rp.train_baseline(
        train, window=4, hidden=24, epochs=6, seed=3, augment=True
    )
    ce_rgae, per_seq = rp.evaluate_ce(rgae, test)
    ce_base, _ = rp.evaluate_ce(baseline, test)
    assert len(per_seq) == len(test)
    assert math.isfinite(ce_rgae) and math.isfinite(ce_base)

    prec, pct, per = rp.evaluate_continuation(rgae, test, primer_len=8, threshold=0.99)
    assert 0.0 <= prec <= 1.0 and 0.0 <= pct <= 100.0 and len(per) == len(test)

    # Model files round-trip through the shared binary format.
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.rgae")
        rgae.save(path)
        back = rp.Model.load(path)
        assert back.kind == "rgae"
        assert back.param_count() == rgae.param_count()
        ce_back, _ = rp.evaluate_ce(back, test)
        assert approx(ce_back, ce_rgae, 0.0)

        corpus_path = os.path.join(tmp, "train.corpus")
        train.save(corpus_path)
        again = rp.Corpus.load(corpus_path)
        assert again.sequences() == train.sequences()

    print("smoke test passed:")
    print(f"  rgae CE {ce_rgae:.3f} bits, baseline CE {ce_base:.3f} bits")
    print(f"  continuation precision {prec:.3f}, flawless {pct:.1f}%")


if __name__ == "__main__":
    main()
