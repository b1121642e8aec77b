"""Benchmark the compiled lattice kernels against the NumPy fallback.

Run with: python -m alcrf.bench
"""

from __future__ import annotations

import time

import numpy as np

from .kernels import pykernels

try:
    from .kernels import _ckernels as ckernels
except ImportError:
    ckernels = None


def _random_batch(rng, n_sent, min_len, max_len, n_labels):
    lengths = rng.integers(min_len, max_len + 1, size=n_sent)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    emissions = rng.normal(size=(int(offsets[-1]), n_labels))
    trans = rng.normal(size=(n_labels, n_labels))
    return emissions, offsets, trans


def _time(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    cases = [
        ("small pool", 500, 5, 15, 9),
        ("medium pool", 3000, 5, 15, 17),
        ("long sentences", 300, 40, 80, 17),
    ]
    impls = [("python", pykernels)]
    if ckernels is not None:
        impls.append(("cython", ckernels))
    else:
        print("compiled kernels not built; benchmarking fallback only")

    print(f"{'case':<16}{'kernel':<10}{'fwd-bwd (s)':<14}{'viterbi (s)':<14}")
    for name, n_sent, lo, hi, n_labels in cases:
        emis, offs, trans = _random_batch(rng, n_sent, lo, hi, n_labels)
        baseline = None
        for impl_name, impl in impls:
            t_fb = _time(impl.batch_forward_backward, emis, offs, trans, True)
            t_vit = _time(impl.batch_viterbi, emis, offs, trans)
            print(f"{name:<16}{impl_name:<10}{t_fb:<14.4f}{t_vit:<14.4f}")
            if impl_name == "python":
                baseline = (t_fb, t_vit)
            elif baseline:
                print(
                    f"{'':<16}{'speedup':<10}"
                    f"{baseline[0] / t_fb:<14.1f}{baseline[1] / t_vit:<14.1f}"
                )


if __name__ == "__main__":
    main()
