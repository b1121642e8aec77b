"""Pure NumPy lattice kernels (fallback when the compiled extension is absent).

All recursions run in log space.  Sentences are packed CSR-style: emissions
for a batch are stacked into one [T, L] array with an offsets vector of
length S+1 marking sentence boundaries.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

NAME = "python"


def batch_forward_backward(emissions, offsets, trans, want_pairwise=True):
    """Returns (log_z [S], marginals [T, L], pairwise [T-S, L, L] or None)."""
    emissions = np.ascontiguousarray(emissions, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    n_sent = len(offsets) - 1
    total, n_labels = emissions.shape
    log_z = np.empty(n_sent)
    marginals = np.empty_like(emissions)
    pairwise = np.empty((total - n_sent, n_labels, n_labels)) if want_pairwise else None

    for s in range(n_sent):
        lo, hi = offsets[s], offsets[s + 1]
        emis = emissions[lo:hi]
        n = hi - lo
        alpha = np.empty((n, n_labels))
        beta = np.empty((n, n_labels))
        alpha[0] = emis[0]
        for t in range(1, n):
            alpha[t] = emis[t] + logsumexp(alpha[t - 1][:, None] + trans, axis=0)
        beta[n - 1] = 0.0
        for t in range(n - 2, -1, -1):
            beta[t] = logsumexp(trans + (emis[t + 1] + beta[t + 1])[None, :], axis=1)
        lz = logsumexp(alpha[n - 1])
        log_z[s] = lz
        marginals[lo:hi] = np.exp(alpha + beta - lz)
        if want_pairwise:
            for t in range(n - 1):
                joint = (
                    alpha[t][:, None]
                    + trans
                    + (emis[t + 1] + beta[t + 1])[None, :]
                    - lz
                )
                pairwise[lo - s + t] = np.exp(joint)
    return log_z, marginals, pairwise


def batch_viterbi(emissions, offsets, trans):
    """Returns (paths [T] int64, scores [S]); ties break toward lower label index."""
    emissions = np.ascontiguousarray(emissions, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    n_sent = len(offsets) - 1
    total, n_labels = emissions.shape
    paths = np.empty(total, dtype=np.int64)
    scores = np.empty(n_sent)

    for s in range(n_sent):
        lo, hi = offsets[s], offsets[s + 1]
        emis = emissions[lo:hi]
        n = hi - lo
        delta = emis[0].copy()
        back = np.empty((n, n_labels), dtype=np.int64)
        for t in range(1, n):
            cand = delta[:, None] + trans  # [prev, cur]
            back[t] = np.argmax(cand, axis=0)  # first max = lowest prev index
            delta = emis[t] + cand[back[t], np.arange(n_labels)]
        last = int(np.argmax(delta))
        scores[s] = delta[last]
        paths[hi - 1] = last
        for t in range(n - 1, 0, -1):
            last = back[t, last]
            paths[lo + t - 1] = last
    return paths, scores
