# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice kernels: batched forward-backward and Viterbi.

Same contracts as pykernels; sentences packed CSR-style via an offsets
vector.  All recursions in log space.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

NAME = "cython"


cdef inline double _logsumexp_row(double* row, Py_ssize_t n) nogil:
    cdef double m = -INFINITY
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if row[i] > m:
            m = row[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        acc += exp(row[i] - m)
    return m + log(acc)


def batch_forward_backward(emissions, offsets, trans, bint want_pairwise=True):
    """Returns (log_z [S], marginals [T, L], pairwise [T-S, L, L] or None)."""
    cdef double[:, ::1] emis = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(trans, dtype=np.float64)
    cdef long long[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)

    cdef Py_ssize_t n_sent = offs.shape[0] - 1
    cdef Py_ssize_t total = emis.shape[0]
    cdef Py_ssize_t L = emis.shape[1]

    log_z_arr = np.empty(n_sent, dtype=np.float64)
    marg_arr = np.empty((total, L), dtype=np.float64)
    pair_arr = np.empty((total - n_sent, L, L), dtype=np.float64) if want_pairwise \
        else None

    cdef double[::1] log_z = log_z_arr
    cdef double[:, ::1] marg = marg_arr
    cdef double[:, :, ::1] pair
    if want_pairwise:
        pair = pair_arr

    # scratch: alpha/beta for the longest sentence
    cdef Py_ssize_t max_n = 0, s, n, t, i, j
    for s in range(n_sent):
        n = offs[s + 1] - offs[s]
        if n > max_n:
            max_n = n

    alpha_arr = np.empty((max_n, L), dtype=np.float64)
    beta_arr = np.empty((max_n, L), dtype=np.float64)
    work_arr = np.empty(L, dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] work = work_arr

    cdef Py_ssize_t lo, hi, p0
    cdef double lz, v

    with nogil:
        for s in range(n_sent):
            lo = offs[s]
            hi = offs[s + 1]
            n = hi - lo
            for j in range(L):
                alpha[0, j] = emis[lo, j]
            for t in range(1, n):
                for j in range(L):
                    for i in range(L):
                        work[i] = alpha[t - 1, i] + A[i, j]
                    alpha[t, j] = emis[lo + t, j] + _logsumexp_row(&work[0], L)
            for j in range(L):
                beta[n - 1, j] = 0.0
                work[j] = alpha[n - 1, j]
            lz = _logsumexp_row(&work[0], L)
            log_z[s] = lz
            for t in range(n - 2, -1, -1):
                for i in range(L):
                    for j in range(L):
                        work[j] = A[i, j] + emis[lo + t + 1, j] + beta[t + 1, j]
                    beta[t, i] = _logsumexp_row(&work[0], L)
            for t in range(n):
                for j in range(L):
                    marg[lo + t, j] = exp(alpha[t, j] + beta[t, j] - lz)
            if want_pairwise:
                p0 = lo - s
                for t in range(n - 1):
                    for i in range(L):
                        for j in range(L):
                            v = alpha[t, i] + A[i, j] + emis[lo + t + 1, j] \
                                + beta[t + 1, j] - lz
                            pair[p0 + t, i, j] = exp(v)

    return log_z_arr, marg_arr, pair_arr


def batch_viterbi(emissions, offsets, trans):
    """Returns (paths [T] int64, scores [S]); ties break toward lower label index."""
    cdef double[:, ::1] emis = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(trans, dtype=np.float64)
    cdef long long[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)

    cdef Py_ssize_t n_sent = offs.shape[0] - 1
    cdef Py_ssize_t total = emis.shape[0]
    cdef Py_ssize_t L = emis.shape[1]

    paths_arr = np.empty(total, dtype=np.int64)
    scores_arr = np.empty(n_sent, dtype=np.float64)
    cdef long long[::1] paths = paths_arr
    cdef double[::1] scores = scores_arr

    cdef Py_ssize_t max_n = 0, s, n, t, i, j, best_i, last
    for s in range(n_sent):
        n = offs[s + 1] - offs[s]
        if n > max_n:
            max_n = n

    delta_arr = np.empty((max_n, L), dtype=np.float64)
    back_arr = np.empty((max_n, L), dtype=np.int64)
    cdef double[:, ::1] delta = delta_arr
    cdef long long[:, ::1] back = back_arr

    cdef Py_ssize_t lo, hi
    cdef double best, v

    with nogil:
        for s in range(n_sent):
            lo = offs[s]
            hi = offs[s + 1]
            n = hi - lo
            for j in range(L):
                delta[0, j] = emis[lo, j]
            for t in range(1, n):
                for j in range(L):
                    best = -INFINITY
                    best_i = 0
                    for i in range(L):
                        v = delta[t - 1, i] + A[i, j]
                        if v > best:
                            best = v
                            best_i = i
                    delta[t, j] = emis[lo + t, j] + best
                    back[t, j] = best_i
            best = -INFINITY
            last = 0
            for j in range(L):
                if delta[n - 1, j] > best:
                    best = delta[n - 1, j]
                    last = j
            scores[s] = best
            paths[hi - 1] = last
            for t in range(n - 1, 0, -1):
                last = back[t, last]
                paths[lo + t - 1] = last

    return paths_arr, scores_arr
