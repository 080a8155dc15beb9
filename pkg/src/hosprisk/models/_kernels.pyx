# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split search and tree traversal.

Mirrors ``_kernels_py`` operation for operation so both backends pick the same
split and produce bit-identical trees.
"""

import numpy as np

from libc.stdlib cimport free, malloc

DEF GINI = 0
DEF MSE = 1


def best_split(
    const double[:, ::1] X,
    const double[::1] y,
    const double[::1] w,
    const Py_ssize_t[::1] idx,
    const Py_ssize_t[::1] features,
    Py_ssize_t min_leaf,
    int criterion,
):
    """Return ``(feature, threshold, score)``; feature is -1 if no valid split."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t n_feat = features.shape[0]
    cdef Py_ssize_t best_feature = -1
    cdef double best_threshold = 0.0
    cdef double best_score = -np.inf
    cdef Py_ssize_t fi, f, i, r
    cdef double wl, pl, wr, pr, total_w, total_p, score
    cdef double* xs
    cdef double* cw
    cdef double* cp
    cdef Py_ssize_t[::1] order
    cdef double[::1] column

    if n < 2 * min_leaf or n < 2:
        return -1, np.nan, -np.inf

    xs = <double*>malloc(n * sizeof(double))
    cw = <double*>malloc(n * sizeof(double))
    cp = <double*>malloc(n * sizeof(double))
    if xs == NULL or cw == NULL or cp == NULL:
        free(xs)
        free(cw)
        free(cp)
        raise MemoryError()

    column = np.empty(n, dtype=np.float64)
    try:
        for fi in range(n_feat):
            f = features[fi]
            for i in range(n):
                column[i] = X[idx[i], f]
            # same stable sort as the fallback, so ties keep node order and the
            # prefix sums below add in the same sequence
            order = np.argsort(column, kind="stable").astype(np.intp, copy=False)
            with nogil:
                wl = 0.0
                pl = 0.0
                for i in range(n):
                    r = idx[order[i]]
                    xs[i] = X[r, f]
                    wl = wl + w[r]
                    pl = pl + w[r] * y[r]
                    cw[i] = wl
                    cp[i] = pl
                total_w = cw[n - 1]
                total_p = cp[n - 1]

                for i in range(min_leaf - 1, n - min_leaf):
                    if not (xs[i] < xs[i + 1]):
                        continue
                    wl = cw[i]
                    pl = cp[i]
                    wr = total_w - wl
                    pr = total_p - pl
                    if criterion == GINI:
                        score = -(pl * (wl - pl) / wl + pr * (wr - pr) / wr)
                    else:
                        score = pl * pl / wl + pr * pr / wr
                    if score > best_score:
                        best_score = score
                        best_feature = f
                        best_threshold = xs[i]
    finally:
        free(xs)
        free(cw)
        free(cp)
    if best_feature < 0:
        return -1, np.nan, -np.inf
    return best_feature, best_threshold, best_score


def apply_tree(
    const double[:, ::1] X,
    const Py_ssize_t[::1] feature,
    const double[::1] threshold,
    const Py_ssize_t[::1] left,
    const Py_ssize_t[::1] right,
):
    """Leaf index reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] out_v = out
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out_v[i] = node
    return out
