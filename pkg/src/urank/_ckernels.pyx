# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_pykernels`` for the reference semantics."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def offdiag_sum(const double[:, :] a):
    """Neumaier-compensated sum of off-diagonal entries, row-major order."""
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double total = 0.0, comp = 0.0, tmp, v
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            v = a[i, j]
            tmp = total + v
            if abs(total) >= abs(v):
                comp += (total - tmp) + v
            else:
                comp += (v - tmp) + total
            total = tmp
    return total + comp


def pair_mistakes(scores_in, y_in):
    cdef const double[::1] scores = np.ascontiguousarray(scores_in, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef Py_ssize_t n = scores.shape[0], i, j
    cdef long long total = 0
    cdef double si, yi
    for i in range(n):
        si = scores[i]
        yi = y[i]
        for j in range(n):
            if i == j:
                continue
            if si >= scores[j]:
                if yi < y[j]:
                    total += 1
            elif yi > y[j]:
                total += 1
    return int(total)


cdef inline void _fen_add_l(long long[::1] tree, Py_ssize_t i, long long v) noexcept nogil:
    cdef Py_ssize_t n = tree.shape[0]
    i += 1
    while i < n:
        tree[i] += v
        i += i & -i


cdef inline long long _fen_prefix_l(long long[::1] tree, Py_ssize_t i) noexcept nogil:
    cdef long long acc = 0
    while i > 0:
        acc += tree[i]
        i -= i & -i
    return acc


cdef inline void _fen_add_d(double[::1] tree, Py_ssize_t i, double v) noexcept nogil:
    cdef Py_ssize_t n = tree.shape[0]
    i += 1
    while i < n:
        tree[i] += v
        i += i & -i


cdef inline double _fen_prefix_d(double[::1] tree, Py_ssize_t i) noexcept nogil:
    cdef double acc = 0.0
    while i > 0:
        acc += tree[i]
        i -= i & -i
    return acc


def stump_cut_counts(y_rank_in, Py_ssize_t n_levels):
    cdef const cnp.intp_t[::1] y_rank = np.ascontiguousarray(y_rank_in, dtype=np.intp)
    cdef Py_ssize_t n = y_rank.shape[0], k, v
    cdef long long[::1] cnt_all = np.zeros(n_levels, dtype=np.int64)
    cdef long long[::1] less_all = np.zeros(n_levels + 1, dtype=np.int64)
    cdef long long[::1] cnt_low = np.zeros(n_levels, dtype=np.int64)
    cdef long long[::1] tree = np.zeros(n_levels + 1, dtype=np.int64)
    disc_arr = np.zeros(n + 1, dtype=np.int64)
    cross_arr = np.zeros(n + 1, dtype=np.int64)
    within_arr = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] disc = disc_arr
    cdef long long[::1] cross = cross_arr
    cdef long long[::1] within = within_arr
    cdef long long d = 0, x = 0, w, size_low = 0, size_high
    cdef long long less_low, lesseq_low, cnt_high, less_high
    for k in range(n):
        cnt_all[y_rank[k]] += 1
    for v in range(n_levels):
        less_all[v + 1] = less_all[v] + cnt_all[v]
    w = n * (n - 1) // 2
    for v in range(n_levels):
        w -= cnt_all[v] * (cnt_all[v] - 1) // 2
    within[0] = w
    with nogil:
        for k in range(n):
            v = y_rank[k]
            size_high = n - size_low
            less_low = _fen_prefix_l(tree, v)
            lesseq_low = less_low + cnt_low[v]
            cnt_high = cnt_all[v] - cnt_low[v]
            less_high = less_all[v] - less_low
            d -= size_low - lesseq_low
            d += less_high
            x -= size_low - cnt_low[v]
            x += size_high - cnt_high
            w += size_low - cnt_low[v]
            w -= size_high - cnt_high
            cnt_low[v] += 1
            _fen_add_l(tree, v, 1)
            size_low += 1
            disc[k + 1] = d
            cross[k + 1] = x
            within[k + 1] = w
    return disc_arr, cross_arr, within_arr


def weighted_discordance(group_start_in, s_rank_in, p_in, Py_ssize_t n_levels):
    cdef const cnp.intp_t[::1] group_start = np.ascontiguousarray(group_start_in, dtype=np.intp)
    cdef const cnp.intp_t[::1] s_rank = np.ascontiguousarray(s_rank_in, dtype=np.intp)
    cdef const double[::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef double[::1] tree = np.zeros(n_levels + 1, dtype=np.float64)
    cdef double total = 0.0, disc = 0.0, tie = 0.0, le, lt
    cdef Py_ssize_t g, a, b, k, rank
    with nogil:
        for g in range(group_start.shape[0] - 1):
            a = group_start[g]
            b = group_start[g + 1]
            for k in range(a, b):
                rank = s_rank[k]
                le = _fen_prefix_d(tree, rank + 1)
                lt = _fen_prefix_d(tree, rank)
                disc += p[k] * (total - le)
                tie += p[k] * (le - lt)
            for k in range(a, b):
                _fen_add_d(tree, s_rank[k], p[k])
                total += p[k]
    return disc, tie
