"""Pure-Python implementations of the hot loops.

Same algorithms and signatures as the compiled ``_ckernels`` module; used when
the extension is not built or ``URANK_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def offdiag_sum(a):
    """Sum of the off-diagonal entries of a square matrix, exactly rounded."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return math.fsum(a[mask])


def pair_mistakes(scores, y):
    """Ordered pairs i != j with (y_i - y_j) * r_ij < 0, r_ij = +1 iff s_i >= s_j."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = scores.shape[0]
    total = 0
    step = max(1, 2_000_000 // max(n, 1))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        up = scores[lo:hi, None] >= scores[None, :]
        dy = y[lo:hi, None] - y[None, :]
        total += int(np.count_nonzero(up & (dy < 0)) + np.count_nonzero(~up & (dy > 0)))
    return total


def _fen_add(tree, i, v):
    i += 1
    n = len(tree)
    while i < n:
        tree[i] += v
        i += i & -i


def _fen_prefix(tree, i):
    # sum over positions [0, i)
    acc = 0
    while i > 0:
        acc += tree[i]
        i -= i & -i
    return acc


def stump_cut_counts(y_rank, n_levels):
    """Pair counts for every cut of an x-sorted sample.

    ``y_rank[k]`` is the dense label rank of the k-th sample in ascending x
    order.  For each cut size (the first ``cut`` samples form the low group,
    the rest the high group) returns arrays indexed by cut = 0..n:

    disc[cut]    pairs (i high, j low) with y_i < y_j
    cross[cut]   high/low pairs with y_i != y_j
    within[cut]  within-group unordered pairs with y_i != y_j
    """
    y_rank = [int(v) for v in y_rank]
    n = len(y_rank)
    cnt_all = [0] * n_levels
    for v in y_rank:
        cnt_all[v] += 1
    less_all = [0] * (n_levels + 1)
    for v in range(n_levels):
        less_all[v + 1] = less_all[v] + cnt_all[v]
    cnt_low = [0] * n_levels
    tree = [0] * (n_levels + 1)
    disc = np.zeros(n + 1, dtype=np.int64)
    cross = np.zeros(n + 1, dtype=np.int64)
    within = np.zeros(n + 1, dtype=np.int64)
    d = 0
    x = 0
    w = n * (n - 1) // 2 - sum(cnt * (cnt - 1) // 2 for cnt in cnt_all)
    within[0] = w
    size_low = 0
    for k in range(n):
        v = y_rank[k]
        size_high = n - size_low
        less_low = _fen_prefix(tree, v)
        lesseq_low = less_low + cnt_low[v]
        cnt_high = cnt_all[v] - cnt_low[v]
        less_high = less_all[v] - less_low
        # k leaves H for L
        d -= size_low - lesseq_low
        d += less_high
        x -= size_low - cnt_low[v]
        x += size_high - cnt_high
        w += size_low - cnt_low[v]
        w -= size_high - cnt_high
        cnt_low[v] += 1
        _fen_add(tree, v, 1)
        size_low += 1
        disc[k + 1] = d
        cross[k + 1] = x
        within[k + 1] = w
    return disc, cross, within


def weighted_discordance(group_start, s_rank, p, n_levels):
    """Weighted pair sums over atoms sorted by ascending m.

    ``group_start`` holds the offsets of runs of equal m plus a final sentinel.
    Returns (sum of p_a p_b over m_a < m_b with s_a > s_b,
             sum of p_a p_b over m_a < m_b with s_a == s_b).
    """
    tree = [0.0] * (n_levels + 1)
    total = 0.0
    disc = 0.0
    tie = 0.0
    for g in range(len(group_start) - 1):
        a, b = int(group_start[g]), int(group_start[g + 1])
        for k in range(a, b):
            rank = int(s_rank[k])
            le = _fen_prefix(tree, rank + 1)
            lt = _fen_prefix(tree, rank)
            disc += p[k] * (total - le)
            tie += p[k] * (le - lt)
        for k in range(a, b):
            _fen_add(tree, int(s_rank[k]), float(p[k]))
            total += float(p[k])
    return disc, tie
