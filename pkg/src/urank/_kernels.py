"""Backend selection for the hot loops.

The compiled extension ``urank._ckernels`` is used when importable; otherwise,
or when the environment variable ``URANK_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the pure-Python module ``urank._pykernels`` is used.
"""

import os

import numpy as np

from urank import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("URANK_PURE_PYTHON", "") in ("", "0"):
    try:
        from urank import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass


def backends() -> dict:
    """All importable implementations, keyed by name."""
    found = {"python": _pykernels}
    try:
        from urank import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


def offdiag_sum(a, impl=None) -> float:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("offdiag_sum needs a square matrix")
    return float((impl or _impl).offdiag_sum(a))


def pair_mistakes(scores, y, impl=None) -> int:
    return int((impl or _impl).pair_mistakes(np.ascontiguousarray(scores, float), np.ascontiguousarray(y, float)))


def stump_cut_counts(x, y, impl=None):
    """Sort by ``x`` (stable) and return (sorted x, disc, cross, within) cut counts."""
    order = np.argsort(x, kind="stable")
    _, y_rank = np.unique(np.asarray(y)[order], return_inverse=True)
    n_levels = int(y_rank.max()) + 1 if len(y_rank) else 0
    disc, cross, within = (impl or _impl).stump_cut_counts(y_rank.astype(np.intp), n_levels)
    return np.asarray(x)[order], np.asarray(disc), np.asarray(cross), np.asarray(within)


def weighted_discordance(m, scores, p, impl=None):
    """(sum p_a p_b [m_a < m_b, s_a > s_b], sum p_a p_b [m_a < m_b, s_a == s_b])."""
    m = np.asarray(m, dtype=np.float64)
    order = np.argsort(m, kind="stable")
    m_sorted = m[order]
    starts = np.flatnonzero(np.r_[True, m_sorted[1:] != m_sorted[:-1]])
    group_start = np.r_[starts, len(m)].astype(np.intp)
    _, s_rank = np.unique(np.asarray(scores, dtype=np.float64)[order], return_inverse=True)
    n_levels = int(s_rank.max()) + 1 if len(s_rank) else 0
    p_sorted = np.ascontiguousarray(np.asarray(p, dtype=np.float64)[order])
    disc, tie = (impl or _impl).weighted_discordance(group_start, s_rank.astype(np.intp), p_sorted, n_levels)
    return float(disc), float(tie)
