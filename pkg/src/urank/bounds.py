"""Closed-form bound evaluators, Rademacher averages and a tail harness for
degenerate U-processes.

Universal constants are parameters throughout; defaults are C = 30 for the
moment inequality and c = 1 elsewhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from urank import _kernels
from urank.core import Dataset, make_rng, replicate_seed, require_pairs, sample_dataset
from urank.scoring import RankingRule
from urank.ustat import (
    PairKernel,
    chaos_from_matrices,
    conditional_variance,
    degeneracy_check,
    joint_atoms,
    kernel_matrices,
    project,
)


# ---------------------------------------------------------------------------
# Rademacher averages


def block_indicators(rules: Sequence[RankingRule], data: Dataset) -> np.ndarray:
    """(rules, m) matrix of mistakes on the block pairs (i, m + i), m = floor(n/2)."""
    if len(rules) == 0:
        raise ValueError("rule class is empty")
    require_pairs(data)
    m = data.n // 2
    Xa, Xb = data.X[:m], data.X[m:2 * m]
    dz = data.y[:m] - data.y[m:2 * m]
    return np.stack([(dz * rule.pairs(Xa, Xb) < 0).astype(np.float64) for rule in rules])


def _sup_values(ind: np.ndarray, signs: np.ndarray) -> np.ndarray:
    return np.max(np.abs(signs @ ind.T), axis=1) / ind.shape[1]


def rademacher_draws(rules, data: Dataset, draws: int, seed) -> np.ndarray:
    """Per-draw suprema sup_r |sum_i eps_i mistake_i(r)| / m."""
    if draws < 1:
        raise ValueError("draws must be at least 1")
    ind = block_indicators(rules, data)
    signs = make_rng(seed).choice(np.array([-1.0, 1.0]), size=(int(draws), ind.shape[1]))
    return _sup_values(ind, signs)


def rademacher_mc(rules, data: Dataset, draws: int, seed) -> float:
    """Monte Carlo Rademacher average of a finite rule class on block pairs."""
    return float(np.mean(rademacher_draws(rules, data, draws, seed)))


def rademacher_exact(rules, data: Dataset, max_blocks: int = 16) -> float:
    """Average over all 2^m sign vectors; limited to m <= ``max_blocks``."""
    ind = block_indicators(rules, data)
    m = ind.shape[1]
    if m > max_blocks:
        raise ValueError(f"exact enumeration needs m <= {max_blocks}, got {m}")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
    return float(np.mean(_sup_values(ind, signs)))


# ---------------------------------------------------------------------------
# closed forms


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


def first_order_bound(er_n: float, n: int, delta: float) -> float:
    """4 E R_n + 4 sqrt(log(1/delta) / (n - 1))."""
    _check_delta(delta)
    if n < 2:
        raise ValueError("n must be at least 2")
    return 4.0 * er_n + 4.0 * math.sqrt(math.log(1.0 / delta) / (n - 1))


def vc_rademacher_bound(vc_dim: int, n: int, scale: float = 1.0) -> float:
    """c sqrt(V / n)."""
    if vc_dim < 1 or n < 1 or not scale > 0:
        raise ValueError("need V >= 1, n >= 1 and c > 0")
    return scale * math.sqrt(vc_dim / n)


def fast_rate_bound(vc_dim: int, n: int, delta: float, alpha: float, scale: float = 1.0) -> float:
    """C (V log(n / delta) / n)^(1 / (2 - alpha))."""
    _check_delta(delta)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if n < 2 or vc_dim < 1 or not scale > 0:
        raise ValueError("need n >= 2, V >= 1 and C > 0")
    return scale * (vc_dim * math.log(n / delta) / n) ** (1.0 / (2.0 - alpha))


@dataclass(frozen=True)
class TailBounds:
    hoeffding: float
    bernstein: float
    dpg: float


def tail_bounds(n: int, dev: float, sigma2: float, s2: float, scale: float = 1.0) -> TailBounds:
    """Hoeffding, Bernstein and de la Pena-Gine bounds for a [0,1]-valued U-statistic.

    ``sigma2`` is the kernel variance and ``s2`` the variance of its first
    projection; both tails are two-sided.
    """
    if not dev > 0:
        raise ValueError("t must be positive")
    if sigma2 < 0 or s2 < 0:
        raise ValueError("variances must be nonnegative")
    m = n // 2
    hoeff = 2.0 * math.exp(-2.0 * m * dev * dev)
    bern = 2.0 if math.isinf(sigma2) else 2.0 * math.exp(-m * dev * dev / (2.0 * sigma2 + 2.0 * dev / 3.0))
    dpg = 4.0 if math.isinf(s2) else 4.0 * math.exp(-n * dev * dev / (8.0 * s2 + scale * dev))
    return TailBounds(hoeff, bern, dpg)


def kernel_class_rademacher(radius: float, diag, n: int) -> float:
    """(2B / n) sqrt(sum of kernel diagonal values on the block pairs)."""
    diag = np.asarray(diag, dtype=np.float64)
    if np.any(diag < 0):
        raise ValueError("kernel diagonal values must be nonnegative")
    return 2.0 * radius / n * math.sqrt(math.fsum(diag))


def moment_bound(dev, ez: float, eu: float, em: float, sup_f: float, n: int, moment_scale: float = 30.0) -> np.ndarray:
    """exp(-(1/C) min((t/EU)^2, t/(EM + F n), (t/(F sqrt n))^(2/3), sqrt(t/F))).

    Bounds P{Z > C E Z_eps + t}; zero denominators make their regime infinite.
    """
    dev = np.asarray(dev, dtype=np.float64)

    def ratio(num, den):
        return num / den if den > 0 else np.full_like(num, np.inf)

    regimes = np.stack([
        ratio(dev, eu) ** 2,
        ratio(dev, em + sup_f * n),
        ratio(dev, sup_f * math.sqrt(n)) ** (2.0 / 3.0),
        np.sqrt(ratio(dev, sup_f)),
    ])
    return np.exp(-np.min(regimes, axis=0) / moment_scale)


# ---------------------------------------------------------------------------
# tail harness


@dataclass(frozen=True, eq=False)
class TailReport:
    """Empirical tails and bound curves on a grid of t.

    ``empirical`` is P{|U_n - E U_n| > t} for the source kernel and
    ``empirical_moment`` is P{Z > C E Z_eps + n(n-1) t} for the class
    supremum Z = sup_f |sum_{i != j} f(X_i, X_j)|.
    """

    dev: np.ndarray
    empirical: np.ndarray
    empirical_moment: np.ndarray
    bound_hoeffding: np.ndarray
    bound_bernstein: np.ndarray
    bound_dpg: np.ndarray
    bound_moment: np.ndarray
    replicates: int
    n: int
    inputs: dict = field(default_factory=dict)

    # CSV/JSON header names; "t" is the deviation grid
    COLUMNS = ("t", "empirical", "empirical_moment", "bound_hoeffding", "bound_bernstein",
               "bound_dpg", "bound_moment")

    def _column(self, name):
        return self.dev if name == "t" else getattr(self, name)

    def csv_rows(self):
        yield self.COLUMNS
        cols = [self._column(col) for col in self.COLUMNS]
        for row in zip(*cols):
            yield tuple(repr(float(v)) for v in row)

    def to_dict(self) -> dict:
        out = {col: self._column(col).tolist() for col in self.COLUMNS}
        out.update(replicates=self.replicates, n=self.n, inputs=dict(self.inputs))
        return out


def sup_abs(kernel: PairKernel, model) -> float:
    """max |f| over all pairs of joint support atoms."""
    X, y, _ = joint_atoms(model)
    return float(np.max(np.abs(kernel.matrix(X, y))))


def kernel_variance(kernel: PairKernel, model) -> float:
    """Var q(S, S') for independent draws from the joint law."""
    X, y, w = joint_atoms(model)
    mat = kernel.matrix(X, y)
    mean = w @ mat @ w
    return float(max(w @ (mat - mean) ** 2 @ w, 0.0))


def moment_tail_harness(kernels: Sequence[PairKernel], model, n: int, replicates: int, moment_scale: float = 30.0,
                        seed=0, t_grid=None, source: PairKernel | None = None, scale: float = 1.0) -> TailReport:
    """Monte Carlo tails of a degenerate kernel class against the bound shapes.

    Every replicate redraws the sample and one Rademacher vector, so the
    chaos expectations are unconditional.  ``source`` (default: the first
    kernel) supplies the centred U-statistic compared with the Hoeffding,
    Bernstein and de la Pena-Gine tails.
    """
    if not kernels:
        raise ValueError("kernel class must be non-empty")
    if replicates < 100:
        raise ValueError("replicates must be at least 100")
    for kernel in kernels:
        gap = degeneracy_check(kernel, model)
        if gap >= 1e-10:
            raise ValueError(f"kernel {kernel.name!r} is not degenerate (max |E q(a, .)| = {gap:.3g})")
    source = kernels[0] if source is None else source
    src_mean = project(source, model).mean
    devs = np.asarray(np.arange(1, 16) * 0.02 if t_grid is None else t_grid, dtype=np.float64)
    pairs = n * (n - 1)

    z = np.empty(replicates)
    dev = np.empty(replicates)
    ez = np.empty(replicates)
    eu = np.empty(replicates)
    em = np.empty(replicates)
    for rep in range(replicates):
        rng = make_rng(replicate_seed(seed, rep))
        data = sample_dataset(model, n, rng)
        mats = kernel_matrices(kernels, data)
        z[rep] = max(abs(_kernels.offdiag_sum(mat)) for mat in mats)
        eps = rng.choice(np.array([-1.0, 1.0]), size=n)
        stats = chaos_from_matrices(mats, eps)
        ez[rep], eu[rep], em[rep] = stats.z_eps, stats.u_eps, stats.m_stat
        src_mat = source.matrix(data.X, data.y)
        dev[rep] = abs(_kernels.offdiag_sum(src_mat) / pairs - src_mean)

    EZ, EU, EM = float(ez.mean()), float(eu.mean()), float(em.mean())
    sup_f = max(sup_abs(kernel, model) for kernel in kernels)
    sigma2 = kernel_variance(source, model)
    s2 = conditional_variance(source, model)
    tails = [tail_bounds(n, float(v), sigma2, s2, scale) for v in devs]
    empirical = np.array([np.mean(dev > v) for v in devs])
    empirical_moment = np.array([np.mean(z > moment_scale * EZ + pairs * v) for v in devs])
    return TailReport(
        dev=devs,
        empirical=empirical,
        empirical_moment=empirical_moment,
        bound_hoeffding=np.array([b.hoeffding for b in tails]),
        bound_bernstein=np.array([b.bernstein for b in tails]),
        bound_dpg=np.array([b.dpg for b in tails]),
        bound_moment=moment_bound(pairs * devs, EZ, EU, EM, sup_f, n, moment_scale),
        replicates=int(replicates),
        n=int(n),
        inputs={"C": moment_scale, "c": scale, "EZ_eps": EZ, "EU_eps": EU, "EM": EM, "F": sup_f,
                "sigma2": sigma2, "s2": s2, "source_mean": src_mean},
    )
