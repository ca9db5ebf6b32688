"""Second-order U-statistics, the split-sample estimator, Hoeffding
decomposition with exact projections, and Rademacher chaos statistics.

Sums run over ordered pairs i != j.  Off-diagonal sums go through
``urank._kernels.offdiag_sum`` (compensated summation), which keeps the
reconstruction ``U_n = mean + 2 T_n + W_n`` at round-off level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from urank import _kernels
from urank.core import Dataset, FiniteModel, LabeledSample, make_rng, require_pairs, sample_dataset
from urank.errors import UnsupportedModelError
from urank.scoring import Bayes, RankingRule


@dataclass(frozen=True, eq=False)
class PairKernel:
    """Real function of two labeled samples.

    ``func(xa, ya, xb, yb)`` must broadcast: feature arrays carry the feature
    axis last, label arrays match their leading shape.
    """

    func: Callable
    symmetric: bool = True
    degenerate: bool = False
    name: str = "kernel"

    def pairs(self, Xa, ya, Xb, yb) -> np.ndarray:
        Xa, Xb = np.asarray(Xa, float), np.asarray(Xb, float)
        ya, yb = np.asarray(ya, float), np.asarray(yb, float)
        shape = np.broadcast_shapes(ya.shape, yb.shape)
        return np.broadcast_to(np.asarray(self.func(Xa, ya, Xb, yb), dtype=np.float64), shape)

    def matrix(self, Xa, ya, Xb=None, yb=None) -> np.ndarray:
        Xa, ya = np.asarray(Xa, float), np.asarray(ya, float)
        if Xb is None:
            Xb, yb = Xa, ya
        Xb, yb = np.asarray(Xb, float), np.asarray(yb, float)
        return np.array(self.pairs(Xa[:, None, :], ya[:, None], Xb[None, :, :], yb[None, :]))

    def __call__(self, a: LabeledSample, b: LabeledSample) -> float:
        return float(self.pairs(np.array(a.x), np.array(a.y), np.array(b.x), np.array(b.y)))

    def scaled(self, factor: float) -> "PairKernel":
        func = self.func
        return PairKernel(lambda xa, ya, xb, yb: factor * np.asarray(func(xa, ya, xb, yb)),
                          self.symmetric, self.degenerate, f"{factor}*{self.name}")


def constant_kernel(value: float) -> PairKernel:
    return PairKernel(lambda xa, ya, xb, yb: np.full(np.broadcast_shapes(np.shape(ya), np.shape(yb)), float(value)),
                      True, value == 0, f"const({value})")


def label_product_kernel() -> PairKernel:
    return PairKernel(lambda xa, ya, xb, yb: ya * yb, True, False, "y*y'")


def ranking_kernel(rule: RankingRule) -> PairKernel:
    """Ranking-mistake indicator 1{(y - y') r(x, x') < 0}."""

    def func(xa, ya, xb, yb):
        return ((ya - yb) * rule.pairs(xa, xb) < 0).astype(np.float64)

    # the +1 tie rule makes tied pairs order dependent
    return PairKernel(func, False, False, "ranking")


def excess_kernel(rule: RankingRule, model: FiniteModel) -> PairKernel:
    """Mistake indicator of ``rule`` minus that of the Bayes rule of ``model``."""
    best = Bayes(model)

    def func(xa, ya, xb, yb):
        dy = ya - yb
        return (dy * rule.pairs(xa, xb) < 0).astype(np.float64) - (dy * best.pairs(xa, xb) < 0)

    return PairKernel(func, False, False, "excess")


# ---------------------------------------------------------------------------
# projections


@dataclass(frozen=True, eq=False)
class Projection:
    """First Hoeffding projection of a kernel under a joint law given by atoms."""

    kernel: PairKernel
    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    mean: float
    exact: bool

    def conditional_mean(self, X, y) -> np.ndarray:
        """g(a) = (E q(a, .) + E q(., a)) / 2 for each row a."""
        X, y = np.asarray(X, float), np.asarray(y, float)
        fwd = self.kernel.matrix(X, y, self.X, self.y) @ self.w
        if self.kernel.symmetric:
            return fwd
        bwd = self.w @ self.kernel.matrix(self.X, self.y, X, y)
        return 0.5 * (fwd + bwd)

    def centred(self, X, y) -> np.ndarray:
        return self.conditional_mean(X, y) - self.mean


def joint_atoms(model):
    """(X, y, weights) of the joint law; raises for continuous labels."""
    if not isinstance(model, FiniteModel):
        raise UnsupportedModelError(f"{type(model).__name__} has no finite support")
    return model.joint_atoms()


def project(kernel: PairKernel, model, inner: int | None = None, seed=0) -> Projection:
    """Exact projection on finite joint supports.

    Models without one (continuous labels or marginals) need ``inner``: the
    conditional means are then averaged over ``inner`` fresh draws and the
    result is flagged ``exact=False``.
    """
    try:
        X, y, w = joint_atoms(model)
        exact = True
    except UnsupportedModelError:
        if inner is None:
            raise
        draw = sample_dataset(model, int(inner), seed)
        X, y, w = draw.X, draw.y, np.full(draw.n, 1.0 / draw.n)
        exact = False
    w = np.asarray(w, dtype=np.float64)
    proj = Projection(kernel, X, y, w, 0.0, exact)
    if exact:
        g = proj.conditional_mean(X, y)
        mean = math.fsum(w * g)
    else:
        check = sample_dataset(model, min(int(inner), 2000), make_rng(seed).integers(2**63))
        mean = float(np.mean(proj.conditional_mean(check.X, check.y)))
    return Projection(kernel, X, y, w, mean, exact)


def projected_kernel(kernel: PairKernel, model, inner: int | None = None, seed=0) -> PairKernel:
    """Degenerate part q(a,b) - E q - h(a) - h(b) of the symmetrized kernel."""
    proj = project(kernel, model, inner, seed)
    func = kernel.func

    def hhat(xa, ya, xb, yb):
        xa, xb = np.asarray(xa, float), np.asarray(xb, float)
        ya, yb = np.asarray(ya, float), np.asarray(yb, float)
        shape = np.broadcast_shapes(ya.shape, yb.shape)
        base = np.broadcast_to(np.asarray(func(xa, ya, xb, yb), float), shape)
        if not kernel.symmetric:
            base = 0.5 * (base + np.broadcast_to(np.asarray(func(xb, yb, xa, ya), float), shape))
        ha = proj.centred(xa.reshape(-1, xa.shape[-1]), np.broadcast_to(ya, xa.shape[:-1]).ravel()).reshape(xa.shape[:-1])
        hb = proj.centred(xb.reshape(-1, xb.shape[-1]), np.broadcast_to(yb, xb.shape[:-1]).ravel()).reshape(xb.shape[:-1])
        return base - proj.mean - ha - hb

    return PairKernel(hhat, True, True, f"proj({kernel.name})")


# ---------------------------------------------------------------------------
# estimators


def u_stat(kernel: PairKernel, data: Dataset, method: str = "ordered") -> float:
    """(1 / n(n-1)) * sum over ordered pairs i != j of q(sample_i, sample_j).

    ``method="unordered"`` uses the upper triangle twice; symmetric kernels only.
    """
    require_pairs(data)
    n = data.n
    mat = kernel.matrix(data.X, data.y)
    if method == "ordered":
        return _kernels.offdiag_sum(mat) / (n * (n - 1))
    if method == "unordered":
        if not kernel.symmetric:
            raise ValueError("the unordered-pair fast path needs a symmetric kernel")
        return 2.0 * math.fsum(mat[np.triu_indices(n, 1)]) / (n * (n - 1))
    raise ValueError(f"unknown method {method!r}")


def split_estimate(kernel: PairKernel, data: Dataset) -> float:
    """Average of q over the disjoint block pairs (i, floor(n/2) + i)."""
    require_pairs(data)
    m = data.n // 2
    vals = kernel.pairs(data.X[:m], data.y[:m], data.X[m:2 * m], data.y[m:2 * m])
    return math.fsum(np.ravel(vals)) / m


@dataclass(frozen=True, eq=False)
class HoeffdingParts:
    mean: float
    h_values: np.ndarray
    t_n: float
    w_n: float
    u_n: float
    exact: bool = True

    @property
    def residual(self) -> float:
        return abs(self.u_n - (self.mean + 2.0 * self.t_n + self.w_n))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "t_n": self.t_n, "w_n": self.w_n, "u_n": self.u_n,
                "residual": self.residual, "exact": self.exact, "h_values": self.h_values.tolist()}


def hoeffding_decompose(kernel: PairKernel, data: Dataset, model, inner: int | None = None, seed=0) -> HoeffdingParts:
    require_pairs(data)
    n = data.n
    proj = project(kernel, model, inner, seed)
    mat = kernel.matrix(data.X, data.y)
    u_n = _kernels.offdiag_sum(mat) / (n * (n - 1))
    proj_vals = proj.centred(data.X, data.y)
    sym = mat if kernel.symmetric else 0.5 * (mat + mat.T)
    hhat = sym - proj.mean - proj_vals[:, None] - proj_vals[None, :]
    w_n = _kernels.offdiag_sum(hhat) / (n * (n - 1))
    return HoeffdingParts(proj.mean, proj_vals, math.fsum(proj_vals) / n, w_n, u_n, proj.exact)


def conditional_variance(kernel: PairKernel, model) -> float:
    """Exact variance of the first projection, Var(E[q(X1, X) | X1])."""
    proj = project(kernel, model)
    g = proj.conditional_mean(proj.X, proj.y)
    return math.fsum(proj.w * (g - proj.mean) ** 2)


def degeneracy_check(kernel: PairKernel, model) -> float:
    """max over support atoms a of |E q(a, .)| (and |E q(., a)| if asymmetric)."""
    X, y, w = joint_atoms(model)
    mat = kernel.matrix(X, y)
    worst = np.max(np.abs(mat @ w))
    if not kernel.symmetric:
        worst = max(worst, np.max(np.abs(w @ mat)))
    return float(worst)


# ---------------------------------------------------------------------------
# Rademacher chaos


@dataclass(frozen=True, eq=False)
class ChaosStats:
    z_eps: float
    u_eps: float
    m_stat: float
    eps: np.ndarray

    def to_dict(self) -> dict:
        return {"z_eps": self.z_eps, "u_eps": self.u_eps, "m_stat": self.m_stat,
                "eps": self.eps.astype(int).tolist()}


def kernel_matrices(kernels: Sequence[PairKernel], data: Dataset) -> list:
    """Kernel matrices on the sample with the diagonal forced to zero."""
    mats = []
    for kernel in kernels:
        mat = kernel.matrix(data.X, data.y)
        np.fill_diagonal(mat, 0.0)
        mats.append(mat)
    return mats


def chaos_from_matrices(mats: Sequence[np.ndarray], eps: np.ndarray) -> ChaosStats:
    z = u = m = 0.0
    for mat in mats:
        v = eps @ mat  # v_j = sum_i eps_i f(X_i, X_j)
        z = max(z, abs(float(v @ eps)))
        u = max(u, float(np.sqrt(v @ v)))
        m = max(m, float(np.max(np.abs(v))))
    return ChaosStats(z, u, m, eps)


def chaos_statistics(kernels: Sequence[PairKernel], data: Dataset, seed) -> ChaosStats:
    """Z_eps, U_eps and M for one Rademacher draw over a finite kernel class."""
    if not kernels:
        raise ValueError("kernel class must be non-empty")
    eps = make_rng(seed).choice(np.array([-1.0, 1.0]), size=data.n)
    return chaos_from_matrices(kernel_matrices(kernels, data), eps)
