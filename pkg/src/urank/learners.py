"""Empirical risk minimizers and convex-surrogate ranking learners.

Includes exact ERM over finite rule classes, stump ERM with an O(n log n)
sweep, greedy boosting over weighted stump indicators, projected subgradient
descent in a ball of a pair kernel's RKHS, and the calibration transform
relating convex excess risk to ranking excess risk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from urank import _kernels
from urank.core import Dataset, require_finite, require_pairs
from urank.errors import NumericalError
from urank.risk import empirical_risk
from urank.scoring import Ensemble, GaussianPairKernel, KernelExpansion, RankingRule, Stump

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class CostFunction:
    """Convex cost with value 1 at 0 dominating the step 1{x >= 0}."""

    name: str

    def __post_init__(self):
        if self.name not in _COSTS:
            raise ValueError(f"unknown cost function {self.name!r}")

    def value(self, x):
        return _COSTS[self.name][0](np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        """Right derivative."""
        return _COSTS[self.name][1](np.asarray(x, dtype=np.float64))

    def __call__(self, x):
        return self.value(x)

    def to_dict(self) -> dict:
        return {"type": self.name}


_LN2 = math.log(2.0)
_COSTS = {
    "exponential": (np.exp, np.exp),
    "logit": (lambda x: np.logaddexp(0.0, x) / _LN2, lambda x: expit(x) / _LN2),
    "hinge": (lambda x: np.maximum(1.0 + x, 0.0), lambda x: (x >= -1.0).astype(np.float64)),
}

Exponential = CostFunction("exponential")
Logit = CostFunction("logit")
Hinge = CostFunction("hinge")


def cost_from_name(name: str) -> CostFunction:
    return CostFunction(name)


# ---------------------------------------------------------------------------
# ERM


def erm_finite(rules: Sequence[RankingRule], data: Dataset):
    """(rule, empirical risk) minimizing empirical risk; lowest index wins ties."""
    if len(rules) == 0:
        raise ValueError("rule class is empty")
    require_pairs(data)
    risks = [empirical_risk(rule, data) for rule in rules]
    k = int(np.argmin(risks))
    return rules[k], risks[k]


def stump_risks(data: Dataset, dim: int, thresholds) -> np.ndarray:
    """Empirical risks of stumps on ``dim``; shape (len(thresholds), 2).

    Column 0 is direction +1, column 1 direction -1.
    """
    require_pairs(data)
    thresholds = np.asarray(thresholds, dtype=np.float64).ravel()
    x_sorted, disc, cross, within = _kernels.stump_cut_counts(data.X[:, dim], data.y)
    cut = np.searchsorted(x_sorted, thresholds, side="right")  # size of the low group
    n = data.n
    up = 2 * disc[cut] + within[cut]
    down = 2 * (cross[cut] - disc[cut]) + within[cut]
    return np.stack([up, down], axis=1) / (n * (n - 1))


def midpoint_thresholds(values) -> np.ndarray:
    """Midpoints between consecutive distinct values."""
    u = np.unique(np.asarray(values, dtype=np.float64))
    return (u[:-1] + u[1:]) / 2.0 if u.size > 1 else u.copy()


def erm_stumps(data: Dataset, thresholds=None):
    """Exhaustive search over (dimension, threshold, direction).

    ``thresholds`` is a sequence with one grid per dimension (``None`` entries
    and a ``None`` argument mean data midpoints).  Returns (Stump, risk); ties
    go to the first dimension, then the first threshold, then direction +1.
    """
    require_pairs(data)
    grids = [None] * data.d if thresholds is None else list(thresholds)
    if len(grids) != data.d:
        raise ValueError("need one threshold grid per dimension")
    best = None
    for dim, grid in enumerate(grids):
        grid = midpoint_thresholds(data.X[:, dim]) if grid is None else np.asarray(grid, float).ravel()
        if grid.size == 0:
            continue
        risks = stump_risks(data, dim, grid)
        k = int(np.argmin(risks))  # row-major: threshold, then direction
        if best is None or risks.flat[k] < best[0]:
            best = (float(risks.flat[k]), dim, float(grid[k // 2]), 1 if k % 2 == 0 else -1)
    if best is None:
        raise ValueError("threshold grid is empty")
    risk, dim, thr, direction = best
    return Stump(dim, thr, direction), risk


# ---------------------------------------------------------------------------
# convex empirical risk


def _signed_pairs(y):
    """Upper-triangle pairs with distinct labels: (i, j, sign(y_i - y_j))."""
    y = np.asarray(y, dtype=np.float64)
    left, right = np.triu_indices(y.size, 1)
    sign = np.sign(y[left] - y[right])
    keep = sign != 0
    return left[keep], right[keep], sign[keep]


def empirical_cost(pair_fn, data: Dataset, phi: CostFunction) -> float:
    """A_n(f): ordered-pair average of phi(-sign(Z_ij) f(X_i, X_j)).

    ``pair_fn`` is anything with ``pair_values``; pairs with equal labels add phi(0).
    """
    require_pairs(data)
    n = data.n
    X = data.X
    vals = np.asarray(pair_fn.pair_values(X[:, None, :], X[None, :, :]), dtype=np.float64)
    signs = np.sign(data.y[:, None] - data.y[None, :])
    return _kernels.offdiag_sum(phi.value(-signs * vals)) / (n * (n - 1))


def _golden_min(func, lo, hi, tol=1e-10):
    a, b = lo, hi
    probe_lo, probe_hi = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = func(probe_lo), func(probe_hi)
    while b - a > tol:
        if fc <= fd:
            b, probe_hi, fd = probe_hi, probe_lo, fc
            probe_lo = b - _GOLDEN * (b - a)
            fc = func(probe_lo)
        else:
            a, probe_lo, fc = probe_lo, probe_hi, fd
            probe_hi = a + _GOLDEN * (b - a)
            fd = func(probe_hi)
    return (a + b) / 2.0


# ---------------------------------------------------------------------------
# boosting


@dataclass(frozen=True)
class BoostConfig:
    """Boosting settings.

    ``thresholds`` holds one grid per dimension (``None`` means data
    midpoints).  ``budget`` caps the total absolute weight; with
    ``budget_mode="clip"`` each step is confined to the remaining budget,
    with ``"stop"`` training ends when a step would exceed it.
    """

    rounds: int = 20
    thresholds: tuple | None = None
    budget: float | None = None
    step: str = "line_search"
    step_size: float = 0.1
    budget_mode: str = "clip"
    max_step: float = 1e4

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.budget is not None and not self.budget > 0:
            raise ValueError("budget must be positive")
        if self.step not in ("line_search", "fixed"):
            raise ValueError(f"unknown step rule {self.step!r}")
        if self.budget_mode not in ("clip", "stop"):
            raise ValueError(f"unknown budget mode {self.budget_mode!r}")

    def to_dict(self) -> dict:
        return {"rounds": self.rounds, "thresholds": None if self.thresholds is None else [
            None if g is None else list(map(float, g)) for g in self.thresholds],
            "budget": self.budget, "step": self.step, "step_size": self.step_size,
            "budget_mode": self.budget_mode, "max_step": self.max_step}


@dataclass
class TrainResult:
    scorer: object
    log: list = field(default_factory=list)
    stop_reason: str = "completed"

    def objective(self) -> np.ndarray:
        return np.array([row[1] for row in self.log])

    def to_dict(self) -> dict:
        return {"scorer": self.scorer.to_dict(), "stop_reason": self.stop_reason,
                "log": [list(row) for row in self.log]}


def _base_stumps(data: Dataset, thresholds):
    grids = [None] * data.d if thresholds is None else list(thresholds)
    if len(grids) != data.d:
        raise ValueError("need one threshold grid per dimension")
    bases = []
    for dim, grid in enumerate(grids):
        grid = midpoint_thresholds(data.X[:, dim]) if grid is None else np.asarray(grid, float).ravel()
        bases.extend(Stump(dim, float(thr), 1) for thr in grid)
    if not bases:
        raise ValueError("base class is empty")
    return bases


def _line_objective(phi, margins, dirs, counts):
    base = counts @ phi.value(-margins)

    def delta(w):
        return counts @ phi.value(-margins - w * dirs) - base

    return delta


def _line_search(phi, margins, dirs, counts, limit):
    """argmin over |w| <= limit of the convex line objective."""
    delta = _line_objective(phi, margins, dirs, counts)

    def slope(w):
        return -(counts * dirs) @ phi.derivative(-margins - w * dirs)

    lo, hi = -min(10.0, limit), min(10.0, limit)
    while slope(lo) > 0 and -lo < limit:
        lo = max(2.0 * lo, -limit)
    while slope(hi) < 0 and hi < limit:
        hi = min(2.0 * hi, limit)
    w = _golden_min(delta, lo, hi)
    return w, delta(w)


def boost_rank(data: Dataset, config: BoostConfig, phi: CostFunction = Exponential) -> TrainResult:
    """Greedy coordinate descent on A_n over weighted stump indicators.

    Each round scans every base g(x) = 1{x[dim] > t}, solves the exact line
    search for A_n(f + w g) and keeps the base with the largest decrease.
    The log rows are (round, A_n, base, weight); round 0 is the empty model.
    """
    require_pairs(data)
    n = data.n
    n_pairs = n * (n - 1)
    bases = _base_stumps(data, config.thresholds)
    base_vals = np.stack([b.indicator(data.X) for b in bases], axis=1)
    left, right, sign = _signed_pairs(data.y)
    n_tied = n_pairs - 2 * left.size  # ordered pairs with equal labels
    dH = sign[:, None] * (base_vals[left] - base_vals[right])  # pair directions per base
    scores = np.zeros(n)

    def objective(scores):
        u = sign * (scores[left] - scores[right])
        return (2.0 * math.fsum(phi.value(-u)) + n_tied) / n_pairs

    a_n = objective(scores)
    log = [(0, a_n, "", 0.0)]
    terms = []
    used = 0.0
    reason = "completed"
    for rnd in range(1, config.rounds + 1):
        limit = config.max_step
        if config.budget is not None and config.budget_mode == "clip":
            limit = min(limit, config.budget - used)
            if limit <= 1e-12:
                reason = "budget exhausted"
                break
        u = sign * (scores[left] - scores[right])
        best = None
        for k in range(len(bases)):
            d = dH[:, k]
            live = d != 0
            if not live.any():
                continue
            keys, counts = np.unique(np.stack([u[live], d[live]]), axis=1, return_counts=True)
            counts = counts.astype(np.float64)
            if config.step == "fixed":
                delta = _line_objective(phi, keys[0], keys[1], counts)
                w = min(config.step_size, limit)
                cands = [(delta(w), w), (delta(-w), -w)]
                gain, w = min(cands)
            else:
                w, gain = _line_search(phi, keys[0], keys[1], counts, limit)
            if best is None or gain < best[0]:
                best = (gain, w, k)
        if best is None or best[0] >= 0.0 or abs(best[1]) < 1e-12:
            reason = "no descent direction"
            break
        gain, w, k = best
        if config.budget is not None and config.budget_mode == "stop" and used + abs(w) > config.budget:
            reason = "budget reached"
            break
        scores_new = scores + w * base_vals[:, k]
        a_new = objective(scores_new)
        if a_new > a_n:
            reason = "no descent direction"
            break
        scores, a_n = scores_new, a_new
        used += abs(w)
        terms.append((w, bases[k]))
        log.append((rnd, a_n, _describe(bases[k]), w))
    return TrainResult(Ensemble(tuple(terms)), log, reason)


def _describe(stump: Stump) -> str:
    return f"x{stump.dim}>{stump.threshold!r}"


# ---------------------------------------------------------------------------
# kernel ranking


def median_bandwidth(pts) -> float:
    """Median pairwise Euclidean distance between rows of ``pts``."""
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape[0] > 2000:
        pts = pts[np.linspace(0, pts.shape[0] - 1, 2000).astype(int)]
    sq = (pts * pts).sum(1)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0))
    vals = dist[np.triu_indices(pts.shape[0], 1)]
    med = float(np.median(vals)) if vals.size else 1.0
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class KernelConfig:
    """Kernel ranking settings.

    ``kernel`` is any object with ``gram(A, B)`` and ``to_dict``; ``None``
    selects a Gaussian kernel on concatenated pairs with the median bandwidth.
    The step size at iteration t is ``step0 / sqrt(t + 1)``.
    """

    radius: float = 1.0
    steps: int = 200
    step0: float = 1.0
    kernel: object | None = None
    keep: str = "best"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.keep not in ("best", "final"):
            raise ValueError("keep must be 'best' or 'final'")

    def to_dict(self) -> dict:
        return {"radius": self.radius, "steps": self.steps, "step0": self.step0, "keep": self.keep,
                "kernel": None if self.kernel is None else self.kernel.to_dict()}


def pair_points(data: Dataset):
    """Ordered pairs with distinct labels: features (x_i, x_j) and sign(y_i - y_j)."""
    left, right = np.nonzero(~np.eye(data.n, dtype=bool))
    z = np.sign(data.y[left] - data.y[right])
    keep = z != 0
    left, right, z = left[keep], right[keep], z[keep]
    return np.hstack([data.X[left], data.X[right]]), z


def kernel_rank(data: Dataset, config: KernelConfig, phi: CostFunction = Hinge) -> TrainResult:
    """Projected subgradient descent on A_n in an RKHS ball of radius B.

    The expansion lives on the training pair-points; after each step the
    coefficients are rescaled onto the ball whenever sqrt(c' K c) > B.  Log
    rows are (step, A_n, squared norm).
    """
    require_pairs(data)
    n = data.n
    n_pairs = n * (n - 1)
    Wp, z = pair_points(data)
    kernel = config.kernel or GaussianPairKernel(median_bandwidth(Wp) if len(Wp) > 1 else 1.0)
    gram = kernel.gram(Wp, Wp)
    if not np.all(np.isfinite(gram)):
        raise NumericalError("non-finite kernel values in the Gram matrix")
    if gram.size and np.linalg.eigvalsh(gram)[0] < -1e-8 * max(1.0, float(np.abs(gram).max())):
        raise ValueError("kernel is not positive semidefinite on the training pairs")
    n_tied = n_pairs - z.size
    B2 = config.radius**2

    def objective(fv):
        return (math.fsum(phi.value(-z * fv)) + n_tied) / n_pairs

    weights = np.zeros(z.size)
    fv = np.zeros(z.size)
    a_n = objective(fv)
    log = [(0, a_n, 0.0)]
    best = (a_n, weights.copy())
    for it in range(config.steps):
        grad = -z * phi.derivative(-z * fv) / n_pairs
        weights = weights - config.step0 / math.sqrt(it + 1.0) * grad
        fv = gram @ weights
        sq = float(weights @ fv)
        if sq > B2:
            weights *= config.radius / math.sqrt(sq)
            fv = gram @ weights
            sq = float(weights @ fv)
        a_n = objective(fv)
        log.append((it + 1, a_n, sq))
        if a_n < best[0]:
            best = (a_n, weights.copy())
    coefs = best[1] if config.keep == "best" else weights
    return TrainResult(KernelExpansion(coefs, Wp, kernel), log, "completed")


# ---------------------------------------------------------------------------
# calibration transform


def _minimize_alpha(values, lo, hi, grid=2001):
    """Grid plus golden-section minimum of a convex function on [lo, hi]."""
    alphas = np.linspace(lo, hi, grid)
    vals = values(alphas)
    k = int(np.argmin(vals))
    a, b = alphas[max(k - 1, 0)], alphas[min(k + 1, grid - 1)]
    a_star = _golden_min(lambda w: float(values(np.array([w]))[0]), a, b)
    return min(float(vals[k]), float(values(np.array([a_star]))[0]))


_ALPHA = 50.0


def conditional_cost(phi: CostFunction, rho: float) -> float:
    """inf over alpha of rho phi(-alpha) + (1 - rho) phi(alpha)."""
    _check_rho(rho)
    return _minimize_alpha(lambda a: rho * phi.value(-a) + (1.0 - rho) * phi.value(a), -_ALPHA, _ALPHA)


def conditional_cost_wrong(phi: CostFunction, rho: float) -> float:
    """Same infimum restricted to alpha (2 rho - 1) <= 0."""
    _check_rho(rho)
    lo, hi = -_ALPHA, _ALPHA
    if rho > 0.5:
        hi = 0.0
    elif rho < 0.5:
        lo = 0.0
    return _minimize_alpha(lambda a: rho * phi.value(-a) + (1.0 - rho) * phi.value(a), lo, hi)


def _check_rho(rho):
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")


def psi(phi: CostFunction, x: float, form: str = "restricted") -> float:
    """Calibration transform of ``phi`` at x in [-1, 1].

    ``form="restricted"`` gives H^-((1+x)/2) - H((1+x)/2);
    ``form="symmetric"`` gives H^-((1+x)/2) - H^-((1-x)/2), kept for
    comparison (it vanishes identically for the hinge cost).
    """
    if not -1.0 <= x <= 1.0:
        raise ValueError("x must lie in [-1, 1]")
    rho = (1.0 + x) / 2.0
    if form == "restricted":
        return conditional_cost_wrong(phi, rho) - conditional_cost(phi, rho)
    if form == "symmetric":
        return conditional_cost_wrong(phi, rho) - conditional_cost_wrong(phi, (1.0 - x) / 2.0)
    raise ValueError(f"unknown form {form!r}")


def psi_inverse(phi: CostFunction, u: float, tol: float = 1e-12) -> float:
    """Smallest x in [0, 1] with psi(x) >= u (psi is nondecreasing there)."""
    top = psi(phi, 1.0)
    if not 0.0 <= u <= top + 1e-12:
        raise ValueError(f"u must lie in [0, {top!r}]")
    if u <= psi(phi, 0.0):
        return 0.0
    if u >= top:
        return 1.0
    return float(brentq(lambda x: psi(phi, x) - u, 0.0, 1.0, xtol=tol))


def convex_excess_to_rank_bound(a_excess: float, phi: CostFunction) -> float:
    """Upper bound on ranking excess risk from convex excess risk, in [0, 1]."""
    if a_excess < 0:
        raise ValueError("convex excess risk must be nonnegative")
    if a_excess == 0:
        return 0.0
    if a_excess >= psi(phi, 1.0):
        return 1.0
    return min(max(psi_inverse(phi, a_excess), 0.0), 1.0)


def convex_risk(scores, model, phi: CostFunction) -> float:
    """A(f) for f(x, x') = s(x) - s(x') on a finite model; ``scores`` on the support."""
    model = require_finite(model)
    score = np.asarray(scores, dtype=np.float64)
    idx = np.arange(model.size)
    plus, minus = model.rho(idx[:, None], idx[None, :])
    diff = score[:, None] - score[None, :]
    tie = 1.0 - plus - minus
    cost = plus * phi.value(-diff) + minus * phi.value(diff) + tie * phi.value(0.0)
    return float(model.probs @ cost @ model.probs)


def convex_bayes_risk(model, phi: CostFunction) -> float:
    """Infimum of A over all pair functions, evaluated pointwise per support pair."""
    model = require_finite(model)
    idx = np.arange(model.size)
    plus, minus = model.rho(idx[:, None], idx[None, :])
    total = plus + minus
    cost = 1.0 - total  # tied labels contribute phi(0) = 1
    cache = {}
    for a in range(model.size):
        for b in range(model.size):
            if total[a, b] > 0:
                ratio = float(plus[a, b] / total[a, b])
                if ratio not in cache:
                    cache[ratio] = conditional_cost(phi, ratio)
                cost[a, b] += total[a, b] * cache[ratio]
    return float(model.probs @ cost @ model.probs)


def consistency_radius(n: int, phi: CostFunction) -> float:
    """Default ball radius schedule B_n: log(n) / 4 for exponential and logit, n^(1/8) for hinge."""
    if phi.name == "hinge":
        return float(n) ** 0.125
    return 0.25 * math.log(n)
