"""Scoring functions, pair scorers and the ranking rules they induce.

Every evaluator works on feature arrays whose last axis is the feature
dimension, broadcasting over the leading axes, so that ``rule.matrix(X, X)``
gives the full (n, n) table of pair decisions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from urank.core import FiniteModel, require_finite


def _flat(X, d=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and d is not None and d > 1:
        X = X[None, :]
    lead = X.shape[:-1]
    return X.reshape(-1, X.shape[-1]), lead


class ScoringFunction:
    """Map x -> real score; subclasses implement ``_scores`` on an (N, d) array."""

    def __call__(self, X) -> np.ndarray:
        flat, lead = _flat(X)
        return self._scores(flat).reshape(lead)

    def _scores(self, X):
        raise NotImplementedError

    def pair_values(self, Xa, Xb) -> np.ndarray:
        """Antisymmetric pair score s(x) - s(x')."""
        return self(Xa) - self(Xb)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Stump(ScoringFunction):
    """``direction * 1{x[dim] > threshold}``."""

    dim: int
    threshold: float
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("stump direction must be +1 or -1")

    def _scores(self, X):
        return self.direction * (X[:, self.dim] > self.threshold).astype(np.float64)

    def indicator(self, X) -> np.ndarray:
        flat, lead = _flat(X)
        return (flat[:, self.dim] > self.threshold).astype(np.float64).reshape(lead)

    def to_dict(self):
        return {"type": "stump", "dim": int(self.dim), "threshold": float(self.threshold),
                "direction": int(self.direction)}


@dataclass(frozen=True, eq=False)
class Linear(ScoringFunction):
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64).ravel())

    def _scores(self, X):
        return X @ self.weights

    def to_dict(self):
        return {"type": "linear", "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class Table(ScoringFunction):
    """Scores attached to a finite list of points; other points raise."""

    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        sc = np.asarray(self.scores, dtype=np.float64)
        if sc.shape != (pts.shape[0],):
            raise ValueError("one score per table point is required")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "_index", {tuple(row): k for k, row in enumerate(pts)})

    def _scores(self, X):
        try:
            return self.scores[[self._index[tuple(row)] for row in X]]
        except KeyError as exc:
            raise ValueError(f"point {exc.args[0]} is not in the score table") from None

    def to_dict(self):
        return {"type": "table", "points": self.points.tolist(), "scores": self.scores.tolist()}


@dataclass(frozen=True, eq=False)
class Ensemble(ScoringFunction):
    """Weighted sum of base scorers, ``sum_j w_j g_j(x)``."""

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((float(w), g) for w, g in self.terms)
        if not all(np.isfinite(w) for w, _ in terms):
            raise ValueError("ensemble weights must be finite")
        object.__setattr__(self, "terms", terms)

    @property
    def weight_norm(self) -> float:
        return float(sum(abs(w) for w, _ in self.terms))

    def _scores(self, X):
        out = np.zeros(X.shape[0])
        for w, g in self.terms:
            out += w * g._scores(X)
        return out

    def to_dict(self):
        return {"type": "ensemble", "terms": [{"weight": w, "base": g.to_dict()} for w, g in self.terms]}


@dataclass(frozen=True)
class GaussianPairKernel:
    """Gaussian kernel on concatenated pair features w = (x, x')."""

    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    def gram(self, left, right) -> np.ndarray:
        left = np.asarray(left, dtype=np.float64)
        right = np.asarray(right, dtype=np.float64)
        sq = (left * left).sum(1)[:, None] + (right * right).sum(1)[None, :] - 2.0 * left @ right.T
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.bandwidth**2))

    def diag(self, pts) -> np.ndarray:
        return np.ones(np.asarray(pts).shape[0])

    def to_dict(self):
        return {"type": "gaussian", "bandwidth": float(self.bandwidth)}


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    """Pair scorer f(w) = sum_j c_j k(w_j, w) over anchor pair-points w_j."""

    coefs: np.ndarray
    anchors: np.ndarray
    kernel: GaussianPairKernel

    def __post_init__(self):
        object.__setattr__(self, "coefs", np.asarray(self.coefs, dtype=np.float64))
        object.__setattr__(self, "anchors", np.asarray(self.anchors, dtype=np.float64))

    def pair_values(self, Xa, Xb) -> np.ndarray:
        Xa = np.asarray(Xa, dtype=np.float64)
        Xb = np.asarray(Xb, dtype=np.float64)
        shape = np.broadcast_shapes(Xa.shape, Xb.shape)
        pts = np.concatenate([np.broadcast_to(Xa, shape), np.broadcast_to(Xb, shape)], axis=-1)
        flat = pts.reshape(-1, pts.shape[-1])
        out = np.empty(flat.shape[0])
        step = 4096
        for lo in range(0, flat.shape[0], step):
            out[lo:lo + step] = self.kernel.gram(flat[lo:lo + step], self.anchors) @ self.coefs
        return out.reshape(shape[:-1])

    def rkhs_norm(self) -> float:
        gram = self.kernel.gram(self.anchors, self.anchors)
        return float(np.sqrt(max(self.coefs @ gram @ self.coefs, 0.0)))

    def to_dict(self):
        return {"type": "kernel_expansion", "coefs": self.coefs.tolist(),
                "anchors": self.anchors.tolist(), "kernel": self.kernel.to_dict()}


def scorer_from_dict(spec: dict):
    kind = spec.get("type")
    if kind == "stump":
        return Stump(int(spec["dim"]), float(spec["threshold"]), int(spec.get("direction", 1)))
    if kind == "linear":
        return Linear(spec["weights"])
    if kind == "table":
        return Table(spec["points"], spec["scores"])
    if kind == "ensemble":
        return Ensemble(tuple((thr["weight"], scorer_from_dict(thr["base"])) for thr in spec["terms"]))
    if kind == "kernel_expansion":
        k = spec["kernel"]
        if k.get("type") != "gaussian":
            raise ValueError(f"unknown kernel {k.get('type')!r}")
        return KernelExpansion(spec["coefs"], spec["anchors"], GaussianPairKernel(k["bandwidth"]))
    raise ValueError(f"unknown scorer type {kind!r}")


# ---------------------------------------------------------------------------
# ranking rules


class RankingRule:
    """r(x, x') in {-1, +1}; +1 ranks x above x'."""

    def pairs(self, Xa, Xb) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, Xa, Xb=None) -> np.ndarray:
        Xa = np.asarray(Xa, dtype=np.float64)
        Xb = Xa if Xb is None else np.asarray(Xb, dtype=np.float64)
        return self.pairs(Xa[:, None, :], Xb[None, :, :])


@dataclass(frozen=True, eq=False)
class FromScorer(RankingRule):
    """2 * 1{s(x) >= s(x')} - 1; score ties rank the first argument higher."""

    scorer: ScoringFunction

    def pairs(self, Xa, Xb):
        return np.where(self.scorer(Xa) >= self.scorer(Xb), 1, -1)

    def matrix(self, Xa, Xb=None):
        sa = self.scorer(Xa)
        sb = sa if Xb is None else self.scorer(Xb)
        return np.where(sa[:, None] >= sb[None, :], 1, -1)


@dataclass(frozen=True, eq=False)
class SignRule(RankingRule):
    """+1 where the pair scorer is strictly positive, -1 otherwise."""

    pair_scorer: object

    def pairs(self, Xa, Xb):
        return np.where(self.pair_scorer.pair_values(Xa, Xb) > 0, 1, -1)


@dataclass(frozen=True, eq=False)
class Bayes(RankingRule):
    """2 * 1{rho_plus >= rho_minus} - 1 evaluated on support points of ``model``."""

    model: FiniteModel

    def __post_init__(self):
        require_finite(self.model)

    def pairs(self, Xa, Xb):
        Xa = np.asarray(Xa, dtype=np.float64)
        Xb = np.asarray(Xb, dtype=np.float64)
        shape = np.broadcast_shapes(Xa.shape[:-1], Xb.shape[:-1])
        fa, la = _flat(Xa)
        fb, lb = _flat(Xb)
        ia = self.model.lookup(fa).reshape(la)
        ib = self.model.lookup(fb).reshape(lb)
        plus, minus = self.model.rho(ia, ib)
        return np.broadcast_to(np.where(plus >= minus, 1, -1), shape)


@dataclass(frozen=True, eq=False)
class PairFunction(RankingRule):
    """Wrap an arbitrary vectorized evaluator ``func(Xa, Xb) -> {-1, +1}``."""

    func: Callable

    def pairs(self, Xa, Xb):
        v = np.asarray(self.func(Xa, Xb))
        if not np.all((v == 1) | (v == -1)):
            raise ValueError("ranking rule outputs must lie in {-1, +1}")
        return v.astype(int)


def bayes_scorer(model) -> Table:
    """Table of the optimal scores (eta or m) on the model support."""
    model = require_finite(model)
    return Table(model.points, model.bayes_scores())


def bayes_rule(model) -> Bayes:
    return Bayes(require_finite(model))


def rule_scores(rule: RankingRule, X):
    """Scores behind a scorer-induced rule, or None for generic rules."""
    if isinstance(rule, FromScorer):
        return rule.scorer(X)
    return None
