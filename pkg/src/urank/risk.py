"""Ranking risks, Bayes references, noise diagnostics, ROC and AUC.

Exact quantities enumerate the support of a finite model.  Scorer-induced
rules on bipartite and noiseless models have O(K log K) fast paths; the
O(K^2) enumeration remains available as ``true_risk_brute``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from urank import _kernels
from urank.core import (
    Dataset,
    DiscreteBipartite,
    FiniteModel,
    NoiselessRegression,
    NoisyRegression,
    make_rng,
    require_finite,
    require_pairs,
)
from urank.errors import NumericalError, UnsupportedModelError
from urank.scoring import Bayes, FromScorer, RankingRule, ScoringFunction, bayes_rule
from urank.ustat import conditional_variance, excess_kernel

_CHUNK = 1 << 22  # pair entries per enumeration block


def _row_blocks(size):
    step = max(1, _CHUNK // max(size, 1))
    for lo in range(0, size, step):
        yield slice(lo, min(size, lo + step))


# ---------------------------------------------------------------------------
# empirical and true risk


def empirical_risk(rule: RankingRule, data: Dataset) -> float:
    """Fraction of ordered pairs i != j with Z_ij * r(X_i, X_j) < 0."""
    require_pairs(data)
    n = data.n
    if isinstance(rule, FromScorer):
        count = _kernels.pair_mistakes(rule.scorer(data.X), data.y)
    else:
        signs = rule.matrix(data.X)
        dy = data.y[:, None] - data.y[None, :]
        count = int(np.count_nonzero(dy * signs < 0))  # diagonal has dy == 0
    return count / (n * (n - 1))


def true_risk_brute(rule: RankingRule, model) -> float:
    """P{Z r(X, X') < 0} by enumerating every pair of support points."""
    model = require_finite(model)
    p, pts = model.probs, model.points
    parts = []
    for rows in _row_blocks(model.size):
        signs = rule.matrix(pts[rows], pts)
        plus, minus = model.pair_probs(rows)
        contrib = np.where(signs == 1, minus, plus)
        parts.append(p[rows] @ contrib @ p)
    return math.fsum(parts)


def _risk_bipartite_scores(score, model: DiscreteBipartite) -> float:
    u = model.probs * (1.0 - model.eta)  # negative mass per atom
    v = model.probs * model.eta
    order = np.argsort(score, kind="stable")
    s_sorted = score[order]
    cum_v = np.r_[0.0, np.cumsum(v[order])]
    cum_u = np.r_[0.0, np.cumsum(u[order])]
    k = np.searchsorted(s_sorted, score, side="right")
    v_le = cum_v[k]
    u_gt = cum_u[-1] - cum_u[k]
    return math.fsum(u * v_le) + math.fsum(v * u_gt)


def _risk_noiseless_scores(score, model: NoiselessRegression) -> float:
    disc, tie = _kernels.weighted_discordance(model.m_values, score, model.probs)
    return 2.0 * disc + tie


def true_risk(rule: RankingRule, model, mc_pairs: int | None = None, seed=0) -> float:
    """Exact ranking risk on a finite model (Monte Carlo on continuous ones)."""
    if not isinstance(model, FiniteModel):
        if mc_pairs is None:
            raise UnsupportedModelError("continuous model: pass mc_pairs or discretize the model")
        return true_risk_mc(rule, model, mc_pairs, seed)[0]
    if isinstance(rule, FromScorer):
        score = np.asarray(rule.scorer(model.points), dtype=np.float64)
        if model.kind == "bipartite":
            return _risk_bipartite_scores(score, model)
        if model.kind == "noiseless":
            return _risk_noiseless_scores(score, model)
    return true_risk_brute(rule, model)


def true_risk_mc(rule: RankingRule, model, pairs: int, seed=0):
    """(estimate, standard error) of the risk from ``pairs`` independent pairs."""
    rng = make_rng(seed)
    Xa, ya = model.sample_xy(int(pairs), rng)
    Xb, yb = model.sample_xy(int(pairs), rng)
    miss = ((ya - yb) * rule.pairs(Xa, Xb) < 0).astype(float)
    return float(miss.mean()), float(miss.std(ddof=1) / math.sqrt(pairs))


# ---------------------------------------------------------------------------
# Bayes references


def bayes_risk_min_formula(model: DiscreteBipartite) -> float:
    """E min(eta(X), eta(X')) - (E eta(X))^2."""
    e, p = model.eta, model.probs
    emin = math.fsum(p[rows] @ np.minimum(e[rows][:, None], e[None, :]) @ p for rows in _row_blocks(model.size))
    return emin - model.positive_rate**2


def gini_mean_difference(model) -> float:
    """E |eta(X) - eta(X')| for a bipartite model."""
    model = require_finite(model)
    if model.kind != "bipartite":
        raise UnsupportedModelError("Gini mean difference is defined for bipartite models")
    e, p = model.eta, model.probs
    return math.fsum(p[rows] @ np.abs(e[rows][:, None] - e[None, :]) @ p for rows in _row_blocks(model.size))


def bayes_risk_gini_formula(model: DiscreteBipartite) -> float:
    """Var((Y + 1) / 2) - E|eta(X) - eta(X')| / 2."""
    pos = model.positive_rate
    return pos * (1.0 - pos) - 0.5 * gini_mean_difference(model)


def bayes_risk(model) -> float:
    if not isinstance(model, FiniteModel):
        raise UnsupportedModelError("bayes_risk needs a finite-support model")
    if model.kind == "bipartite":
        a = bayes_risk_min_formula(model)
        b = bayes_risk_gini_formula(model)
        if abs(a - b) > 1e-12:
            raise NumericalError(f"Bayes risk formulas disagree: {a!r} vs {b!r}")
        return a
    if model.kind == "noiseless":
        return 0.0
    if model.kind == "noisy":
        ks = np.arange(model.size)
        parts = [model.probs[rows] @ ndtr(-np.abs(model.delta(ks[rows][:, None], ks[None, :]))) @ model.probs
                 for rows in _row_blocks(model.size)]
        return math.fsum(parts)
    raise UnsupportedModelError(f"unsupported model kind {model.kind!r}")


def excess_risk(scorer: ScoringFunction, model) -> float:
    """L(s) - L* as the sum of |rho+ - rho-| over pairs where s and r* disagree."""
    model = require_finite(model)
    rule, best = FromScorer(scorer), Bayes(model)
    pts, p = model.points, model.probs
    parts = []
    for rows in _row_blocks(model.size):
        plus, minus = model.pair_probs(rows)
        differ = rule.matrix(pts[rows], pts) != best.matrix(pts[rows], pts)
        parts.append(p[rows] @ (np.abs(plus - minus) * differ) @ p)
    return math.fsum(parts)


def excess_risk_formula(scorer: ScoringFunction, model) -> float:
    """Strict-inequality form E|rho+ - rho-| 1{(s - s')(s* - s*') < 0}.

    Equals ``excess_risk`` whenever ``scorer`` has no ties across points that the
    optimal scores separate.
    """
    model = require_finite(model)
    sv = np.asarray(scorer(model.points), dtype=np.float64)
    bv = model.bayes_scores()
    p = model.probs
    parts = []
    for rows in _row_blocks(model.size):
        plus, minus = model.pair_probs(rows)
        wrong = (sv[rows][:, None] - sv[None, :]) * (bv[rows][:, None] - bv[None, :]) < 0
        parts.append(p[rows] @ (np.abs(plus - minus) * wrong) @ p)
    return math.fsum(parts)


def _h_variance_noisy(scorer: ScoringFunction, model: NoisyRegression, nodes: int = 80) -> float:
    nodes_std, wt = np.polynomial.hermite_e.hermegauss(nodes)
    wt = wt / math.sqrt(2.0 * math.pi)
    pts, p, m, sig = model.points, model.probs, model.m_values, model.sigma_values
    signs = FromScorer(scorer).matrix(pts)
    rb = Bayes(model).matrix(pts)
    lam = excess_risk(scorer, model)
    total = []
    for a in range(model.size):
        y = m[a] + sig[a] * nodes_std  # quadrature nodes for Y given X = a
        above = ndtr((m[None, :] - y[:, None]) / sig[None, :])  # P(Y_b > y)
        below = 1.0 - above
        fwd = np.where(signs[a] == 1, above, below) - np.where(rb[a] == 1, above, below)
        bwd = np.where(signs[:, a] == 1, below, above) - np.where(rb[:, a] == 1, below, above)
        proj = 0.5 * (fwd + bwd) @ p - lam
        total.append(p[a] * (wt @ proj**2))
    return math.fsum(total)


def h_variance(scorer: ScoringFunction, model) -> float:
    """Var(h_s(X, Y)) for the first projection of the excess-risk kernel."""
    model = require_finite(model)
    if model.kind == "noisy":
        return _h_variance_noisy(scorer, model)
    return conditional_variance(excess_kernel(FromScorer(scorer), model), model)


@dataclass(frozen=True)
class NoiseConstant:
    """Noise-condition constant.

    ``value`` is the supremum of the conditional expectation, ``inf`` when a
    zero difference has positive probability (always the case for atoms with
    ``alpha > 0``).  ``restricted`` drops zero-difference terms.
    """

    value: float
    restricted: float
    collision: bool


def noise_constant(model, alpha: float) -> NoiseConstant:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    model = require_finite(model)
    ks = np.arange(model.size)
    if model.kind == "bipartite":
        diff = np.abs(model.eta[:, None] - model.eta[None, :])
    elif model.kind == "noisy":
        diff = np.abs(model.delta(ks[:, None], ks[None, :]))
    else:
        raise UnsupportedModelError("noise condition is defined for bipartite and noisy regression models")
    p = model.probs
    live = p > 0
    if alpha == 0.0:
        total = math.fsum(p)
        return NoiseConstant(total, total, False)
    zero = diff == 0.0
    with np.errstate(divide="ignore"):
        terms = np.where(zero, 0.0, diff ** (-alpha))
    per_x = np.array([math.fsum(row) for row in terms * p[None, :]])
    restricted = float(per_x[live].max())
    collision = bool(np.any((zero & (p[None, :] > 0))[live]))
    return NoiseConstant(math.inf if collision else restricted, restricted, collision)


def delta(model: NoisyRegression, x, x_prime) -> float:
    """(m(x) - m(x')) / sqrt(sigma(x)^2 + sigma(x')^2)."""
    if not isinstance(model, NoisyRegression):
        raise UnsupportedModelError("delta is defined for noisy regression models")
    ia = model.lookup(np.atleast_1d(np.asarray(x, float)))[0]
    ib = model.lookup(np.atleast_1d(np.asarray(x_prime, float)))[0]
    return float(model.delta(ia, ib))


# ---------------------------------------------------------------------------
# ROC and AUC


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray

    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_dict(self) -> dict:
        return {"fpr": self.fpr.tolist(), "tpr": self.tpr.tolist()}

    def csv_rows(self):
        yield ("fpr", "tpr")
        for a, b in zip(self.fpr, self.tpr):
            yield (repr(float(a)), repr(float(b)))

    def area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def value_at(self, alpha: float) -> float:
        """Highest TPR of the polyline at false-positive rate ``alpha``."""
        fpr, tpr = self.fpr, self.tpr
        best = -math.inf
        for k in range(len(fpr) - 1):
            a, b = fpr[k], fpr[k + 1]
            if a <= alpha <= b:
                if b == a:
                    best = max(best, tpr[k], tpr[k + 1])
                else:
                    best = max(best, tpr[k] + (tpr[k + 1] - tpr[k]) * (alpha - a) / (b - a))
        return best


def _roc_from_weights(scores, pos_w, neg_w) -> RocCurve:
    scores = np.asarray(scores, dtype=np.float64)
    levels, inv = np.unique(-scores, return_inverse=True)  # descending thresholds
    pw = np.bincount(inv, weights=pos_w, minlength=len(levels))
    nw = np.bincount(inv, weights=neg_w, minlength=len(levels))
    tpr = np.r_[0.0, np.cumsum(pw) / pw.sum()]
    fpr = np.r_[0.0, np.cumsum(nw) / nw.sum()]
    tpr[-1] = fpr[-1] = 1.0
    return RocCurve(fpr, tpr)


def _split_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels > 0
    if pos.all() or not pos.any():
        raise ValueError("both classes must be present")
    return scores, pos


def roc_curve(scores, labels) -> RocCurve:
    """Empirical ROC: sweep distinct score thresholds from high to low."""
    scores, pos = _split_labels(scores, labels)
    return _roc_from_weights(scores, pos.astype(float), (~pos).astype(float))


def _class_weights(model: DiscreteBipartite):
    model = require_finite(model)
    if model.kind != "bipartite":
        raise UnsupportedModelError("ROC analysis needs a bipartite model")
    pos = model.probs * model.eta
    neg = model.probs * (1.0 - model.eta)
    if pos.sum() <= 0 or neg.sum() <= 0:
        raise ValueError("both classes must have positive probability")
    return pos, neg


def true_roc(model: DiscreteBipartite, scorer: ScoringFunction) -> RocCurve:
    """Exact ROC from the class-conditional laws P(x | Y = +-1)."""
    pos, neg = _class_weights(model)
    keep = (pos > 0) | (neg > 0)
    return _roc_from_weights(np.asarray(scorer(model.points))[keep], pos[keep], neg[keep])


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for ties, via midranks."""
    scores, pos = _split_labels(scores, labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(scores)  # midranks
    u = math.fsum(ranks[pos]) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_brute(scores, labels) -> float:
    """(concordant + tied / 2) / (n+ n-) by explicit pair enumeration."""
    scores, pos = _split_labels(scores, labels)
    sp, sn = scores[pos], scores[~pos]
    gt = np.count_nonzero(sp[:, None] > sn[None, :])
    eq = np.count_nonzero(sp[:, None] == sn[None, :])
    return (gt + 0.5 * eq) / (len(sp) * len(sn))


def true_auc(model: DiscreteBipartite, scorer: ScoringFunction) -> float:
    """P(s(X) > s(X') | Y=1, Y'=-1) + P(tie) / 2 on a finite model."""
    pos, neg = _class_weights(model)
    sv = np.asarray(scorer(model.points), dtype=np.float64)
    gt = (sv[:, None] > sv[None, :]).astype(float)
    eq = (sv[:, None] == sv[None, :]).astype(float)
    return float(pos @ (gt + 0.5 * eq) @ neg / (pos.sum() * neg.sum()))


def risk_auc_identity(data: Dataset, scorer: ScoringFunction):
    """(L_n, AUC_n, |L_n - 2 n+ n- (1 - AUC_n) / (n (n - 1))|)."""
    scores = scorer(data.X)
    a = auc(scores, data.y)
    l_n = empirical_risk(FromScorer(scorer), data)
    n = data.n
    n_pos = int(np.count_nonzero(data.y > 0))
    n_neg = n - n_pos
    return l_n, a, abs(l_n - 2.0 * n_pos * n_neg * (1.0 - a) / (n * (n - 1)))


def roc_dominates(upper: RocCurve, lower: RocCurve, tol: float = 1e-12) -> bool:
    """True when ``upper`` lies above ``lower`` at every vertex of either curve."""
    alphas = np.unique(np.r_[upper.fpr, lower.fpr])
    return all(upper.value_at(a) >= lower.value_at(a) - tol for a in alphas)


__all__ = [
    "auc", "auc_brute", "bayes_risk", "bayes_risk_gini_formula", "bayes_risk_min_formula", "bayes_rule",
    "delta", "empirical_risk", "excess_risk", "excess_risk_formula", "gini_mean_difference", "h_variance",
    "noise_constant", "NoiseConstant", "risk_auc_identity", "roc_curve", "roc_dominates", "RocCurve",
    "true_auc", "true_risk", "true_risk_brute", "true_risk_mc", "true_roc",
]
