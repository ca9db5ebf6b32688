"""Randomized properties checked against loop oracles with hypothesis."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tests import oracles
from tests.conftest import random_bipartite
from urank import _kernels
from urank.core import Dataset, sample_dataset
from urank.risk import auc, auc_brute, empirical_risk, risk_auc_identity
from urank.scoring import FromScorer, Linear, Table
from urank.ustat import hoeffding_decompose, ranking_kernel

BACKENDS = _kernels.backends()
# few distinct values so ties are common
small_ints = st.integers(min_value=-3, max_value=3)


@st.composite
def labelled_scores(draw, min_size=2, max_size=30, both_classes=False):
    n = draw(st.integers(min_value=min_size, max_value=max_size))
    scores = draw(st.lists(small_ints, min_size=n, max_size=n))
    labels = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    if both_classes and len(set(labels)) < 2:
        labels[0] = -labels[-1]
    return np.array(scores, float), np.array(labels, float)


@given(labelled_scores(both_classes=True))
def test_auc_fast_matches_fraction_oracle(case):
    score, y = case
    expected = float(oracles.pair_auc(score.tolist(), y.tolist()))
    assert math.isclose(auc(score, y), expected, abs_tol=1e-12)
    assert math.isclose(auc_brute(score, y), expected, abs_tol=1e-12)


@given(labelled_scores(both_classes=True))
def test_risk_auc_identity(case):
    score, y = case
    data = Dataset(score[:, None], y)
    _, _, gap = risk_auc_identity(data, Linear([1.0]))
    assert gap < 1e-12


@given(st.integers(2, 25).flatmap(lambda n: st.tuples(
    st.lists(small_ints, min_size=n, max_size=n), st.lists(small_ints, min_size=n, max_size=n))))
def test_empirical_risk_matches_loop(case):
    score, y = (np.array(v, float) for v in case)
    got = empirical_risk(FromScorer(Linear([1.0])), Dataset(score[:, None], y))
    assert math.isclose(got, float(oracles.pair_risk(score.tolist(), y.tolist())), abs_tol=1e-15)


@given(st.integers(1, 12).flatmap(lambda n: st.lists(
    st.floats(-1e6, 1e6, allow_nan=False), min_size=n * n, max_size=n * n)))
def test_backends_agree_offdiag_sum(vals):
    n = int(round(math.sqrt(len(vals))))
    a = np.array(vals).reshape(n, n)
    results = {k: _kernels.offdiag_sum(a, impl) for k, impl in BACKENDS.items()}
    ref = math.fsum(a[i, j] for i in range(n) for j in range(n) if i != j)
    for v in results.values():
        assert math.isclose(v, ref, rel_tol=1e-12, abs_tol=1e-6)


@given(st.integers(0, 25).flatmap(lambda n: st.tuples(
    st.lists(small_ints, min_size=n, max_size=n), st.lists(small_ints, min_size=n, max_size=n))))
def test_backends_agree_pair_mistakes(case):
    score, y = (np.array(v, float) for v in case)
    results = {_kernels.pair_mistakes(score, y, impl) for impl in BACKENDS.values()}
    n = len(score)
    expected = oracles.pair_risk(score.tolist(), y.tolist()) * n * (n - 1) if n > 1 else 0
    assert results == {int(expected)}


@given(st.integers(1, 20).flatmap(lambda n: st.tuples(
    st.lists(small_ints, min_size=n, max_size=n), st.lists(small_ints, min_size=n, max_size=n))))
def test_backends_agree_stump_cut_counts(case):
    x, y = (np.array(v, float) for v in case)
    outs = [_kernels.stump_cut_counts(x, y, impl) for impl in BACKENDS.values()]
    for xs, disc, cross, within in outs:
        np.testing.assert_array_equal(xs, np.sort(x, kind="stable"))
        for cut in range(len(x) + 1):
            assert (disc[cut], cross[cut], within[cut]) == oracles.stump_counts(x.tolist(), y.tolist(), cut)


@given(st.integers(1, 15).flatmap(lambda n: st.tuples(
    st.lists(small_ints, min_size=n, max_size=n), st.lists(small_ints, min_size=n, max_size=n),
    st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n, max_size=n))))
def test_backends_agree_weighted_discordance(case):
    m, score, p = (np.array(v, float) for v in case)
    expected = oracles.weighted_discordance(m.tolist(), score.tolist(), p.tolist())
    for impl in BACKENDS.values():
        got = _kernels.weighted_discordance(m, score, p, impl)
        assert all(math.isclose(g, e, rel_tol=1e-12, abs_tol=1e-14) for g, e in zip(got, expected))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 40))
def test_hoeffding_parts_match_loop_oracle(seed, n):
    rng = np.random.default_rng(seed)
    model = random_bipartite(rng)
    table = dict(zip(model.points[:, 0].tolist(), rng.integers(-2, 3, size=model.size).tolist()))
    rule = FromScorer(Table(model.points, [float(table[p]) for p in model.points[:, 0]]))
    data = sample_dataset(model, n, seed)
    parts = hoeffding_decompose(ranking_kernel(rule), data, model)

    def kernel_loop(a, b):
        sign = 1 if table[a[0][0]] >= table[b[0][0]] else -1
        return 1.0 if (a[1] - b[1]) * sign < 0 else 0.0

    atoms = oracles.joint_law_bipartite([(v,) for v in model.points[:, 0]], model.probs, model.eta)
    mean = oracles.expectation2(kernel_loop, atoms)
    pts = [((x,), y) for x, y in zip(data.X[:, 0].tolist(), data.y.tolist())]
    proj_vals = [oracles.projection(kernel_loop, atoms, a) - mean for a in pts]
    remainder = math.fsum(0.5 * (kernel_loop(pts[i], pts[j]) + kernel_loop(pts[j], pts[i])) - mean - proj_vals[i] - proj_vals[j]
                  for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    assert math.isclose(parts.mean, mean, abs_tol=1e-12)
    np.testing.assert_allclose(parts.h_values, proj_vals, atol=1e-12)
    assert math.isclose(parts.t_n, math.fsum(proj_vals) / n, abs_tol=1e-12)
    assert math.isclose(parts.w_n, remainder, abs_tol=1e-12)
    assert parts.residual < 1e-12
