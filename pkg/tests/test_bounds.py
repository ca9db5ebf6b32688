import math

import numpy as np
import pytest

from tests import oracles
from urank.bounds import (
    TailReport,
    block_indicators,
    first_order_bound,
    fast_rate_bound,
    kernel_class_rademacher,
    kernel_variance,
    moment_bound,
    moment_tail_harness,
    rademacher_draws,
    rademacher_exact,
    rademacher_mc,
    sup_abs,
    tail_bounds,
    vc_rademacher_bound,
)
from urank.core import Dataset, sample_dataset
from urank.scoring import FromScorer, Linear, Stump
from urank.ustat import constant_kernel, projected_kernel, ranking_kernel

CONSTANT_RULE = FromScorer(Linear([0.0]))  # ranks every pair +1


def _always_wrong(m):
    # y_i < y_{m+i}, so the +1 rule errs on every block pair
    return Dataset(np.zeros((2 * m, 1)), np.r_[np.zeros(m), np.ones(m)])


class TestRademacher:
    def test_block_indicators(self):
        np.testing.assert_array_equal(block_indicators([CONSTANT_RULE], _always_wrong(3)), [[1.0, 1.0, 1.0]])

    def test_constant_one_m2(self):
        assert rademacher_exact([CONSTANT_RULE], _always_wrong(2)) == 0.5

    @pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 11])
    def test_constant_one_enumeration_oracle(self, m):
        assert rademacher_exact([CONSTANT_RULE], _always_wrong(m)) == pytest.approx(
            float(oracles.rademacher_constant_one(m)), abs=1e-15)

    def test_constant_zero(self):
        data = Dataset(np.zeros((6, 1)), np.ones(6))
        assert rademacher_exact([CONSTANT_RULE], data) == 0.0
        assert rademacher_mc([CONSTANT_RULE], data, 50, 0) == 0.0

    def test_mc_matches_exact(self):
        data = _always_wrong(10)
        exact = rademacher_exact([CONSTANT_RULE], data)
        draws = rademacher_draws([CONSTANT_RULE], data, 20_000, 1)
        assert abs(draws.mean() - exact) < 3 * draws.std(ddof=1) / math.sqrt(draws.size)

    def test_mc_matches_exact_richer_class(self, model_m1):
        data = sample_dataset(model_m1, 24, 2)
        rules = [FromScorer(Stump(0, thr, d)) for thr in (0.5, 1.5) for d in (1, -1)]
        exact = rademacher_exact(rules, data)
        draws = rademacher_draws(rules, data, 20_000, 3)
        assert abs(draws.mean() - exact) < 3 * draws.std(ddof=1) / math.sqrt(draws.size)

    def test_errors(self):
        with pytest.raises(ValueError):
            rademacher_mc([], _always_wrong(2), 5, 0)
        with pytest.raises(ValueError):
            rademacher_mc([CONSTANT_RULE], _always_wrong(2), 0, 0)
        with pytest.raises(ValueError):
            rademacher_exact([CONSTANT_RULE], _always_wrong(20))


class TestClosedForms:
    def test_first_order(self):
        assert first_order_bound(0.0, 101, 1 / math.e) == pytest.approx(0.4, abs=1e-15)
        assert first_order_bound(0.05, 1001, 0.05) == pytest.approx(0.2 + 4 * math.sqrt(math.log(20) / 1000),
                                                                     abs=1e-15)
        assert first_order_bound(0.1, 50, 1 - 1e-15) == pytest.approx(0.4, abs=1e-6)
        with pytest.raises(ValueError):
            first_order_bound(0.1, 50, 1.0)

    def test_vc(self):
        assert vc_rademacher_bound(7, 7, 3.0) == 3.0
        assert vc_rademacher_bound(1, 100) == pytest.approx(0.1, abs=1e-15)
        assert vc_rademacher_bound(4, 400, 2.0) == pytest.approx(0.2, abs=1e-15)

    def test_fast_rate(self):
        vc_dim, n, d = 3, 1000, 0.05
        base = vc_dim * math.log(n / d) / n
        assert fast_rate_bound(vc_dim, n, d, 0.0, 2.0) == pytest.approx(2 * math.sqrt(base), rel=1e-15)
        assert fast_rate_bound(vc_dim, n, d, 1.0, 2.0) == pytest.approx(2 * base, rel=1e-15)
        assert fast_rate_bound(vc_dim, n, d, 0.5) < fast_rate_bound(vc_dim, n, d, 0.0)
        with pytest.raises(ValueError):
            fast_rate_bound(vc_dim, n, d, 1.5)

    def test_fast_rate_vc_relation(self):
        # at alpha = 0 the ratio to c sqrt(V / n) depends only on the log factor
        ratios = [fast_rate_bound(vc_dim, 500, 0.1, 0.0) / vc_rademacher_bound(vc_dim, 500) for vc_dim in (1, 4, 9)]
        assert np.allclose(ratios, math.sqrt(math.log(500 / 0.1)), rtol=1e-14)

    def test_tail_bounds(self):
        b = tail_bounds(101, 0.1, 0.2, 0.05)
        assert b.hoeffding == pytest.approx(2 * math.exp(-1), abs=1e-15)
        assert tail_bounds(101, 0.1, math.inf, 0.05).bernstein == 2.0
        assert tail_bounds(50, 0.3, 0.1, 0.0, scale=2.0).dpg == pytest.approx(4 * math.exp(-50 * 0.3 / 2), rel=1e-14)
        assert b.bernstein == pytest.approx(2 * math.exp(-50 * 0.01 / (0.4 + 0.2 / 3)), rel=1e-14)
        with pytest.raises(ValueError):
            tail_bounds(10, 0.0, 0.1, 0.1)

    def test_kernel_class(self):
        n, radius = 64, 1.5
        assert kernel_class_rademacher(radius, np.ones(n // 2), n) == pytest.approx(radius * math.sqrt(2 / n), rel=1e-15)
        assert kernel_class_rademacher(0.0, np.ones(4), 8) == 0.0
        assert kernel_class_rademacher(2 * radius, [0.3, 0.2], 4) == 2 * kernel_class_rademacher(radius, [0.3, 0.2], 4)
        with pytest.raises(ValueError):
            kernel_class_rademacher(1.0, [-1.0], 2)

    def test_moment_bound_regimes(self):
        devs = np.array([1.0, 4.0])
        got = moment_bound(devs, ez=0.0, eu=2.0, em=1.0, sup_f=1.0, n=4, moment_scale=1.0)
        expected = [math.exp(-min((v / 2) ** 2, v / 5, (v / 2) ** (2 / 3), math.sqrt(v))) for v in devs]
        np.testing.assert_allclose(got, expected, rtol=1e-15)
        assert np.all(moment_bound(devs, 0.0, 0.0, 0.0, 0.0, 4) == 0.0)


class TestHarness:
    def test_zero_class(self, model_m1):
        rep = moment_tail_harness([constant_kernel(0.0)], model_m1, 10, 100, seed=0)
        assert np.all(rep.empirical == 0) and np.all(rep.empirical_moment == 0)
        assert np.all(rep.bound_moment >= rep.empirical_moment)

    def test_projected_kernel_on_m1(self, model_m1):
        src = ranking_kernel(FromScorer(Stump(0, 0.5)))
        hhat = projected_kernel(src, model_m1)
        rep = moment_tail_harness([hhat], model_m1, 40, 500, seed=1, source=src)
        assert rep.dev.tolist() == pytest.approx([0.02 * k for k in range(1, 16)])
        assert np.all(np.diff(rep.empirical) <= 0) and np.all(np.diff(rep.empirical_moment) <= 0)
        assert np.all((rep.empirical >= 0) & (rep.empirical <= 1))
        for col in ("bound_hoeffding", "bound_bernstein", "bound_dpg", "bound_moment"):
            assert np.all(np.diff(getattr(rep, col)) <= 0)
        assert np.all(rep.empirical <= rep.bound_hoeffding)
        assert rep.inputs["F"] == pytest.approx(sup_abs(hhat, model_m1), abs=0)
        assert rep.inputs["sigma2"] == pytest.approx(kernel_variance(src, model_m1), abs=0)

    def test_homogeneity(self, model_m1):
        hhat = projected_kernel(ranking_kernel(FromScorer(Stump(0, 0.5))), model_m1)
        lam = 2.5
        a = moment_tail_harness([hhat], model_m1, 20, 100, seed=4)
        b = moment_tail_harness([hhat.scaled(lam)], model_m1, 20, 100, seed=4)
        for key in ("EZ_eps", "EU_eps", "EM", "F"):
            assert b.inputs[key] == pytest.approx(lam * a.inputs[key], rel=1e-12)

    def test_rejects_non_degenerate(self, model_m1):
        with pytest.raises(ValueError, match="not degenerate"):
            moment_tail_harness([ranking_kernel(FromScorer(Stump(0, 0.5)))], model_m1, 10, 100)

    def test_rejects_few_replicates(self, model_m1):
        with pytest.raises(ValueError):
            moment_tail_harness([constant_kernel(0.0)], model_m1, 10, 99)

    def test_report_serialization(self, model_m1):
        rep = moment_tail_harness([constant_kernel(0.0)], model_m1, 6, 100, seed=0, t_grid=[0.1, 0.2])
        rows = list(rep.csv_rows())
        assert rows[0] == TailReport.COLUMNS and len(rows) == 3
        d = rep.to_dict()
        assert d["replicates"] == 100 and d["n"] == 6 and d["t"] == [0.1, 0.2]
