import math

import numpy as np
import pytest

from tests import oracles
from tests.conftest import random_bipartite
from urank.core import Dataset, sample_dataset
from urank.learners import (
    BoostConfig,
    Exponential,
    Hinge,
    KernelConfig,
    Logit,
    boost_rank,
    conditional_cost,
    conditional_cost_wrong,
    consistency_radius,
    convex_bayes_risk,
    convex_excess_to_rank_bound,
    convex_risk,
    cost_from_name,
    empirical_cost,
    erm_finite,
    erm_stumps,
    kernel_rank,
    midpoint_thresholds,
    pair_points,
    psi,
    psi_inverse,
    stump_risks,
)
from urank.risk import empirical_risk, excess_risk, true_auc, true_risk
from urank.scoring import FromScorer, GaussianPairKernel, Linear, SignRule, Stump, Table, bayes_rule

COSTS = [Exponential, Logit, Hinge]


def _line_data():
    return Dataset([[0.0], [1.0], [2.0], [3.0]], [-1.0, -1.0, 1.0, 1.0])


class TestCostFunctions:
    @pytest.mark.parametrize("phi", COSTS, ids=lambda cost: cost.name)
    def test_unit_at_zero_and_dominates_step(self, phi):
        assert phi.value(0.0) == pytest.approx(1.0, abs=1e-15)
        x = np.linspace(-20, 20, 4001)
        assert np.all(phi.value(x) >= (x >= 0))

    @pytest.mark.parametrize("phi", COSTS, ids=lambda cost: cost.name)
    def test_convex_on_grid(self, phi):
        x = np.linspace(-5, 5, 1001)
        v = phi.value(x)
        assert np.all(v[:-2] + v[2:] - 2 * v[1:-1] >= -1e-12)

    @pytest.mark.parametrize("phi", COSTS, ids=lambda cost: cost.name)
    def test_right_derivative(self, phi):
        x = np.array([-3.0, -1.0, -0.2, 0.0, 0.7])
        step = 1e-7
        assert np.allclose(phi.derivative(x), (phi.value(x + step) - phi.value(x)) / step, atol=1e-5)

    def test_from_name(self):
        assert cost_from_name("logit") == Logit
        with pytest.raises(ValueError):
            cost_from_name("square")


class TestErmFinite:
    def test_ties_go_to_first(self, model_m1):
        data = sample_dataset(model_m1, 30, 0)
        a, b = FromScorer(Stump(0, 0.5)), FromScorer(Stump(0, 0.5))
        assert erm_finite([a, b], data)[0] is a

    def test_single_rule(self, model_m1):
        rule = FromScorer(Stump(0, 1.5))
        data = sample_dataset(model_m1, 10, 1)
        assert erm_finite([rule], data) == (rule, empirical_risk(rule, data))

    def test_empty(self, model_m1):
        with pytest.raises(ValueError):
            erm_finite([], sample_dataset(model_m1, 10, 1))

    def test_exhaustive(self, model_m1):
        rng = np.random.default_rng(2)
        rules = [FromScorer(Table(model_m1.points, rng.normal(size=3))) for _ in range(20)]
        data = sample_dataset(model_m1, 50, 3)
        _, risk = erm_finite(rules, data)
        assert all(risk <= empirical_risk(rule, data) for rule in rules)

    def test_selects_bayes_ordering_on_large_samples(self, model_m1):
        import itertools
        rules = [FromScorer(Table(model_m1.points, np.array(p, float))) for p in itertools.permutations(range(3))]
        chosen = [rules.index(erm_finite(rules, sample_dataset(model_m1, 2000, rep))[0]) for rep in range(20)]
        hits = sum(true_risk(rules[k], model_m1) == pytest.approx(0.0975, abs=1e-12) for k in chosen)
        assert hits == 20


class TestStumps:
    def test_matches_loop_counts(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            n = int(rng.integers(2, 25))
            x = rng.integers(0, 6, n).astype(float)
            y = rng.integers(0, 3, n).astype(float)
            data = Dataset(x[:, None], y)
            grid = np.array([-1.0, 0.5, 2.5, 4.5, 9.0])
            risks = stump_risks(data, 0, grid)
            for k, thr in enumerate(grid):
                for col, direction in enumerate((1, -1)):
                    scores = [direction * float(v > thr) for v in x]
                    assert risks[k, col] == pytest.approx(float(oracles.pair_risk(scores, y.tolist())), abs=1e-15)

    def test_separable(self):
        stump, risk = erm_stumps(_line_data())
        assert risk == 0.0
        assert 1.0 <= stump.threshold < 2.0 and stump.direction == 1

    def test_single_threshold_picks_direction(self):
        data = Dataset([[0.0], [1.0], [2.0], [3.0]], [1.0, 1.0, -1.0, -1.0])
        stump, risk = erm_stumps(data, [[1.5]])
        assert (stump.threshold, stump.direction, risk) == (1.5, -1, 0.0)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            erm_stumps(_line_data(), [[]])

    def test_m1_best_stump(self, model_m1):
        data = sample_dataset(model_m1, 4000, 5)
        stump, risk = erm_stumps(data)
        grid = midpoint_thresholds(data.X[:, 0])
        rules = [FromScorer(Stump(0, thr, d)) for thr in grid for d in (1, -1)]
        assert risk == pytest.approx(erm_finite(rules, data)[1], abs=1e-15)
        # stumps cannot express three levels; the best one splits {0} from {1, 2}
        best_exact = min(true_risk(rule, model_m1) for rule in rules)
        assert true_risk(FromScorer(stump), model_m1) == pytest.approx(best_exact, abs=1e-15)
        assert best_exact == pytest.approx(0.1225, abs=1e-15)


class TestEmpiricalCost:
    def test_zero_function(self, model_m1):
        data = sample_dataset(model_m1, 15, 6)
        zero = Linear([0.0])
        for phi in COSTS:
            assert empirical_cost(zero, data, phi) == pytest.approx(1.0, abs=1e-15)

    def test_hinge_margin(self):
        data = Dataset([[0.0], [1.0], [2.0]], [-1.0, 0.0, 1.0])
        assert empirical_cost(Linear([1.0]), data, Hinge) == 0.0

    def test_exponential_two_samples(self):
        v = 0.7
        data = Dataset([[0.0], [v]], [-1.0, 1.0])
        assert empirical_cost(Linear([1.0]), data, Exponential) == pytest.approx(math.exp(-v), abs=1e-15)

    def test_dominates_ranking_risk(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            data = Dataset(rng.normal(size=(12, 2)), rng.integers(0, 3, 12).astype(float))
            scorer = Linear(rng.normal(size=2))
            for phi in COSTS:
                assert empirical_risk(SignRule(scorer), data) <= empirical_cost(scorer, data, phi) + 1e-15


class TestBoost:
    def test_one_round_separable(self):
        res = boost_rank(_line_data(), BoostConfig(rounds=1))
        assert res.objective()[-1] < 1.0

    def test_zero_margin_early_stop(self):
        # every stump splits the pairs evenly; the optimal step is zero
        data = Dataset([[0.0], [0.0], [1.0], [1.0]], [1.0, -1.0, 1.0, -1.0])
        res = boost_rank(data, BoostConfig(rounds=5))
        assert res.stop_reason == "no descent direction"
        assert len(res.scorer.terms) == 0

    def test_monotone_descent_and_log(self, model_m1):
        data = sample_dataset(model_m1, 200, 8)
        res = boost_rank(data, BoostConfig(rounds=10))
        obj = res.objective()
        assert np.all(np.diff(obj) <= 1e-15)
        for rnd, a_n, base, w in res.log[1:]:
            assert isinstance(base, str) and math.isfinite(w)
        assert obj[-1] == pytest.approx(empirical_cost(res.scorer, data, Exponential), rel=1e-12)

    @pytest.mark.parametrize("mode", ["clip", "stop"])
    def test_budget(self, model_m1, mode):
        data = sample_dataset(model_m1, 200, 9)
        res = boost_rank(data, BoostConfig(rounds=15, budget=0.8, budget_mode=mode))
        assert res.scorer.weight_norm <= 0.8 + 1e-9

    def test_fixed_step(self, model_m1):
        data = sample_dataset(model_m1, 100, 10)
        res = boost_rank(data, BoostConfig(rounds=5, step="fixed", step_size=0.05))
        assert all(abs(w) == pytest.approx(0.05) for w, _ in res.scorer.terms)
        assert np.all(np.diff(res.objective()) <= 1e-15)

    def test_auc_at_least_best_stump(self, model_m1):
        data = sample_dataset(model_m1, 500, 11)
        stump, _ = erm_stumps(data)
        res = boost_rank(data, BoostConfig(rounds=20))
        assert true_auc(model_m1, res.scorer) >= true_auc(model_m1, stump) - 1e-12

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BoostConfig(rounds=0)
        with pytest.raises(ValueError):
            BoostConfig(budget=0.0)


class TestKernelRank:
    def test_tiny_ball(self):
        data = _line_data()
        res = kernel_rank(data, KernelConfig(radius=1e-9, steps=20))
        assert res.objective()[-1] == pytest.approx(1.0, abs=1e-8)

    def test_one_step_closed_form(self):
        data = Dataset([[0.0], [1.0]], [-1.0, 1.0])
        pts, z = pair_points(data)
        res = kernel_rank(data, KernelConfig(radius=100.0, steps=1, step0=0.3, keep="final",
                                             kernel=GaussianPairKernel(1.0)))
        # coefs = -step0 * grad with grad = -z * hinge_slope(0) / 2 (two ordered pairs)
        np.testing.assert_allclose(res.scorer.coefs, 0.3 * z / 2, atol=1e-15)
        np.testing.assert_array_equal(res.scorer.anchors, pts)

    def test_budget_after_every_step(self, model_m1):
        data = sample_dataset(model_m1, 20, 12)
        res = kernel_rank(data, KernelConfig(radius=0.5, steps=50, step0=2.0))
        assert all(sq <= 0.25 + 1e-9 for _, _, sq in res.log)
        assert res.scorer.rkhs_norm() <= 0.5 + 1e-9

    def test_separable_reaches_zero_risk(self):
        data = _line_data()
        assert erm_stumps(data)[1] == 0.0
        res = kernel_rank(data, KernelConfig(radius=20.0, steps=300, step0=2.0))
        assert res.objective().min() < 1.0
        assert empirical_risk(SignRule(res.scorer), data) == 0.0

    def test_non_psd_kernel_rejected(self):
        class Bad:
            def gram(self, left, right):
                return -np.ones((len(left), len(right))) - np.eye(len(left))

            def to_dict(self):
                return {}

        with pytest.raises(ValueError):
            kernel_rank(_line_data(), KernelConfig(kernel=Bad()))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            KernelConfig(radius=0.0)


class TestPsi:
    @pytest.mark.parametrize("phi", COSTS, ids=lambda cost: cost.name)
    def test_basic_properties(self, phi):
        assert abs(psi(phi, 0.0)) < 1e-9
        xs = np.linspace(0, 1, 21)
        vals = [psi(phi, x) for x in xs]
        assert np.all(np.diff(vals) >= -1e-9)
        for x in xs[1:]:
            assert psi_inverse(phi, psi(phi, x)) == pytest.approx(x, abs=1e-6)

    def test_hinge_identity(self):
        for x in np.linspace(0, 1, 11):
            assert psi(Hinge, x) == pytest.approx(x, abs=1e-6)
            assert psi(Hinge, x, form="symmetric") == pytest.approx(0.0, abs=1e-6)

    def test_exponential_closed_form(self):
        for x in np.linspace(0, 1, 11):
            assert psi(Exponential, x) == pytest.approx(1 - math.sqrt(1 - x * x), abs=1e-8)
            u = psi(Exponential, x)
            assert psi_inverse(Exponential, u) <= math.sqrt(2 * u) + 1e-9

    def test_conditional_cost_exponential(self):
        for rho in (0.1, 0.5, 0.8):
            assert conditional_cost(Exponential, rho) == pytest.approx(2 * math.sqrt(rho * (1 - rho)), abs=1e-9)
        assert conditional_cost_wrong(Exponential, 0.8) == pytest.approx(1.0, abs=1e-9)

    def test_inverse_range(self):
        with pytest.raises(ValueError):
            psi_inverse(Hinge, 1.5)
        with pytest.raises(ValueError):
            psi(Hinge, 2.0)

    def test_rank_bound_examples(self):
        assert convex_excess_to_rank_bound(0.0, Exponential) == 0.0
        assert convex_excess_to_rank_bound(0.3, Hinge) == pytest.approx(0.3, abs=1e-9)
        assert convex_excess_to_rank_bound(0.02, Exponential) == pytest.approx(math.sqrt(1 - 0.98**2), abs=1e-8)
        assert convex_excess_to_rank_bound(5.0, Hinge) == 1.0
        with pytest.raises(ValueError):
            convex_excess_to_rank_bound(-0.1, Hinge)


class TestCalibration:
    @pytest.mark.parametrize("phi", COSTS, ids=lambda cost: cost.name)
    def test_excess_bounded_by_psi_inverse(self, phi):
        rng = np.random.default_rng(13)
        for _ in range(50):
            model = random_bipartite(rng, size=4)
            score = rng.normal(size=4)
            a_excess = max(convex_risk(score, model, phi) - convex_bayes_risk(model, phi), 0.0)
            rank_excess = excess_risk(Table(model.points, score), model)
            assert rank_excess <= convex_excess_to_rank_bound(a_excess, phi) + 1e-9

    def test_convex_risk_of_zero_scores(self, model_m1):
        for phi in COSTS:
            assert convex_risk(np.zeros(3), model_m1, phi) == pytest.approx(1.0, abs=1e-15)

    def test_bayes_rule_risk_consistency(self, model_m1):
        assert true_risk(bayes_rule(model_m1), model_m1) == pytest.approx(0.0975, abs=1e-15)
        assert convex_bayes_risk(model_m1, Exponential) <= convex_risk([0.2, 0.5, 0.9], model_m1, Exponential)


class TestConsistencyRadius:
    def test_schedules(self):
        assert consistency_radius(256, Hinge) == pytest.approx(2.0, abs=1e-15)
        assert consistency_radius(100, Exponential) == pytest.approx(math.log(100) / 4, abs=1e-15)
        # B^2 phi'(B) / sqrt(n) shrinks along the exponential schedule
        vals = [consistency_radius(n, Exponential) ** 2 * math.exp(consistency_radius(n, Exponential)) / math.sqrt(n)
                for n in (10**3, 10**5, 10**7)]
        assert vals[0] > vals[1] > vals[2]
