"""Monte Carlo estimation, the exact enumeration oracle, and certificate checks."""

import math

import numpy as np
import pytest

from selfnorm.bounds import f_rate
from selfnorm.montecarlo import (
    MCEstimate,
    MeanEstimate,
    Statistic,
    TailEvent,
    clopper_pearson,
    domination_check,
    estimate_tail,
    estimate_tail_from,
    evaluate_event,
    exact_mean_rademacher,
    exact_optimized_bound_rademacher,
    exact_supermartingale_mean_rademacher,
    exact_tail_rademacher,
    exp_growth_coefficient,
    expectation_bound,
    expectation_bound_from,
    golden_section_min,
    optimize_over_p_from,
    supermartingale_check,
)
from selfnorm.processes import BatchStats, CenteredPareto, Rademacher, sample_batch


class TestClopperPearson:
    def test_degenerate_endpoints(self):
        lo, hi = clopper_pearson(0, 100, 0.95)
        assert lo == 0.0 and 0.0 < hi < 0.06
        lo, hi = clopper_pearson(100, 100, 0.95)
        assert hi == 1.0 and lo > 0.94

    def test_interval_brackets_point_estimate(self):
        for hits, n in ((3, 50), (25, 50), (47, 50)):
            lo, hi = clopper_pearson(hits, n, 0.99)
            assert 0.0 <= lo <= hits / n <= hi <= 1.0

    def test_narrows_with_replicates(self):
        widths = []
        for n in (100, 1000, 10000):
            lo, hi = clopper_pearson(n // 5, n, 0.99)
            widths.append(hi - lo)
        assert widths[0] > widths[1] > widths[2]

    def test_input_validation(self):
        with pytest.raises(ValueError):
            clopper_pearson(11, 10, 0.95)
        with pytest.raises(ValueError):
            clopper_pearson(1, 10, 1.0)

    def test_estimate_invariants(self):
        est = MCEstimate.from_hits(7, 200, 0.99)
        assert est.ci_lo <= est.p_hat <= est.ci_hi
        assert MCEstimate.from_hits(0, 200, 0.99).ci_lo == 0.0
        assert MCEstimate.from_hits(200, 200, 0.99).ci_hi == 1.0


class TestExactOracle:
    def test_single_step(self):
        assert exact_tail_rademacher(1, TailEvent(x=1.0)) == 0.5

    def test_two_step_boundary_ratio(self):
        event = TailEvent(x=math.sqrt(2.0), normalizer=Statistic("sqrt_sq_var"))
        assert exact_tail_rademacher(2, event) == 0.25

    def test_three_step_hand_enumeration(self):
        event = TailEvent(x=0.5, normalizer=Statistic("b_n", y=0.0))
        assert exact_tail_rademacher(3, event) == 0.125

    def test_windowed_event(self):
        # S_3 >= 1 and B_3(0) = N+ + 1.5 >= 3.5 forces at least two up-steps
        event = TailEvent(x=1.0, window=(Statistic("b_n", y=0.0), 3.5, math.inf))
        assert exact_tail_rademacher(3, event) == 0.5

    def test_mean_oracle_matches_binomial(self):
        # E[S_n^2] = n by independence
        assert exact_mean_rademacher(8, lambda signs: signs.sum(axis=1) ** 2) == pytest.approx(8.0)

    def test_size_cap(self):
        with pytest.raises(ValueError):
            exact_tail_rademacher(21, TailEvent(x=1.0))
        with pytest.raises(ValueError):
            exact_tail_rademacher(0, TailEvent(x=1.0))

    def test_degenerate_normalizer_is_false(self):
        batch = np.zeros((4, 3))
        stats = BatchStats(batch, Rademacher())
        event = TailEvent(x=0.0, normalizer=Statistic("sqrt_sq_var"))
        assert not evaluate_event(stats, event).any()


class TestEstimateTail:
    def test_single_step_coin(self):
        event = TailEvent(x=0.0, normalizer=Statistic("b_n", y=0.0))
        est = estimate_tail(Rademacher(), 1, event, 2000, 0.99, 424242)
        assert est.ci_lo <= 0.5 <= est.ci_hi

    def test_impossible_event(self):
        est = estimate_tail(Rademacher(), 10, TailEvent(x=1e3), 500, 0.99, 7)
        assert est.hits == 0 and est.ci_lo == 0.0

    def test_minimum_replicates(self):
        with pytest.raises(ValueError):
            estimate_tail(Rademacher(), 5, TailEvent(x=1.0), 50, 0.99, 7)

    @pytest.mark.parametrize("n", [5, 8, 10])
    def test_oracle_equivalence(self, n):
        events = [
            TailEvent(x=1.0, normalizer=Statistic("sqrt_sq_var")),
            TailEvent(x=0.3, normalizer=Statistic("b_n", y=0.0)),
            TailEvent(x=1.0, window=(Statistic("b_n", y=0.0), 0.0, n)),
        ]
        stats = BatchStats(sample_batch(Rademacher(), n, 40_000, 1357), Rademacher())
        for event in events:
            exact = exact_tail_rademacher(n, event)
            est = estimate_tail_from(stats, event, 0.99)
            assert est.ci_lo <= exact <= est.ci_hi

    def test_determinism(self):
        event = TailEvent(x=0.5, normalizer=Statistic("sqrt_sq_var"))
        a = estimate_tail(Rademacher(), 10, event, 1000, 0.99, 31)
        b = estimate_tail(Rademacher(), 10, event, 1000, 0.99, 31)
        assert a == b


class TestExpectationBounds:
    def test_zero_deviation_is_one(self):
        for p in (1.5, 2.0, 10.0):
            value, se = expectation_bound(
                Rademacher(), 10, 0.0, y=0.0, p=p, with_indicator=False,
                n_rep=500, master_seed=3,
            )
            assert value == pytest.approx(1.0, abs=1e-12)

    def test_p_near_one_limit(self):
        value, _ = expectation_bound(
            Rademacher(), 10, 0.5, y=0.0, p=1.0 + 1e-6, with_indicator=False,
            n_rep=2000, master_seed=3,
        )
        assert value == pytest.approx(1.0, abs=1e-3)

    def test_matches_exact_enumeration(self):
        n, x, p = 10, 0.3, 2.0
        rate = f_rate(x, 0.0)

        def certificate(signs):
            pos = ((signs ** 2) * (signs > 0)).sum(axis=1)
            b0 = pos + signs.shape[1] * 0.5
            ind = signs.sum(axis=1) >= x * b0
            return np.exp(-(p - 1.0) * rate * b0) * ind

        exact = exact_mean_rademacher(n, certificate) ** (1.0 / p)
        value, se = expectation_bound(
            Rademacher(), n, x, y=0.0, p=p, with_indicator=True,
            n_rep=40_000, master_seed=77,
        )
        assert abs(value - exact) <= 3.0 * se + 1e-9

    def test_indicator_only_removes_mass(self):
        stats = BatchStats(sample_batch(Rademacher(), 10, 5000, 11), Rademacher())
        with_ind, _ = expectation_bound_from(stats, 0.3, y=0.0, p=2.0, with_indicator=True)
        without, _ = expectation_bound_from(stats, 0.3, y=0.0, p=2.0, with_indicator=False)
        assert with_ind <= without + 1e-12

    def test_p_domain(self):
        with pytest.raises(ValueError):
            expectation_bound(Rademacher(), 5, 1.0, y=0.0, p=1.0, n_rep=500, master_seed=1)

    def test_exactly_one_normalizer_flavor(self):
        stats = BatchStats(sample_batch(Rademacher(), 5, 500, 1), Rademacher())
        with pytest.raises(ValueError):
            expectation_bound_from(stats, 1.0, p=2.0)
        with pytest.raises(ValueError):
            expectation_bound_from(stats, 1.0, y=0.0, beta=1.5, p=2.0)


class TestOptimizeOverP:
    def test_golden_section_on_parabola(self):
        x_star, f_star = golden_section_min(lambda u: (u - 2.0) ** 2, 0.0, 5.0)
        assert x_star == pytest.approx(2.0, abs=1e-9)
        assert f_star == pytest.approx(0.0, abs=1e-15)

    def test_zero_deviation_returns_one(self):
        stats = BatchStats(sample_batch(Rademacher(), 10, 500, 3), Rademacher())
        out = optimize_over_p_from(stats, 0.0, y=0.0, with_indicator=False)
        assert out.value == pytest.approx(1.0, abs=1e-12)

    def test_argmin_on_evaluated_set(self):
        stats = BatchStats(sample_batch(Rademacher(), 10, 20_000, 5), Rademacher())
        out = optimize_over_p_from(stats, 0.3, y=0.0)
        at_star, _ = expectation_bound_from(stats, 0.3, y=0.0, p=out.p_star)
        assert out.value == pytest.approx(at_star, rel=1e-12)
        # perturbations stay inside the searched window: the infimum may sit
        # at its edge (the objective can be monotone in p)
        for raw in ((out.p_star - 1.0) / 2.0, (out.p_star - 1.0) * 2.0):
            pm1 = min(max(raw, 1e-3), 50.0)
            other, _ = expectation_bound_from(stats, 0.3, y=0.0, p=1.0 + pm1)
            assert out.value <= other + 1e-12

    def test_dominates_exact_tail(self):
        # the optimized certificate mean is an upper bound for the tail
        for x in (0.3, 0.5):
            event = TailEvent(x=x, normalizer=Statistic("b_n", y=0.0))
            exact = exact_tail_rademacher(10, event)
            opt = exact_optimized_bound_rademacher(10, x, y=0.0)
            assert exact <= opt.value + 1e-12

    def test_beta_flavor_exact(self):
        event = TailEvent(x=0.3, normalizer=Statistic("g_n", beta=1.5))
        exact = exact_tail_rademacher(8, event)
        opt = exact_optimized_bound_rademacher(8, 0.3, beta=1.5)
        assert exact <= opt.value + 1e-12

    def test_never_worse_than_p_two(self):
        stats = BatchStats(sample_batch(Rademacher(), 10, 10_000, 23), Rademacher())
        for x in (0.1, 0.3, 0.5):
            out = optimize_over_p_from(stats, x, y=0.0)
            at_two, _ = expectation_bound_from(stats, x, y=0.0, p=2.0)
            assert out.value <= at_two + 1e-12


class TestDominationCheck:
    def test_pass(self):
        est = MCEstimate(n_rep=100, hits=10, p_hat=0.1, ci_lo=0.1, ci_hi=0.2, gamma=0.99)
        verdict = domination_check(est, 0.5)
        assert verdict.status == "pass"
        assert verdict.margin == pytest.approx(0.4)

    def test_violation_evidence(self):
        est = MCEstimate(n_rep=100, hits=60, p_hat=0.6, ci_lo=0.6, ci_hi=0.7, gamma=0.99)
        assert domination_check(est, 0.5).status == "violation_evidence"

    def test_vacuous(self):
        est = MCEstimate(n_rep=100, hits=60, p_hat=0.6, ci_lo=0.6, ci_hi=0.7, gamma=0.99)
        assert domination_check(est, 1.3).status == "vacuous"

    def test_bound_domain(self):
        est = MCEstimate(n_rep=10, hits=0, p_hat=0.0, ci_lo=0.0, ci_hi=0.3, gamma=0.99)
        with pytest.raises(ValueError):
            domination_check(est, -0.5)


class TestSupermartingaleChecks:
    def test_tiny_lambda_is_unit_mean(self):
        verdict = supermartingale_check(
            "U", Rademacher(), 10, 1e-9, y=0.5, n_rep=500, master_seed=5
        )
        assert verdict.status == "pass"
        assert verdict.estimate.mean == pytest.approx(1.0, abs=1e-6)

    def test_exact_u_certificate_grid(self):
        for lam in (0.1, 0.5, 1.0):
            for y in (0.0, 0.5, 1.0):
                assert exact_supermartingale_mean_rademacher(10, lam, y) <= 1.0 + 1e-12

    def test_mc_matches_exact_u_mean(self):
        exact = exact_supermartingale_mean_rademacher(10, 0.5, 1.0)
        verdict = supermartingale_check(
            "U", Rademacher(), 10, 0.5, y=1.0, n_rep=40_000, master_seed=8
        )
        est = verdict.estimate
        assert abs(est.mean - exact) <= 3.0 * est.se
        assert verdict.status == "pass"

    def test_v_certificate_heavy_tail(self):
        verdict = supermartingale_check(
            "V", CenteredPareto(beta_tail=1.9), 20, 0.3, beta=1.5,
            n_rep=20_000, master_seed=13,
        )
        assert verdict.status == "pass"
        assert isinstance(verdict.estimate, MeanEstimate)
        assert verdict.estimate.sample_max >= verdict.estimate.mean

    def test_lambda_domain(self):
        with pytest.raises(ValueError):
            supermartingale_check("U", Rademacher(), 5, 0.0, y=0.0, n_rep=500, master_seed=1)
        with pytest.raises(ValueError):
            exp_growth_coefficient(-1.0, 0.5)

    def test_kind_validation(self):
        with pytest.raises(ValueError, match="kind"):
            supermartingale_check("W", Rademacher(), 5, 0.5, y=0.0, n_rep=500, master_seed=1)
        with pytest.raises(ValueError, match="needs y"):
            supermartingale_check("U", Rademacher(), 5, 0.5, n_rep=500, master_seed=1)

    def test_growth_coefficient_limit(self):
        assert exp_growth_coefficient(0.5, 0.0) == pytest.approx(0.125, rel=1e-14)
        # series and closed form agree across the cutover
        lam = 1.0
        assert exp_growth_coefficient(lam, 9.9e-5) == pytest.approx(
            exp_growth_coefficient(lam, 1.01e-4), rel=1e-6
        )
