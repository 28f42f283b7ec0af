"""Censoring rule, likelihood ratios, tail masses, and threshold design."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from censorcs.censor import (
    CensorConfig,
    Decision,
    DecisionKind,
    Thresholds,
    brute_force_thresholds,
    censor,
    compute_thresholds,
    expected_cost,
    likelihood_ratio,
    log_likelihood_ratio,
    logpdf_empty_overlap,
    logpdf_nonempty_overlap,
    overlap_pmf,
    overlap_priors,
    pdf_empty_overlap,
    pdf_nonempty_overlap,
    prob_censor,
    prob_false_alarm,
    prob_miss,
    q_func,
    q_inv,
    tail_mass,
    tail_mass_inv,
)
from censorcs.model import ModelParams

PARAMS = ModelParams(n=40, k=4, k_c=8, sigma_s=1.0, sigma_v=0.15, m=10)
CFG = CensorConfig(alpha=0.5, beta=0.1)


class TestGaussianTail:
    def test_against_quadrature(self):
        for x in (-3.0, -0.5, 0.0, 0.3, 1.0, 2.5, 5.0, 8.0):
            assert q_func(x) == pytest.approx(oracles.q_quad(x), abs=1e-12)

    def test_far_tail_keeps_relative_accuracy(self):
        # erfc-based implementations stay meaningful where 1 - cdf would
        # round to zero
        assert q_func(10.0) == pytest.approx(7.619853024160527e-24, rel=1e-10)

    def test_inverse_round_trip(self):
        for p in (1e-12, 1e-6, 0.025, 0.5, 0.9, 1 - 1e-9):
            assert q_func(q_inv(p)) == pytest.approx(p, rel=1e-10)

    def test_inverse_domain(self):
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                q_inv(p)


class TestOverlapDistribution:
    def test_small_case_by_hand(self):
        # n=10, k=2, k_c=3: 21 of the 45 scene supports miss the node
        params = ModelParams(n=10, k=2, k_c=3, sigma_s=1.0, sigma_v=0.1, m=1)
        pi0, pi1 = overlap_priors(params)
        assert pi0 == pytest.approx(21 / 45, abs=1e-15)
        assert pi1 == pytest.approx(24 / 45, abs=1e-15)
        pmf = overlap_pmf(params)
        assert pmf.shape == (2,)
        assert pmf[0] == pytest.approx(21 / 24, abs=1e-15)
        assert pmf[1] == pytest.approx(3 / 24, abs=1e-15)

    def test_matches_hypergeometric_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(2, 200))
            k = int(rng.integers(1, n + 1))
            k_c = int(rng.integers(1, n + 1))
            params = ModelParams(n=n, k=k, k_c=k_c, sigma_s=1.0, sigma_v=0.1, m=1)
            pi0, pi1 = overlap_priors(params)
            assert pi0 == pytest.approx(oracles.overlap_prior_hypergeom(params), abs=1e-12)
            assert pi0 + pi1 == pytest.approx(1.0, abs=1e-15)
            pmf = overlap_pmf(params)
            ref = oracles.overlap_pmf_hypergeom(params)
            assert pmf == pytest.approx(ref, abs=1e-12)
            assert pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_guaranteed_overlap_when_supports_must_intersect(self):
        # k + k_c > n forces a nonempty overlap
        params = ModelParams(n=6, k=4, k_c=3, sigma_s=1.0, sigma_v=0.1, m=1)
        pi0, pi1 = overlap_priors(params)
        assert pi0 == 0.0 and pi1 == 1.0


class TestDensities:
    def test_each_conditional_density_integrates_to_one(self):
        from scipy import integrate

        total_e, _ = integrate.quad(
            lambda z: pdf_empty_overlap(z, PARAMS), -np.inf, np.inf
        )
        total_o, _ = integrate.quad(
            lambda z: pdf_nonempty_overlap(z, PARAMS), -np.inf, np.inf, limit=200
        )
        assert total_e == pytest.approx(1.0, abs=1e-9)
        assert total_o == pytest.approx(1.0, abs=1e-9)

    def test_log_and_linear_forms_agree(self):
        zs = np.linspace(-4.0, 4.0, 41)
        assert np.allclose(
            np.exp(logpdf_empty_overlap(zs, PARAMS)), pdf_empty_overlap(zs, PARAMS),
            rtol=1e-12, atol=0.0,
        )
        assert np.allclose(
            np.exp(logpdf_nonempty_overlap(zs, PARAMS)), pdf_nonempty_overlap(zs, PARAMS),
            rtol=1e-12, atol=0.0,
        )


class TestLikelihoodRatio:
    def test_is_the_ratio_of_conditional_densities(self):
        zs = np.linspace(-6.0, 6.0, 101)
        direct = logpdf_nonempty_overlap(zs, PARAMS) - logpdf_empty_overlap(zs, PARAMS)
        assert np.allclose(log_likelihood_ratio(zs, PARAMS), direct, atol=1e-10)

    def test_even_and_increasing_in_magnitude(self):
        zs = np.linspace(0.0, 12.0, 400)
        llr = log_likelihood_ratio(zs, PARAMS)
        assert np.all(np.diff(llr) > 0.0)
        assert np.allclose(
            log_likelihood_ratio(-zs, PARAMS), llr, rtol=0.0, atol=1e-13
        )

    def test_unit_at_zero_signal_power(self):
        params = ModelParams(n=40, k=4, k_c=8, sigma_s=0.0, sigma_v=0.15, m=1)
        zs = np.linspace(-5.0, 5.0, 21)
        assert np.allclose(log_likelihood_ratio(zs, params), 0.0, atol=1e-14)
        assert np.allclose(likelihood_ratio(zs, params), 1.0, atol=1e-14)

    def test_linear_form_consistency(self):
        zs = np.linspace(-3.0, 3.0, 31)
        assert np.allclose(
            likelihood_ratio(zs, PARAMS),
            np.exp(log_likelihood_ratio(zs, PARAMS)),
            rtol=1e-12,
        )


class TestTailMass:
    def test_unit_at_zero_and_decreasing(self):
        assert tail_mass(0.0, PARAMS) == pytest.approx(1.0, abs=1e-14)
        xs = np.linspace(0.0, 8.0, 200)
        masses = tail_mass(xs, PARAMS)
        assert np.all(np.diff(masses) < 0.0)
        assert masses[-1] >= 0.0

    def test_against_quadrature(self):
        for x in (0.05, 0.2, 0.5, 1.0, 2.0):
            assert tail_mass(x, PARAMS) == pytest.approx(
                oracles.tail_mass_quad(x, PARAMS), abs=1e-10
            )

    def test_negative_arguments_reflect(self):
        for x in (0.1, 0.7, 2.0):
            assert tail_mass(-x, PARAMS) == pytest.approx(
                2.0 - tail_mass(x, PARAMS), abs=1e-13
            )

    def test_inverse_round_trip(self):
        for y in (1e-6, 0.01, 0.3, 0.75, 0.999, 1.0, 1.2, 1.9):
            x = tail_mass_inv(y, PARAMS)
            assert tail_mass(x, PARAMS) == pytest.approx(y, abs=1e-9)
        assert tail_mass_inv(1.0, PARAMS) == 0.0

    def test_inverse_domain(self):
        for y in (0.0, 2.0, -0.5, 2.5):
            with pytest.raises(ValueError):
                tail_mass_inv(y, PARAMS)


class TestThresholdDesign:
    def test_constraints_active_at_the_optimum(self):
        th = compute_thresholds(CFG, PARAMS)
        assert not th.clamped
        assert prob_false_alarm(th, PARAMS) == pytest.approx(CFG.beta, abs=1e-9)
        assert prob_censor(th, PARAMS) == pytest.approx(CFG.alpha, abs=1e-8)

    def test_full_send_budget_puts_upper_at_zero(self):
        th = compute_thresholds(CensorConfig(alpha=0.3, beta=1.0), PARAMS)
        assert th.upper == 0.0 and th.lower == 0.0

    def test_clamped_when_budget_cannot_be_spent(self):
        # alpha close to one with generous sending leaves budget >= 1
        cfg = CensorConfig(alpha=0.95, beta=0.9)
        th = compute_thresholds(cfg, PARAMS)
        assert th.clamped and th.lower == 0.0
        assert prob_censor(th, PARAMS) < cfg.alpha
        with pytest.warns(RuntimeWarning):
            expected_cost(cfg, PARAMS)

    def test_requires_observation_noise(self):
        params = ModelParams(n=40, k=4, k_c=8, sigma_s=1.0, sigma_v=0.0, m=1)
        with pytest.raises(ValueError):
            compute_thresholds(CFG, params)

    def test_matches_naive_enumeration_exactly(self):
        # identical grids: the vectorized reduction must reproduce the
        # double loop bit for bit
        closed = compute_thresholds(CFG, PARAMS)
        tau_max = 1.6 * closed.upper
        step = tau_max / 250
        fast = brute_force_thresholds(CFG, PARAMS, grid_step=step, tau_max=tau_max)
        slow = oracles.naive_grid_search(CFG, PARAMS, grid_step=step, tau_max=tau_max)
        assert fast == slow

    def test_matches_naive_enumeration_in_clamped_regime(self):
        cfg = CensorConfig(alpha=0.95, beta=0.9)
        closed = compute_thresholds(cfg, PARAMS)
        tau_max = max(1.6 * closed.upper, 0.4)
        step = tau_max / 200
        fast = brute_force_thresholds(cfg, PARAMS, grid_step=step, tau_max=tau_max)
        slow = oracles.naive_grid_search(cfg, PARAMS, grid_step=step, tau_max=tau_max)
        assert fast == slow
        assert fast.clamped

    def test_grid_search_approaches_the_closed_form(self):
        closed = compute_thresholds(CFG, PARAMS)
        step = 3e-5 * closed.upper
        grid = brute_force_thresholds(CFG, PARAMS, grid_step=step)
        assert abs(grid.lower - closed.lower) <= 2 * step
        assert abs(grid.upper - closed.upper) <= 2 * step
        assert abs(prob_miss(grid, PARAMS) - prob_miss(closed, PARAMS)) <= 1e-4

    def test_config_validation(self):
        for alpha, beta in ((0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.5)):
            with pytest.raises(ValueError):
                CensorConfig(alpha=alpha, beta=beta)
        with pytest.raises(ValueError):
            CensorConfig(alpha=0.5, beta=0.5, cost_hard=-1.0)


class TestCensorRule:
    TH = Thresholds(lower=0.5, upper=2.0)

    def test_three_regions(self):
        assert censor(3.0, self.TH) == Decision.send_value(3.0)
        assert censor(-2.5, self.TH) == Decision.send_value(-2.5)
        assert censor(0.2, self.TH) == Decision.hard_zero()
        assert censor(-0.1, self.TH) == Decision.hard_zero()
        assert censor(1.0, self.TH) == Decision.silent()

    def test_boundaries_stay_silent(self):
        for z in (0.5, -0.5, 2.0, -2.0):
            assert censor(z, self.TH).kind is DecisionKind.SILENT

    def test_decision_payload_contract(self):
        with pytest.raises(ValueError):
            Decision(DecisionKind.SEND_VALUE)
        with pytest.raises(ValueError):
            Decision(DecisionKind.HARD_ZERO, value=1.0)
        with pytest.raises(ValueError):
            Decision(DecisionKind.SEND_VALUE, value=math.inf)

    def test_threshold_ordering_contract(self):
        with pytest.raises(ValueError):
            Thresholds(lower=2.0, upper=1.0)
        with pytest.raises(ValueError):
            Thresholds(lower=-0.1, upper=1.0)


class TestProbabilitiesAgainstSimulation:
    def test_miss_false_alarm_and_silence(self):
        th = compute_thresholds(CFG, PARAMS)
        counts = oracles.mc_simulate(PARAMS, th, 200_000, np.random.default_rng(42))
        for est, exact in (
            (counts.p_miss, prob_miss(th, PARAMS)),
            (counts.p_false_alarm, prob_false_alarm(th, PARAMS)),
            (counts.p_silent, prob_censor(th, PARAMS)),
        ):
            sd = math.sqrt(exact * (1.0 - exact) / 200_000) + 1e-12
            assert abs(est - exact) < 5 * sd

    def test_expected_cost_formula_and_simulation(self):
        th = compute_thresholds(CFG, PARAMS)
        send = tail_mass(th.upper, PARAMS)
        exact = CFG.cost_hard * (1 - CFG.alpha) + (CFG.cost_value - CFG.cost_hard) * send
        assert expected_cost(CFG, PARAMS) == pytest.approx(exact, abs=1e-12)
        counts = oracles.mc_simulate(PARAMS, th, 200_000, np.random.default_rng(43))
        assert counts.cost(CFG.cost_hard, CFG.cost_value) == pytest.approx(exact, rel=0.02)


class TestCostShape:
    def test_more_silence_is_cheaper_and_more_sending_dearer(self):
        # grid chosen to stay clear of the clamped regime
        alphas = (0.2, 0.35, 0.5)
        betas = (0.05, 0.1, 0.2)
        costs = {
            (a, b): expected_cost(CensorConfig(alpha=a, beta=b), PARAMS)
            for a in alphas
            for b in betas
        }
        for b in betas:
            col = [costs[(a, b)] for a in alphas]
            assert all(x > y for x, y in zip(col, col[1:]))
        for a in alphas:
            row = [costs[(a, b)] for b in betas]
            assert all(x < y for x, y in zip(row, row[1:]))


configs = st.builds(
    CensorConfig,
    alpha=st.floats(0.02, 0.98),
    beta=st.floats(0.02, 0.98),
)
param_sets = st.builds(
    ModelParams,
    n=st.integers(4, 60),
    k=st.integers(1, 4),
    k_c=st.integers(1, 4),
    sigma_s=st.floats(0.2, 3.0),
    sigma_v=st.floats(0.01, 1.0),
    m=st.just(1),
)


@given(cfg=configs, params=param_sets)
@settings(max_examples=80, deadline=None)
def test_design_always_meets_both_ceilings(cfg, params):
    th = compute_thresholds(cfg, params)
    assert 0.0 <= th.lower <= th.upper
    assert prob_false_alarm(th, params) <= cfg.beta + 1e-9
    assert prob_censor(th, params) <= cfg.alpha + 1e-8
    if not th.clamped:
        assert prob_censor(th, params) == pytest.approx(cfg.alpha, abs=1e-8)
    else:
        assert th.lower == 0.0
        assert prob_miss(th, params) == 0.0


@given(params=param_sets, x=st.floats(0.0, 6.0))
@settings(max_examples=80, deadline=None)
def test_tail_mass_is_a_valid_two_sided_tail(params, x):
    mass = float(tail_mass(x, params))
    assert 0.0 <= mass <= 1.0
    assert float(tail_mass(-x, params)) == pytest.approx(2.0 - mass, abs=1e-12)


@given(
    z=st.floats(-100.0, 100.0, allow_nan=False),
    lower=st.floats(0.0, 5.0),
    width=st.floats(0.0, 5.0),
)
@settings(max_examples=120, deadline=None)
def test_censor_partitions_the_real_line(z, lower, width):
    th = Thresholds(lower=lower, upper=lower + width)
    decision = censor(z, th)
    if abs(z) > th.upper:
        assert decision.kind is DecisionKind.SEND_VALUE and decision.value == z
    elif abs(z) < th.lower:
        assert decision.kind is DecisionKind.HARD_ZERO
    else:
        assert decision.kind is DecisionKind.SILENT


def test_cost_warning_not_raised_when_unclamped():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        expected_cost(CFG, PARAMS)
