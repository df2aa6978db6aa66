import math

import numpy as np
import pytest
from scipy import stats

from src.dist import FirstPassageModel, MixedDensity1D
from src.errors import DegenerateInputError
from src.iidorder import (BinomialSpec, IIDInput, MeanConstraintInput, asymptotic_deadline,
                          asymptotic_mean, binomial_limit_pmf, deadline_delta_gamma, deadline_input,
                          delta_gamma, expected_phi_power, gamma_Ml, h_up_iid, mean_constraint_input,
                          ordering_entropy_deadline, ordering_entropy_deadline_sum,
                          ordering_entropy_mean_constraint, phi, poisson_limit_rate, theta_bar_iid,
                          uniform_input)

MU, TAU = 1.0, 2.0


@pytest.fixture(scope="module")
def passage():
    return FirstPassageModel.exponential(MU)


# --------------------------------------------------------------------
# Inputs
# --------------------------------------------------------------------
def test_mean_constraint_input_has_requested_mean():
    law = MeanConstraintInput(MU, TAU)
    assert law.a == pytest.approx(1.0 / 3.0)
    assert law.marginal.mean() == pytest.approx(TAU)


def test_iid_input_checks_cdf_consistency():
    f = MixedDensity1D.uniform(0.0, 1.0)
    IIDInput(f, cdf=lambda x: min(max(x, 0.0), 1.0))
    with pytest.raises(ValueError):
        IIDInput(f, cdf=lambda x: min(max(x * x, 0.0), 1.0))


def test_binomial_spec_expectations():
    spec = BinomialSpec(2, 0.5)
    assert spec.expect_log_factorial() == pytest.approx(0.25 * math.log(2.0))
    assert spec.expect_k_log_factorial() == pytest.approx(0.5 * math.log(2.0))


# --------------------------------------------------------------------
# phi and its moments
# --------------------------------------------------------------------
def test_phi_is_a_probability(passage):
    input = deadline_input(MU, TAU)
    for t in (0.0, 0.5, TAU, 5.0):
        assert 0.0 <= phi(input, passage, t) <= 1.0
    with pytest.raises(ValueError):
        phi(input, passage, -1.0)


@pytest.mark.parametrize("make_input", [mean_constraint_input, deadline_input])
@pytest.mark.parametrize("k", [1, 2, 3, 6])
def test_phi_moments_quadrature_vs_closed_form(make_input, k, passage):
    input = make_input(MU, TAU)
    numeric = expected_phi_power(input, passage, k)
    assert numeric == pytest.approx(expected_phi_power(input, passage, k, analytic=True), abs=1e-10)


def test_zeroth_moment_is_one(passage):
    assert expected_phi_power(uniform_input(1.0), passage, 0) == 1.0


# --------------------------------------------------------------------
# Gamma pipeline
# --------------------------------------------------------------------
def test_gamma_at_full_occupancy_is_zero(passage):
    assert gamma_Ml(uniform_input(1.0), passage, 4, 4) == 0.0


def test_delta_gamma_is_a_difference_of_gammas(passage):
    input = uniform_input(1.5)
    for ell in (1, 2, 3):
        expected = gamma_Ml(input, passage, 4, ell) - gamma_Ml(input, passage, 4, ell + 1)
        assert delta_gamma(input, passage, 4, ell) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("M", [1, 2, 3, 5, 8])
def test_pipeline_matches_closed_forms(M, passage):
    assert h_up_iid(mean_constraint_input(MU, TAU), passage, M) == pytest.approx(
        ordering_entropy_mean_constraint(MU, TAU, M), abs=1e-8)
    assert h_up_iid(deadline_input(MU, TAU), passage, M) == pytest.approx(
        ordering_entropy_deadline(MU, TAU, M), abs=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("M", range(9, 13))
def test_pipeline_matches_closed_forms_large_M(M, passage):
    assert h_up_iid(mean_constraint_input(MU, TAU), passage, M) == pytest.approx(
        ordering_entropy_mean_constraint(MU, TAU, M), abs=1e-8)
    assert h_up_iid(deadline_input(MU, TAU), passage, M) == pytest.approx(
        ordering_entropy_deadline(MU, TAU, M), abs=1e-8)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_theta_bar_sums_to_one(m, passage):
    input = deadline_input(MU, TAU)
    total = sum(theta_bar_iid(input, passage, 4, m, ell) for ell in range(m + 1))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_theta_bar_index_range(passage):
    with pytest.raises(ValueError):
        theta_bar_iid(uniform_input(1.0), passage, 3, 3, 0)
    assert theta_bar_iid(uniform_input(1.0), passage, 3, 1, 2) == 0.0


# --------------------------------------------------------------------
# Special cases
# --------------------------------------------------------------------
def test_mean_constraint_two_tokens():
    assert ordering_entropy_mean_constraint(1.0, 1.0, 2) == pytest.approx(0.5 * math.log(2.0))


def test_single_token_cases_are_zero():
    assert ordering_entropy_mean_constraint(1.0, 1.0, 1) == 0.0
    assert ordering_entropy_deadline(1.0, 1.0, 1) == pytest.approx(0.0, abs=1e-15)


def test_deadline_needs_positive_tau():
    with pytest.raises(DegenerateInputError):
        ordering_entropy_deadline(1.0, 0.0, 3)


@pytest.mark.parametrize("mu,tau", [(1.0, 1.0), (0.5, 4.0), (2.0, 3.0)])
def test_deadline_dual_routes_agree(mu, tau):
    for M in range(2, 11):
        assert ordering_entropy_deadline_sum(mu, tau, M) == pytest.approx(
            ordering_entropy_deadline(mu, tau, M), abs=1e-12)


def test_deadline_delta_gamma_matches_pipeline(passage):
    input = deadline_input(MU, TAU)
    for ell in (1, 2, 3):
        assert deadline_delta_gamma(MU, TAU, 4, ell) == pytest.approx(
            delta_gamma(input, passage, 4, ell), abs=1e-9)


def test_ordering_entropy_is_below_log_factorial():
    for M in range(2, 9):
        assert ordering_entropy_deadline(1.0, 1.0, M) <= math.lgamma(M + 1)
        assert ordering_entropy_mean_constraint(1.0, 1.0, M) <= math.lgamma(M + 1)


# --------------------------------------------------------------------
# Large-M limits
# --------------------------------------------------------------------
@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_finite_M_approaches_poisson_limits(rho):
    M = 2000
    mean_limit, deadline_limit = asymptotic_mean(rho), asymptotic_deadline(rho)
    assert ordering_entropy_mean_constraint(1.0, M / rho, M) / M == pytest.approx(mean_limit, rel=0.01)
    assert ordering_entropy_deadline(1.0, M / rho, M) / M == pytest.approx(deadline_limit, rel=0.01)


def test_limits_grow_with_load():
    assert asymptotic_mean(4.0) > asymptotic_mean(1.0) > 0.0
    assert asymptotic_deadline(4.0) > asymptotic_deadline(1.0) > 0.0


@pytest.mark.parametrize("variant", ["mean", "deadline_k2", "deadline_k1"])
def test_binomial_limits_are_poisson(variant):
    k = np.arange(8)
    rate = poisson_limit_rate(1.0, variant)
    np.testing.assert_allclose(binomial_limit_pmf(100_000, 1.0, k, variant),
                               stats.poisson.pmf(k, rate), atol=1e-4)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_theta_bar_summed_over_position_is_gamma(ell, passage):
    input = deadline_input(MU, TAU)
    total = sum(theta_bar_iid(input, passage, 5, m, ell) for m in range(ell, 5))
    assert total == pytest.approx(gamma_Ml(input, passage, 5, ell), abs=1e-9)


# --------------------------------------------------------------------
# Limits at heavy load
# --------------------------------------------------------------------
def test_mean_limit_matches_stirling_at_moderate_load():
    assert asymptotic_mean(1e3) == pytest.approx(5.912628011777958, rel=1e-12)


@pytest.mark.parametrize("rho", [2e5, 1e7])
def test_mean_limit_at_heavy_load(rho):
    expected = math.log(rho) - 1.0 + (0.5 * math.log(2.0 * math.pi * rho) + 0.5) / rho
    assert asymptotic_mean(rho) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("rho", [0.5, 3.0, 2e5])
def test_deadline_limit_is_mean_log_of_shifted_count(rho):
    # E[(K/rho - 1) log K!] = E[log(K + 1)] for K ~ Poisson(rho)
    lo, hi = stats.poisson.ppf(1e-16, rho), stats.poisson.isf(1e-16, rho) + 1
    k = np.arange(int(lo), int(hi) + 1)
    expected = math.fsum(stats.poisson.pmf(k, rho) * np.log1p(k))
    assert asymptotic_deadline(rho) == pytest.approx(expected, rel=1e-10)


def test_limits_reject_bad_load():
    for rho in (0.0, -1.0, math.inf):
        with pytest.raises(ValueError):
            asymptotic_mean(rho)
