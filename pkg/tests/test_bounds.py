import math

import numpy as np
import pytest
from scipy import integrate

from src.bounds import (KERNEL_SERIES_CUTOFF, GammaPair, LoadPoint, Z, beta_tilde, beta_tilde_radical,
                        cq_upper, ct_upper, gamma_S0_prime, gamma_S0_prime_direct, gamma_S_lower, gamma_S_tilted,
                        gamma_T_iid, h_up_gamma_bound, per_token_upper, single_token_rate,
                        solve_beta_star, tilted_gamma_bound, tilted_variance, three_point_kernel)
from src.dist import FirstPassageModel
from src.iidorder import deadline_input, uniform_input
from src.mc import SimConfig, estimate_h_up


# --------------------------------------------------------------------
# Pair kernels
# --------------------------------------------------------------------
def test_Z_values():
    assert Z(0.0) == 1.0
    assert Z(1.0) == pytest.approx(2.0 * math.exp(-1.0))
    assert Z(1e-4 * (1 - 1e-9)) == pytest.approx(Z(1e-4 * (1 + 1e-9)), abs=1e-10)
    with pytest.raises(ValueError):
        Z(-1.0)


@pytest.mark.parametrize("tau", [0.5, 1.0, 3.0])
def test_gamma_T_of_uniform_launches_is_Z(tau):
    assert gamma_T_iid(uniform_input(tau), 1.0) == pytest.approx(Z(tau), abs=1e-9)


def test_gamma_T_with_atoms_is_a_probability():
    value = gamma_T_iid(deadline_input(1.0, 2.0), 1.0)
    assert 0.0 < value < 1.0


@pytest.mark.parametrize("x", [0.5, 2.0, 7.0])
def test_three_point_kernel_by_quadrature(x):
    inner = lambda u: (2.0 - math.exp(-u) - math.exp(-(x - u))) / x
    expected, _ = integrate.quad(lambda u: inner(u) ** 2 / x, 0.0, x, epsabs=1e-13)
    assert three_point_kernel(x) == pytest.approx(expected, abs=1e-10)


# --------------------------------------------------------------------
# Entropy and slope bounds
# --------------------------------------------------------------------
def test_h_up_gamma_bound_edges():
    assert h_up_gamma_bound(1, 0.7) == 0.0
    assert h_up_gamma_bound(4, 1.0) == pytest.approx(4.0 * math.log(2.5))
    with pytest.raises(ValueError):
        h_up_gamma_bound(3, 1.5)


@pytest.mark.parametrize("M", [3, 5, 8])
def test_gamma_bound_dominates_h_up_for_deadline_optimal_launches(M):
    input = deadline_input(1.0, 3.0)
    cfg = SimConfig(M, FirstPassageModel.exponential(1.0), input, replications=2000, seed=5)
    est = estimate_h_up(cfg)
    assert est.mean - 4.0 * est.std_error <= h_up_gamma_bound(M, gamma_T_iid(input, 1.0))


def test_gamma_pair_relation():
    assert GammaPair(0.4, 0.25).relation_holds
    assert not GammaPair(0.4, 0.1).relation_holds
    assert gamma_S_lower(0.4) == 0.2
    with pytest.raises(ValueError):
        GammaPair(1.2, 0.5)


def test_slope_forms_agree_for_two_tokens():
    assert gamma_S0_prime(1.0, 2.0, 2) == pytest.approx(gamma_S0_prime_direct(1.0, 2.0, 2), abs=1e-14)


@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_published_slope_large_M_limit(rho):
    M = 10_000
    assert (M - 1) * gamma_S0_prime(1.0, M / rho, M) == pytest.approx(8 * rho ** 2 + 2 * rho, rel=0.01)
    assert M * Z(M / rho) == pytest.approx(2.0 * rho, rel=0.01)


@pytest.mark.parametrize("M", [2, 3, 7])
def test_slopes_vanish_at_zero_deadline(M):
    assert gamma_S0_prime(1.0, 0.0, M) == 0.0
    assert gamma_S0_prime_direct(1.0, 0.0, M) == 0.0


@pytest.mark.parametrize("x, rel", [(1e-6, 1e-3), (1e-3, 1e-2)])
@pytest.mark.parametrize("M", [3, 6])
def test_published_slope_is_linear_near_zero(x, rel, M):
    assert gamma_S0_prime(1.0, x, M) == pytest.approx((2 * M - 4) * x / 3.0, rel=rel)


def test_kernels_are_continuous_at_series_cutoff():
    below, above = KERNEL_SERIES_CUTOFF * (1 - 1e-12), KERNEL_SERIES_CUTOFF * (1 + 1e-12)
    assert three_point_kernel(below) == pytest.approx(three_point_kernel(above), abs=1e-10)
    assert gamma_S0_prime(1.0, below, 5) == pytest.approx(gamma_S0_prime(1.0, above, 5), abs=1e-10)


def test_slope_rejects_negative_deadline():
    with pytest.raises(ValueError):
        gamma_S0_prime(1.0, -0.1, 3)
    with pytest.raises(ValueError):
        three_point_kernel(-0.1)


def test_direct_slope_is_a_variance():
    for M in (2, 3, 5, 10):
        assert gamma_S0_prime_direct(1.0, 2.0, M) > 0.0


# --------------------------------------------------------------------
# Per-token capacity
# --------------------------------------------------------------------
@pytest.mark.parametrize("rho", [0.01, 0.3, 1.0, 7.0, 100.0])
def test_beta_intercept_forms(rho):
    assert beta_tilde_radical(rho) == pytest.approx(beta_tilde(rho), rel=1e-12)
    assert tilted_gamma_bound(rho) == pytest.approx(4.0 * rho, rel=1e-12)


def test_cq_upper_values():
    assert cq_upper(1.0) == math.log(5.0)
    assert cq_upper(1e9) == pytest.approx(math.log(4.0), abs=1e-8)
    with pytest.raises(ValueError):
        cq_upper(0.0)


def test_ct_upper():
    assert ct_upper(LoadPoint(0.0, 1.0)) == 0.0
    assert ct_upper(LoadPoint(2.0, 1.0)) == pytest.approx(2.0 * math.log(4.5))


def test_load_point_consistency():
    point = LoadPoint.from_rho(2.0, mu=1.0, M=100)
    assert point.tau == pytest.approx(50.0)
    assert point.rho == 2.0
    with pytest.raises(ValueError):
        LoadPoint(1.0, 1.0, tau=10.0, M=5)


@pytest.mark.parametrize("rho", [0.1, 1.0, 10.0])
def test_finite_M_bound_approaches_cq(rho):
    point = LoadPoint.from_rho(rho, M=2000)
    assert per_token_upper(point) == pytest.approx(cq_upper(rho), rel=0.01)
    assert single_token_rate(2000, rho) < cq_upper(rho)


def test_per_token_upper_needs_tau_and_M():
    with pytest.raises(ValueError):
        per_token_upper(LoadPoint(1.0, 1.0))


# --------------------------------------------------------------------
# Tilt solver
# --------------------------------------------------------------------
def test_untilted_gamma_is_sample_mean():
    sums = np.array([0.5, 1.0, 1.5, 2.0])
    assert gamma_S_tilted(sums, 0.0, 3) == pytest.approx(sums.mean() / 6.0)
    assert tilted_variance(sums, 0.0) == pytest.approx(sums.var())


def test_tilt_raises_mean():
    sums = np.random.default_rng(1).uniform(0.0, 6.0, 5000)
    assert gamma_S_tilted(sums, 0.5, 3) > gamma_S_tilted(sums, 0.0, 3)


def test_solver_root_lies_in_bracket():
    sums = np.random.default_rng(2).uniform(0.0, 2.0, 5000)
    point = solve_beta_star(sums, 3)
    assert 1.0 / 3.0 <= point.beta <= 1.0
    if 1.0 / 3.0 < point.beta < 1.0:
        assert point.gamma_value == pytest.approx((1 - point.beta) / (2 * point.beta), abs=1e-8)


def test_solver_is_limited_to_small_M():
    with pytest.raises(ValueError):
        solve_beta_star(np.ones(10), 5)
