import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import entr, xlogy

from src.deadline import (CapacityGrid, DeadlineChannel, VariationalGrid, blahut_arimoto, capacity,
                          deadline_channel_matrix, discretize_input, entropy_at_sigma,
                          entropy_decomposition, max_output_entropy, numeric_capacity,
                          numeric_capacity_solution, optimal_input, optimal_output, optimal_sigma,
                          variational_check)
from src.dist import Atom, MixedDensity1D, Piece
from src.errors import ConvergenceError, DegenerateInputError

E = math.e


def test_capacity_closed_form(unit_channel):
    assert capacity(unit_channel) == pytest.approx(math.log(1.0 + 1.0 / E))
    assert optimal_sigma(unit_channel) == pytest.approx(1.0 / (E + 1.0))


def test_capacity_is_output_entropy_less_passage_entropy():
    for mu, tau in [(1.0, 1.0), (2.0, 0.5), (0.3, 7.0)]:
        ch = DeadlineChannel(mu, tau)
        passage_entropy = 1.0 - math.log(mu)
        assert capacity(ch) == pytest.approx(max_output_entropy(ch) - passage_entropy)


def test_zero_deadline():
    ch = DeadlineChannel(1.0, 0.0)
    assert capacity(ch) == 0.0
    assert numeric_capacity(ch) == 0.0
    assert optimal_output(ch).cdf(1.0) == pytest.approx(1.0 - math.exp(-1.0))
    with pytest.raises(DegenerateInputError):
        optimal_input(ch)


def test_invalid_channel_parameters():
    with pytest.raises(DegenerateInputError):
        DeadlineChannel(0.0, 1.0)
    with pytest.raises(DegenerateInputError):
        DeadlineChannel(1.0, -1.0)


def test_entropy_at_sigma_peaks_at_optimal_sigma():
    ch = DeadlineChannel(1.5, 2.0)
    best = optimal_sigma(ch)
    assert entropy_at_sigma(ch, best) == pytest.approx(max_output_entropy(ch))
    for sigma in (0.1, 0.5, 0.9):
        assert entropy_at_sigma(ch, sigma) < entropy_at_sigma(ch, best)


def test_entropy_decomposition_of_optimal_input(unit_channel):
    split = entropy_decomposition(optimal_input(unit_channel), unit_channel)
    assert split.sigma == pytest.approx(optimal_sigma(unit_channel), abs=1e-10)
    assert split.h_region1 == pytest.approx(math.log(unit_channel.tau), abs=1e-8)
    assert split.h_binary == pytest.approx(float(entr(split.sigma) + entr(1 - split.sigma)))
    assert split.total == pytest.approx(max_output_entropy(unit_channel), abs=1e-8)


def random_input(rng, tau):
    """Atoms at both ends plus three flat pieces with random levels."""
    inner = np.sort(rng.uniform(0.0, tau, 2))
    edges = [0.0, inner[0], inner[1], tau]
    w = rng.dirichlet(np.ones(5))
    pieces = tuple(Piece.constant(a, b, m / (b - a)) for a, b, m in zip(edges[:-1], edges[1:], w[2:]))
    return MixedDensity1D(atoms=(Atom(0.0, w[0]), Atom(tau, w[1])), pieces=pieces)


def test_output_entropy_never_exceeds_its_maximum():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ch = DeadlineChannel(rng.uniform(0.5, 2.0), rng.uniform(0.5, 3.0))
        split = entropy_decomposition(random_input(rng, ch.tau), ch)
        assert split.total <= max_output_entropy(ch) + 1e-8


@pytest.mark.parametrize("mu,tau", [(1.0, 1.0), (2.0, 0.5)])
def test_uniform_input_decomposition_matches_quadrature(mu, tau):
    ch = DeadlineChannel(mu, tau)

    def f(s):
        if s < tau:
            return -math.expm1(-mu * s) / tau
        return (math.exp(-mu * (s - tau)) - math.exp(-mu * s)) / tau

    neg = lambda s: -float(xlogy(f(s), f(s)))
    head, _ = integrate.quad(neg, 0.0, tau, epsabs=1e-13)
    tail, _ = integrate.quad(neg, tau, math.inf, epsabs=1e-13)
    split = entropy_decomposition(MixedDensity1D.uniform(0.0, tau), ch)
    assert split.total == pytest.approx(head + tail, abs=1e-8)
    assert split.sigma == pytest.approx(integrate.quad(f, 0.0, tau)[0], abs=1e-10)


def test_entropy_decomposition_rejects_late_launches(unit_channel):
    with pytest.raises(ValueError):
        entropy_decomposition(optimal_input(DeadlineChannel(1.0, 2.0)), unit_channel)


# --------------------------------------------------------------------
# Blahut-Arimoto
# --------------------------------------------------------------------
def test_blahut_arimoto_binary_symmetric():
    p = 0.1
    channel = np.array([[1 - p, p], [p, 1 - p]])
    cap, upper, weights, _, _ = blahut_arimoto(channel)
    expected = math.log(2.0) - float(entr(p) + entr(1 - p))
    assert cap == pytest.approx(expected, abs=1e-9)
    assert upper >= cap
    np.testing.assert_allclose(weights, [0.5, 0.5])


def test_blahut_arimoto_z_channel():
    # Z channel with crossover 1/2: capacity log(5/4)
    channel = np.array([[1.0, 0.0], [0.5, 0.5]])
    cap, upper, _, _, history = blahut_arimoto(channel, tol=1e-12)
    assert upper - cap < 1e-12
    assert cap == pytest.approx(math.log(1.25), abs=1e-10)
    assert all(b >= a - 1e-15 for a, b in zip(history[:-1], history[1:]))


def test_blahut_arimoto_iteration_cap():
    channel = np.array([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(ConvergenceError) as info:
        blahut_arimoto(channel, tol=1e-15, max_iter=1)
    assert info.value.iterations == 1
    assert info.value.weights is not None


def test_grid_minimums():
    with pytest.raises(ValueError):
        CapacityGrid(n_input=100)
    with pytest.raises(ValueError):
        CapacityGrid(n_output=500)


def test_channel_matrix_rows_are_distributions(unit_channel):
    points, channel = deadline_channel_matrix(unit_channel, CapacityGrid())
    assert points[0] == 0.0 and points[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(channel.sum(axis=1), 1.0, atol=1e-12)


def test_discretized_optimal_input_is_a_distribution(unit_channel):
    weights = discretize_input(unit_channel, np.linspace(0.0, 1.0, 401))
    assert weights.sum() == pytest.approx(1.0)
    assert weights[0] > weights[1]


@pytest.mark.slow
@pytest.mark.parametrize("mu_tau", [0.5, 1.0, E, 5.0])
def test_numeric_capacity_matches_closed_form(mu_tau):
    ch = DeadlineChannel(1.0, mu_tau)
    solution = numeric_capacity_solution(ch)
    assert solution.capacity == pytest.approx(capacity(ch), abs=1e-3)
    assert solution.upper_bound >= solution.capacity


# --------------------------------------------------------------------
# Quadratic term of the variational functional
# --------------------------------------------------------------------
@pytest.mark.parametrize("mu,tau", [(1.0, 1.0), (2.0, 0.5)])
def test_region_one_is_quadratic(mu, tau):
    fit = variational_check(DeadlineChannel(mu, tau), VariationalGrid(points=64))
    assert fit.region1_quadratic_coeff == pytest.approx(-mu ** 2 / (2.0 * (E + mu * tau)), abs=1e-6)
    assert abs(fit.region2_quadratic_coeff) < 1e-8
    assert fit.fit_residual < 1e-8


@pytest.mark.slow
def test_blahut_arimoto_weights_approach_optimal_input(unit_channel):
    solution = numeric_capacity_solution(unit_channel)
    target = discretize_input(unit_channel, solution.points)
    assert 0.5 * np.abs(solution.weights - target).sum() < 0.05


@pytest.mark.slow
def test_refining_the_grid_halves_the_error(unit_channel):
    exact = capacity(unit_channel)
    coarse = numeric_capacity_solution(unit_channel, CapacityGrid(n_input=200, n_output=2000))
    fine = numeric_capacity_solution(unit_channel, CapacityGrid(n_input=400, n_output=4000))
    assert fine.upper_bound - fine.capacity < CapacityGrid().tol
    assert abs(fine.capacity - exact) <= 0.5 * abs(coarse.capacity - exact)