"""
Single-token timing channel with a launch deadline: launches confined to [0, tau],
exponential transit with rate mu.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr, xlogy

from src.dist import (Atom, FirstPassageModel, MixedDensity1D, Piece, convolve,
                      integrate_panels, output_cdf)
from src.errors import ConvergenceError, DegenerateInputError

logger = logging.getLogger(__name__)

E = math.e
SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class DeadlineChannel:
    mu: float
    tau: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise DegenerateInputError(f"mu must be positive and finite, got {self.mu}")
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise DegenerateInputError(f"tau must be nonnegative and finite, got {self.tau}")

    @property
    def mu_tau(self) -> float:
        return self.mu * self.tau

    @property
    def passage(self) -> FirstPassageModel:
        return FirstPassageModel.exponential(self.mu)


@dataclass(frozen=True)
class EntropyDecomposition:
    sigma: float
    h_region1: float
    h_region2: float
    h_binary: float
    total: float


@dataclass(frozen=True)
class VariationalResidual:
    region1_quadratic_coeff: float
    region2_quadratic_coeff: float
    fit_residual: float


@dataclass(frozen=True)
class CapacityGrid:
    """Resolution of the discretized channel handed to Blahut-Arimoto."""
    n_input: int = 400
    n_output: int = 4000
    tol: float = 1e-9
    max_iter: int = 50_000

    def __post_init__(self):
        if self.n_input < 200 or self.n_output < 2000:
            raise ValueError("grid needs at least 200 input points and 2000 output points")


@dataclass(frozen=True)
class VariationalGrid:
    points: int = 512
    tail_span: float = 20.0


@dataclass
class CapacitySolution:
    capacity: float
    upper_bound: float
    points: np.ndarray
    weights: np.ndarray
    iterations: int
    history: list = field(default_factory=list)


# --------------------------------------------------------------------
# Closed forms
# --------------------------------------------------------------------
def optimal_sigma(ch: DeadlineChannel) -> float:
    return ch.mu_tau / (E + ch.mu_tau)


def capacity(ch: DeadlineChannel) -> float:
    """Capacity in nats per channel use."""
    return math.log1p(ch.mu_tau / E)


def optimal_input(ch: DeadlineChannel) -> MixedDensity1D:
    if ch.tau == 0:
        raise DegenerateInputError("a zero deadline leaves a single launch time")
    norm = E + ch.mu_tau
    return MixedDensity1D(
        atoms=(Atom(0.0, 1.0 / norm), Atom(ch.tau, (E - 1.0) / norm)),
        pieces=(Piece.constant(0.0, ch.tau, ch.mu / norm),),
    )


def optimal_output(ch: DeadlineChannel) -> MixedDensity1D:
    """Flat on [0, tau), exponential tail after tau. A zero deadline gives the plain exponential."""
    norm = E + ch.mu_tau
    tail = Piece.exponential(ch.tau, E * ch.mu / norm, ch.mu)
    if ch.tau == 0:
        return MixedDensity1D(pieces=(tail,))
    return MixedDensity1D(pieces=(Piece.constant(0.0, ch.tau, ch.mu / norm), tail))


def max_output_entropy(ch: DeadlineChannel) -> float:
    return math.log((E + ch.mu_tau) / ch.mu)


def entropy_at_sigma(ch: DeadlineChannel, sigma: float) -> float:
    """
    h(S) when region I is flat and carries mass sigma while region II keeps
    the exponential shape. Maximized at optimal_sigma.
    """
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
    if sigma > 0 and ch.tau == 0:
        raise DegenerateInputError("region I is empty when tau is 0")
    region1 = sigma * math.log(ch.tau) if sigma > 0 else 0.0
    return region1 + (1.0 - sigma) * (1.0 - math.log(ch.mu)) + float(entr(sigma) + entr(1.0 - sigma))


# --------------------------------------------------------------------
# Entropy split at the deadline
# --------------------------------------------------------------------
def entropy_decomposition(input: MixedDensity1D, ch: DeadlineChannel) -> EntropyDecomposition:
    lo, hi = input.support
    if lo < -SUPPORT_TOL or hi > ch.tau + SUPPORT_TOL:
        raise ValueError(f"input support [{lo}, {hi}] is not inside [0, {ch.tau}]")

    passage = ch.passage
    cuts = input.breakpoints() + [ch.tau]

    def neg_f_log_f(s):
        f = convolve(input, passage, s)
        return -float(xlogy(f, f))

    sigma = min(max(output_cdf(input, passage, ch.tau), 0.0), 1.0)
    part1 = integrate_panels(neg_f_log_f, 0.0, ch.tau, cuts)
    part2 = integrate_panels(neg_f_log_f, ch.tau, math.inf, cuts)

    h1 = (part1 + float(xlogy(sigma, sigma))) / sigma if sigma > 0 else 0.0
    h2 = (part2 + float(xlogy(1 - sigma, 1 - sigma))) / (1 - sigma) if sigma < 1 else 0.0
    hb = float(entr(sigma) + entr(1.0 - sigma))
    total = sigma * h1 + (1 - sigma) * h2 + hb
    return EntropyDecomposition(sigma, h1, h2, hb, total)


# --------------------------------------------------------------------
# Blahut-Arimoto on the discretized channel
# --------------------------------------------------------------------
def blahut_arimoto(channel: np.ndarray, tol: float = 1e-9, max_iter: int = 50_000) -> tuple:
    """
    Alternating maximization over input weights for a row-stochastic matrix.
    Stops once the dual gap max_i D(W_i || q) - I(p; W) drops below tol; the
    gap bounds every later increment, so successive changes are below tol too.
    Returns (capacity_nats, upper_bound, weights, iterations, history).
    """
    n_in = channel.shape[0]
    row_term = xlogy(channel, channel).sum(axis=1)
    weights = np.full(n_in, 1.0 / n_in)
    history = []
    previous = -math.inf

    for iteration in range(1, max_iter + 1):
        out = weights @ channel
        safe_log = np.log(np.where(out > 0, out, 1.0))
        divergence = row_term - channel @ safe_log
        current = float(weights @ divergence)
        upper = float(divergence.max())
        history.append(current)

        if current < previous - tol:
            logger.warning("Blahut-Arimoto objective decreased at iteration %d", iteration)
        if upper - current < tol:
            logger.debug("Blahut-Arimoto converged after %d iterations (gap %.3g)", iteration, upper - current)
            return current, upper, weights, iteration, history
        previous = current

        weights = weights * np.exp(divergence - upper)
        weights /= weights.sum()

    raise ConvergenceError(f"Blahut-Arimoto did not converge in {max_iter} iterations",
                           last_capacity=previous, weights=weights, iterations=max_iter)


def deadline_channel_matrix(ch: DeadlineChannel, grid: CapacityGrid) -> tuple:
    """
    Launch points 0..tau (endpoints included) and bin probabilities of S.
    Output bins subdivide each launch cell; everything after tau is one bin.
    """
    points = np.linspace(0.0, ch.tau, grid.n_input)
    step = points[1] - points[0]
    split = math.ceil(grid.n_output / (grid.n_input - 1))
    edges = (points[:-1, None] + np.arange(split)[None, :] * (step / split)).ravel()
    edges = np.append(edges, ch.tau)

    left = edges[:-1][None, :] - points[:, None]
    width = np.diff(edges)[None, :]
    mass = np.exp(-ch.mu * np.maximum(left, 0.0)) * -np.expm1(-ch.mu * width)
    fine = np.where(left >= 0.0, mass, 0.0)
    tail = np.exp(-ch.mu * (ch.tau - points))[:, None]
    return points, np.hstack([fine, tail])


def numeric_capacity_solution(ch: DeadlineChannel, grid: CapacityGrid = CapacityGrid()) -> CapacitySolution:
    if ch.tau == 0:
        return CapacitySolution(0.0, 0.0, np.zeros(1), np.ones(1), 0, [0.0])
    points, channel = deadline_channel_matrix(ch, grid)
    logger.info("Blahut-Arimoto on %d x %d channel (mu=%g, tau=%g)", *channel.shape, ch.mu, ch.tau)
    cap, upper, weights, iterations, history = blahut_arimoto(channel, grid.tol, grid.max_iter)
    return CapacitySolution(cap, upper, points, weights, iterations, history)


def numeric_capacity(ch: DeadlineChannel, grid: CapacityGrid = CapacityGrid()) -> float:
    return numeric_capacity_solution(ch, grid).capacity


def discretize_input(ch: DeadlineChannel, points: np.ndarray) -> np.ndarray:
    """Optimal input mapped onto a uniform launch grid (trapezoid weights for the flat part)."""
    density = optimal_input(ch)
    step = points[1] - points[0]
    weights = np.full(len(points), density.pieces[0].level * step)
    weights[0] = weights[-1] = density.pieces[0].level * step / 2
    weights[0] += density.atoms[0].mass
    weights[-1] += density.atoms[1].mass
    return weights


# --------------------------------------------------------------------
# Quadratic term of the variational functional
# --------------------------------------------------------------------
def _variational_functional(ch: DeadlineChannel, f_t: MixedDensity1D,
                            f_s: MixedDensity1D, s: float) -> float:
    log_fs = lambda x: math.log(f_s.value(x))
    atoms = [a.mass * log_fs(s + a.location) for a in f_t.atoms]
    cont = [integrate_panels(lambda t, p=p: p.value(t) * log_fs(s + t), p.start, p.end, [ch.tau - s])
            for p in f_t.pieces]
    return math.fsum(atoms + cont)


def variational_check(ch: DeadlineChannel, s_grid: VariationalGrid = VariationalGrid()) -> VariationalResidual:
    """
    Evaluates J(s) = E_T[log f_S(s + T)] for the capacity-achieving pair and fits
    a quadratic on each side of the deadline.
    """
    if ch.tau <= 0:
        raise DegenerateInputError("variational check needs a positive deadline")
    f_t, f_s = optimal_input(ch), optimal_output(ch)

    region1 = np.linspace(0.0, ch.tau, s_grid.points, endpoint=False)
    region2 = np.linspace(ch.tau, ch.tau + s_grid.tail_span / ch.mu, s_grid.points)

    coeffs, residuals = [], []
    for grid in (region1, region2):
        values = np.array([_variational_functional(ch, f_t, f_s, s) for s in grid])
        fit = np.polyfit(grid, values, 2)
        coeffs.append(float(fit[0]))
        residuals.append(float(np.max(np.abs(values - np.polyval(fit, grid)))))
    return VariationalResidual(coeffs[0], coeffs[1], max(residuals))
