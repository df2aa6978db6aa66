"""
Ordering-entropy upper bound for i.i.d. launch times.

phi(t) is the probability that a token has launched by t and is still in transit
at t. Every quantity below is an expectation of a polynomial in phi(T) over the
launch law, so atoms of the launch law are handled by averaging across the jump
of phi.
"""
from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass
from math import comb
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.special import gammaln

from src.deadline import DeadlineChannel, optimal_input
from src.dist import (Atom, FirstPassageModel, JumpIntegrand, MixedDensity1D, Piece,
                      mixed_expectation, power_integrand, transit_mass)
from src.errors import CancellationWarning, DegenerateInputError

logger = logging.getLogger(__name__)

E = math.e
CDF_CHECK_POINTS = 100
CDF_CHECK_TOL = 1e-10
CANCELLATION_RATIO = 1e6
SERIES_TAIL_MASS = 1e-16


@dataclass(frozen=True)
class IIDInput:
    """
    Marginal launch law of i.i.d. tokens. closed_form names a launch law with
    known phi moments ("mean" or "deadline") for passage rate mu and bound tau.
    """
    marginal: MixedDensity1D
    cdf: Optional[Callable] = None
    closed_form: Optional[str] = None
    mu: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if self.cdf is None:
            object.__setattr__(self, "cdf", self.marginal.cdf)
            return
        lo, hi = self.marginal.support
        if not math.isfinite(hi):
            hi = lo + 10.0 * (self.marginal.mean() - lo + 1.0)
        grid = np.linspace(lo, hi, CDF_CHECK_POINTS)
        given = np.array([float(self.cdf(x)) for x in grid])
        if np.max(np.abs(given - self.marginal.cdf(grid))) > CDF_CHECK_TOL:
            raise ValueError("cdf is inconsistent with the marginal density")


@dataclass(frozen=True)
class BinomialSpec:
    trials: int
    success: float

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError(f"trials must be nonnegative, got {self.trials}")
        if not 0.0 <= self.success <= 1.0:
            raise ValueError(f"success probability must lie in [0, 1], got {self.success}")

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.trials + 1)

    def pmf(self) -> np.ndarray:
        return stats.binom.pmf(self.support, self.trials, self.success)

    def expect_log_factorial(self) -> float:
        return float(self.pmf() @ gammaln(self.support + 1.0))

    def expect_k_log_factorial(self) -> float:
        return float(self.pmf() @ (self.support * gammaln(self.support + 1.0)))


@dataclass(frozen=True)
class MeanConstraintInput:
    """Launch law that maximizes output entropy under a mean-launch constraint."""
    mu: float
    tau: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")

    @property
    def a(self) -> float:
        return 1.0 / (self.mu * self.tau + 1.0)

    @property
    def marginal(self) -> MixedDensity1D:
        a = self.a
        if a == 1.0:
            return MixedDensity1D.point_mass(0.0)
        return MixedDensity1D(
            atoms=(Atom(0.0, a),),
            pieces=(Piece.exponential(0.0, self.mu * a * (1.0 - a), self.mu * a),),
        )

    def as_iid(self) -> IIDInput:
        return IIDInput(self.marginal, closed_form="mean", mu=self.mu, tau=self.tau)


def mean_constraint_input(mu: float, tau: float) -> IIDInput:
    return MeanConstraintInput(mu, tau).as_iid()


def deadline_input(mu: float, tau: float) -> IIDInput:
    return IIDInput(optimal_input(DeadlineChannel(mu, tau)), closed_form="deadline", mu=mu, tau=tau)


def uniform_input(tau: float) -> IIDInput:
    return IIDInput(MixedDensity1D.uniform(0.0, tau))


# --------------------------------------------------------------------
# phi and its moments
# --------------------------------------------------------------------
def phi(input: IIDInput, passage: FirstPassageModel, t: float) -> float:
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return transit_mass(input.marginal, passage, t)


def phi_limits(input: IIDInput, passage: FirstPassageModel) -> Callable:
    def limits(x: float) -> tuple:
        return (transit_mass(input.marginal, passage, x, include_atom_at_t=False),
                transit_mass(input.marginal, passage, x))
    return limits


def _closed_form_applies(input: IIDInput, passage: FirstPassageModel) -> bool:
    return (input.closed_form is not None and passage.is_exponential
            and input.mu is not None and math.isclose(passage.mu, input.mu))


def phi_power_mean_constraint(mu: float, tau: float, k: int) -> float:
    a = 1.0 / (mu * tau + 1.0)
    return a ** k / (k + 1)


def phi_power_deadline(mu: float, tau: float, k: int) -> float:
    p2 = 1.0 / (E + mu * tau)
    return p2 ** (k + 1) * (mu * tau + E ** (k + 1) / (k + 1))


@functools.lru_cache(maxsize=4096)
def expected_phi_power(input: IIDInput, passage: FirstPassageModel, k: int,
                       analytic: bool = False) -> float:
    """E[phi(T)^k], in closed form when analytic and the launch law has one."""
    if k == 0:
        return 1.0
    if analytic and _closed_form_applies(input, passage):
        if input.closed_form == "mean":
            return phi_power_mean_constraint(input.mu, input.tau, k)
        return phi_power_deadline(input.mu, input.tau, k)
    integrand = power_integrand(lambda t: phi(input, passage, t), phi_limits(input, passage), k)
    return mixed_expectation(input.marginal, integrand)


# --------------------------------------------------------------------
# Gamma, its differences, and the entropy bound
# --------------------------------------------------------------------
def gamma_Ml(input: IIDInput, passage: FirstPassageModel, M: int, ell: int) -> float:
    """
    Expected number of positions with at least ell tokens in transit, weighted per
    token. ell == M is accepted and gives 0.
    """
    if not 1 <= ell <= M:
        raise ValueError(f"ell must lie in 1..{M}, got {ell}")
    if ell == M:
        return 0.0
    rest = M - 1 - ell
    integrand = JumpIntegrand(psi=lambda t: phi(input, passage, t),
                              outer=lambda u: u ** ell * (1.0 - u) ** rest,
                              limits=phi_limits(input, passage))
    return M * comb(M - 1, ell) * mixed_expectation(input.marginal, integrand)


def delta_gamma(input: IIDInput, passage: FirstPassageModel, M: int, ell: int,
                analytic: bool = False) -> float:
    if not 1 <= ell <= M - 1:
        raise ValueError(f"ell must lie in 1..{M - 1}, got {ell}")
    lead = comb(M, ell + 1)
    terms = [lead * (-1) ** r * comb(M - ell - 1, r) * (ell + r + 1)
             * expected_phi_power(input, passage, r + ell, analytic)
             for r in range(M - ell)]
    value = math.fsum(terms)
    largest = max(abs(x) for x in terms)
    if largest > CANCELLATION_RATIO * abs(value):
        logger.warning("alternating sum for M=%d, ell=%d lost precision; using the difference form", M, ell)
        warnings.warn(f"cancellation in delta_gamma(M={M}, ell={ell})", CancellationWarning, stacklevel=2)
        value = gamma_Ml(input, passage, M, ell) - gamma_Ml(input, passage, M, ell + 1)
    return value


def h_up_iid(input: IIDInput, passage: FirstPassageModel, M: int, analytic: bool = False) -> float:
    """Ordering-entropy upper bound in nats for M i.i.d. tokens."""
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    terms = [delta_gamma(input, passage, M, ell, analytic) * float(gammaln(ell + 2))
             for ell in range(1, M)]
    return math.fsum(terms)


def theta_bar_iid(input: IIDInput, passage: FirstPassageModel, M: int, m: int, ell: int) -> float:
    """
    Expected Theta[m, l] over i.i.d. launches: the (m+1)-th launch has m earlier
    tokens, l of them in transit, and M - m - 1 later ones.
    """
    if not 1 <= m <= M - 1:
        raise ValueError(f"m must lie in 1..{M - 1}, got {m}")
    if ell < 0 or ell > m:
        return 0.0
    after, arrived = M - m - 1, m - ell
    F = input.marginal

    def psi(t):
        return np.array([F.cdf(t), phi(input, passage, t)])

    def limits(x):
        left_phi, right_phi = phi_limits(input, passage)(x)
        return np.array([F.cdf_left(x), left_phi]), np.array([F.cdf(x), right_phi])

    def outer(u):
        cdf_value, transit = u[0], u[1]
        return (1.0 - cdf_value) ** after * transit ** ell * max(cdf_value - transit, 0.0) ** arrived

    integrand = JumpIntegrand(psi=psi, outer=outer, limits=limits)
    return M * comb(M - 1, m) * comb(m, ell) * mixed_expectation(F, integrand)


# --------------------------------------------------------------------
# Special cases with exponential passage
# --------------------------------------------------------------------
def ordering_entropy_mean_constraint(mu: float, tau: float, M: int) -> float:
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    spec = BinomialSpec(M, 1.0 / (1.0 + mu * tau))
    return (mu * tau + 1.0) * spec.expect_log_factorial()


def ordering_entropy_deadline(mu: float, tau: float, M: int) -> float:
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    if not tau > 0:
        raise DegenerateInputError("deadline ordering entropy needs a positive deadline")
    mt = mu * tau
    p1, p2 = E / (E + mt), 1.0 / (E + mt)
    k1, k2 = BinomialSpec(M, p1), BinomialSpec(M, p2)
    return (k1.expect_log_factorial()
            + mt / (1.0 - p2) * k2.expect_k_log_factorial()
            - mt * M / ((1.0 - p2) * (mt + E)) * k2.expect_log_factorial())


def deadline_delta_gamma(mu: float, tau: float, M: int, ell: int) -> float:
    """Binomial form of the Gamma difference for the deadline-optimal launch law."""
    if not 1 <= ell <= M - 1:
        raise ValueError(f"ell must lie in 1..{M - 1}, got {ell}")
    mt = mu * tau
    p1, p2 = E / (E + mt), 1.0 / (E + mt)
    k = ell + 1
    return float(stats.binom.pmf(k, M, p1)
                 + mt / (1.0 - p2) * (k - M / (mt + E)) * stats.binom.pmf(k, M, p2))


def ordering_entropy_deadline_sum(mu: float, tau: float, M: int) -> float:
    return math.fsum(deadline_delta_gamma(mu, tau, M, ell) * float(gammaln(ell + 2))
                     for ell in range(1, M))


# --------------------------------------------------------------------
# Large-M limits at fixed load rho
# --------------------------------------------------------------------
def _poisson_series(rho: float, weight: Callable[[np.ndarray], np.ndarray]) -> float:
    """E[weight(K)] for K ~ Poisson(rho), summed over the window holding all but 2e-16 of the mass."""
    if not (rho > 0 and math.isfinite(rho)):
        raise ValueError(f"rho must be positive and finite, got {rho}")
    lo = int(stats.poisson.ppf(SERIES_TAIL_MASS, rho))
    hi = int(stats.poisson.isf(SERIES_TAIL_MASS, rho)) + 1
    k = np.arange(max(lo, 0), hi + 1)
    terms = np.exp(stats.poisson.logpmf(k, rho)) * weight(k)
    logger.debug("Poisson series for rho=%g over k=%d..%d", rho, k[0], k[-1])
    return math.fsum(terms)


def asymptotic_mean(rho: float) -> float:
    """Per-token ordering entropy limit under the mean constraint: E[log K!]/rho."""
    return _poisson_series(rho, lambda k: gammaln(k + 1) / rho)


def asymptotic_deadline(rho: float) -> float:
    """Per-token limit under the deadline: E[(K/rho - 1) log K!]."""
    return _poisson_series(rho, lambda k: (k / rho - 1.0) * gammaln(k + 1))


LIMIT_VARIANTS = ("mean", "deadline_k2", "deadline_k1")


def binomial_limit_pmf(M: int, rho: float, k, variant: str = "mean"):
    """
    Binomial laws that feed the large-M limits, with tau = M/lambda:
    mean -> Bin(M, 1/(1+M/rho)), deadline_k2 -> Bin(M, 1/(e+M/rho)),
    deadline_k1 -> Bin(M, e/(e+M/rho)).
    """
    x = M / rho
    p = {"mean": 1.0 / (1.0 + x), "deadline_k2": 1.0 / (E + x), "deadline_k1": E / (E + x)}[variant]
    return stats.binom.pmf(k, M, p)


def poisson_limit_rate(rho: float, variant: str = "mean") -> float:
    return rho * E if variant == "deadline_k1" else rho
