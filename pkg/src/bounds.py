"""
Capacity-bound chain for many identical tokens: pair-kernel functionals of the
launch and arrival laws, the concavity bound on ordering entropy, and the
per-token capacity bound at load rho = lambda/mu.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from src.dist import FirstPassageModel, integrate_panels
from src.iidorder import IIDInput

logger = logging.getLogger(__name__)

Z_SERIES_CUTOFF = 1e-4
KERNEL_SERIES_CUTOFF = 0.5
KERNEL_SERIES_TERMS = 24
BETA_SOLVER_MAX_M = 4

# Taylor coefficients in x of 24 (x - 2 + e^-x (2 + x)) / x^3 and of three_point_kernel
CUBIC_TAIL_COEFFS = np.array([24.0 * (-1) ** j * (j + 1) / math.factorial(j + 3)
                              for j in range(KERNEL_SERIES_TERMS)])
THREE_POINT_COEFFS = np.array([(-1) ** (m + 1) * (6.0 - 2 * m - 2.0 ** (m + 1)) / math.factorial(m + 1)
                               for m in range(2, KERNEL_SERIES_TERMS + 2)])


@dataclass(frozen=True)
class LoadPoint:
    lam: float
    mu: float
    tau: Optional[float] = None
    M: Optional[int] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.tau is not None and self.M is not None:
            if not math.isclose(self.M, self.lam * self.tau, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"M={self.M} does not equal lambda*tau={self.lam * self.tau}")

    @classmethod
    def from_rho(cls, rho: float, mu: float = 1.0, M: Optional[int] = None) -> "LoadPoint":
        lam = rho * mu
        tau = M / lam if (M is not None and lam > 0) else None
        return cls(lam, mu, tau, M)

    @property
    def rho(self) -> float:
        return self.lam / self.mu


@dataclass(frozen=True)
class GammaPair:
    gamma_T: float
    gamma_S: float

    def __post_init__(self):
        for name, value in (("gamma_T", self.gamma_T), ("gamma_S", self.gamma_S)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def relation_holds(self) -> bool:
        return self.gamma_S >= gamma_S_lower(self.gamma_T)


@dataclass(frozen=True)
class BetaPoint:
    beta: float
    gamma_value: float


# --------------------------------------------------------------------
# Pair-kernel functionals
# --------------------------------------------------------------------
def gamma_T_iid(input: IIDInput, mu: float, passage: Optional[FirstPassageModel] = None) -> float:
    """E[Q(T1 - T2)] for independent launches, Q = passage survival of |.|."""
    passage = passage or FirstPassageModel.exponential(mu)
    density = input.marginal
    Q = lambda d: float(passage.ccdf(abs(d)))
    cuts = density.breakpoints()

    def against_continuous(x: float) -> float:
        local = cuts + [x] + [x + e for e in passage.edges] + [x - e for e in passage.edges]
        return math.fsum(integrate_panels(lambda u, p=p: p.value(u) * Q(u - x), p.start, p.end, local)
                         for p in density.pieces)

    atom_atom = math.fsum(a.mass * b.mass * Q(a.location - b.location)
                          for a in density.atoms for b in density.atoms)
    atom_cont = math.fsum(2.0 * a.mass * against_continuous(a.location) for a in density.atoms)
    cont_cont = math.fsum(
        integrate_panels(lambda t, p=p: p.value(t) * against_continuous(t), p.start, p.end, cuts)
        for p in density.pieces)
    return atom_atom + atom_cont + cont_cont


def Z(x: float) -> float:
    """Mean of exp(-|U1 - U2|) for U1, U2 uniform on [0, x]."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x < Z_SERIES_CUTOFF:
        return 1.0 - x / 3.0 + x * x / 12.0
    return 2.0 / (x * x) * (x + math.expm1(-x))


def h_up_gamma_bound(M: int, gamma_T: float) -> float:
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    if not 0.0 <= gamma_T <= 1.0:
        raise ValueError(f"gamma_T must lie in [0, 1], got {gamma_T}")
    return M * math.log1p((M - 1) * gamma_T / 2.0)


def gamma_S_lower(gamma_T: float) -> float:
    """Lower bound on E[Q(S1 - S2)] for exponential transit."""
    return gamma_T / 2.0


def gamma_S0_prime(mu: float, tau: float, M: int) -> float:
    """Closed form for the slope of gamma_S at zero tilt, term for term as published."""
    if M < 2:
        raise ValueError(f"M must be at least 2, got {M}")
    x = mu * tau
    if not x >= 0:
        raise ValueError(f"mu*tau must be nonnegative, got {x}")
    z = Z(x)
    return ((M - 2) * (M - 3) * z * z + 2.0 * Z(2.0 * x)
            + (M - 2) * _cubic_tail(x)
            - M * (M - 1) * z * z)


def _cubic_tail(x: float) -> float:
    """24 (x - 2 + e^-x (2 + x)) / x^3, which tends to 4 as x -> 0."""
    if x < KERNEL_SERIES_CUTOFF:
        return float(np.polynomial.polynomial.polyval(x, CUBIC_TAIL_COEFFS))
    return 24.0 / x ** 3 * (x - 2.0 + math.exp(-x) * (2.0 + x))


def three_point_kernel(x: float) -> float:
    """E[Q(U1 - U2) Q(U1 - U3)] for U i.i.d. uniform on [0, x] with unit rate."""
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x < KERNEL_SERIES_CUTOFF:
        return float(np.polynomial.polynomial.polyval(x, THREE_POINT_COEFFS))
    return (4.0 - math.expm1(-2.0 * x) / x + 8.0 * math.expm1(-x) / x + 2.0 * math.exp(-x)) / (x * x)


def gamma_S0_prime_direct(mu: float, tau: float, M: int) -> float:
    """Var(sum over i != j of Q(S_i - S_j)) / (M(M-1)) for S i.i.d. uniform on [0, tau]."""
    if M < 2:
        raise ValueError(f"M must be at least 2, got {M}")
    x = mu * tau
    z = Z(x)
    return 2.0 * (Z(2.0 * x) - z * z) + 4.0 * (M - 2) * (three_point_kernel(x) - z * z)


# --------------------------------------------------------------------
# Tilt surrogate and per-token capacity
# --------------------------------------------------------------------
def beta_tilde(rho: float) -> float:
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return 1.0 / (4.0 * rho + 1.0)


def beta_tilde_radical(rho: float) -> float:
    """The same intercept before simplifying the square root."""
    return (math.sqrt(1.0 + 12.0 * rho + 36.0 * rho ** 2) - (1.0 + 2.0 * rho)) / (16.0 * rho ** 2 + 4.0 * rho)


def tilted_gamma_bound(rho: float) -> float:
    """Large-M bound on (M-1) gamma at the optimal tilt; simplifies to 4 rho."""
    return (8.0 * rho ** 2 + 2.0 * rho) * beta_tilde(rho) + 2.0 * rho


def cq_upper(rho: float) -> float:
    """Asymptotic per-token capacity bound in nats."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return math.log(1.0 / rho + 4.0)


def ct_upper(point: LoadPoint) -> float:
    """Per-unit-time capacity bound lambda * cq_upper."""
    if point.lam == 0:
        return 0.0
    return point.lam * cq_upper(point.rho)


def per_token_upper(point: LoadPoint) -> float:
    """Finite-M per-token bound before Stirling's approximation; needs tau and M."""
    if point.tau is None or point.M is None:
        raise ValueError("per_token_upper needs both tau and M")
    return (math.log(point.tau) - (1.0 - math.log(point.mu))
            + math.log1p(4.0 * point.rho) - float(gammaln(point.M + 1)) / point.M)


def single_token_rate(M: int, rho: float) -> float:
    """Per-token deadline capacity with tau = M/lambda, less the ordering penalty log M!/M."""
    return math.log1p(M / (rho * math.e)) - float(gammaln(M + 1)) / M


# --------------------------------------------------------------------
# Experimental small-M tilt solver
# --------------------------------------------------------------------
def _tilt_weights(pair_sums: np.ndarray, beta: float) -> np.ndarray:
    w = np.exp(beta * (pair_sums - pair_sums.max()))
    return w / w.sum()


def gamma_S_tilted(pair_sums: np.ndarray, beta: float, M: int) -> float:
    """gamma_S under the law tilted by exp(beta X), from untilted samples of X."""
    return float(_tilt_weights(pair_sums, beta) @ pair_sums) / (M * (M - 1))


def tilted_variance(pair_sums: np.ndarray, beta: float) -> float:
    w = _tilt_weights(pair_sums, beta)
    mean = float(w @ pair_sums)
    return float(w @ (pair_sums - mean) ** 2)


def solve_beta_star(pair_sums: np.ndarray, M: int, xtol: float = 1e-10) -> BetaPoint:
    """
    Root of gamma_S(beta) = (1 - beta)/((M - 1) beta) on [1/M, 1]. Experimental:
    gamma_S(beta) comes from reweighted Monte-Carlo samples, so only M <= 4.
    """
    if not 2 <= M <= BETA_SOLVER_MAX_M:
        raise ValueError(f"the tilt solver supports 2 <= M <= {BETA_SOLVER_MAX_M}, got {M}")
    pair_sums = np.asarray(pair_sums, dtype=float)
    gap = lambda b: gamma_S_tilted(pair_sums, b, M) - (1.0 - b) / ((M - 1) * b)

    lo, hi = 1.0 / M, 1.0
    if gap(lo) >= 0:
        beta = lo
    elif gap(hi) <= 0:
        beta = hi
    else:
        beta = brentq(gap, lo, hi, xtol=xtol)
    logger.info("tilt solver: beta*=%.6g for M=%d from %d samples", beta, M, pair_sums.size)
    return BetaPoint(beta, gamma_S_tilted(pair_sums, beta, M))
