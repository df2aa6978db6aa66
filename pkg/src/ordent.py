"""
Ordering entropy for a fixed launch vector.

Theta[m, l] is the probability that l of the first m launched tokens are still in
transit when token m+1 launches. It is a Poisson-binomial law in the survival
probabilities of the earlier tokens.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import entr, logsumexp

from src.dist import FirstPassageModel
from src.errors import InfeasibleRealizationError

logger = logging.getLogger(__name__)

MAX_ENUMERATION_M = 9
MAX_BRUTE_FORCE_M = 20


@dataclass(frozen=True)
class LaunchVector:
    times: np.ndarray
    deadline: Optional[float] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        object.__setattr__(self, "times", times)
        if times.size == 0:
            raise ValueError("launch vector is empty")
        if np.any(np.diff(times) < 0):
            raise ValueError("launch times must be sorted; use LaunchVector.from_unsorted")
        if times[0] < 0:
            raise ValueError("launch times must be nonnegative")
        if self.deadline is not None and times[-1] > self.deadline:
            raise ValueError(f"launch at {times[-1]} is after the deadline {self.deadline}")

    @classmethod
    def from_unsorted(cls, times: Sequence[float], deadline: Optional[float] = None) -> "LaunchVector":
        return cls(np.sort(np.asarray(times, dtype=float)), deadline)

    @property
    def M(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class OrderingPMF:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if np.any(probs < -1e-15):
            raise ValueError("ordering PMF has negative entries")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"ordering PMF sums to {probs.sum()!r}")

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)


@dataclass(frozen=True)
class ArrivalRealization:
    launches: LaunchVector
    raw_arrivals: np.ndarray
    sorted_arrivals: np.ndarray
    true_permutation: np.ndarray

    @property
    def M(self) -> int:
        return self.launches.M


# --------------------------------------------------------------------
# Poisson-binomial machinery
# --------------------------------------------------------------------
def _survival(t: LaunchVector, m: int, passage: FirstPassageModel) -> np.ndarray:
    """Survival probabilities of tokens 1..m at the launch of token m+1, smallest gap first."""
    gaps = t.times[m] - t.times[:m]
    return np.clip(passage.ccdf(gaps[::-1]), 0.0, 1.0)


def poisson_binomial_pmf(probabilities: Sequence[float]) -> np.ndarray:
    """Coefficients of prod(1 - p + p x), built one factor at a time."""
    pmf = np.array([1.0])
    for p in probabilities:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def theta_pmf(t: LaunchVector, m: int, passage: FirstPassageModel) -> np.ndarray:
    if not 1 <= m <= t.M - 1:
        raise ValueError(f"m must lie in 1..{t.M - 1}, got {m}")
    return poisson_binomial_pmf(_survival(t, m, passage))


def h_up_exact(t: LaunchVector, passage: FirstPassageModel) -> float:
    """Upper bound on the ordering entropy at t, in nats."""
    terms = []
    for m in range(1, t.M):
        theta = theta_pmf(t, m, passage)
        terms.append(float(np.log1p(np.arange(m + 1)) @ theta))
    return math.fsum(terms)


def ell_pmf(t: LaunchVector, passage: FirstPassageModel) -> OrderingPMF:
    """Confusion-count law averaged over m = 0..M-1; the m = 0 slot is l = 0."""
    if t.M < 2:
        raise ValueError("ell_pmf needs at least two tokens")
    acc = np.zeros(t.M)
    acc[0] = 1.0
    for m in range(1, t.M):
        acc[:m + 1] += theta_pmf(t, m, passage)
    return OrderingPMF(acc / t.M)


def h_up_from_pmf(pmf: OrderingPMF) -> float:
    """M * E[log(1 + l)]; equals h_up_exact for the vector the PMF came from."""
    size = pmf.probs.size
    return size * float(np.log1p(np.arange(size)) @ pmf.probs)


def h_up_jensen(t: LaunchVector, passage: FirstPassageModel) -> float:
    """Concavity bound M log(1 + mean l) on h_up_exact."""
    if t.M < 2:
        return 0.0
    return t.M * math.log1p(ell_pmf(t, passage).mean())


def brute_force_theta(t: LaunchVector, m: int, ell: int, passage: FirstPassageModel) -> float:
    """Theta[m, l] summed term by term over every in-transit subset of size l."""
    if m > MAX_BRUTE_FORCE_M:
        raise ValueError(f"brute force is capped at m = {MAX_BRUTE_FORCE_M}, got {m}")
    if not 1 <= m <= t.M - 1:
        raise ValueError(f"m must lie in 1..{t.M - 1}, got {m}")
    if ell < 0 or ell > m:
        return 0.0
    survive = np.clip(passage.ccdf(t.times[m] - t.times[:m]), 0.0, 1.0)
    arrived = 1.0 - survive
    total = 0.0
    for chosen in itertools.combinations(range(m), ell):
        mask = np.zeros(m, dtype=bool)
        mask[list(chosen)] = True
        total += float(np.prod(survive[mask]) * np.prod(arrived[~mask]))
    return total


# --------------------------------------------------------------------
# Posterior over orderings given sorted arrivals
# --------------------------------------------------------------------
def feasible_counts(s_sorted: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Row-wise feasible_count factors for batches of shape (n, M); returns (n, M)."""
    s_sorted = np.atleast_2d(s_sorted)
    t = np.atleast_2d(t)
    launched = (t[:, None, :] <= s_sorted[:, :, None]).sum(axis=2)
    return np.maximum(launched - np.arange(s_sorted.shape[1])[None, :], 0)


def feasible_count(s_sorted: Sequence[float], t: LaunchVector) -> int:
    """Number of launch-to-arrival matchings with every transit time nonnegative."""
    s_sorted = np.asarray(s_sorted, dtype=float)
    if s_sorted.size != t.M:
        raise ValueError("arrival and launch lists differ in length")
    if np.any(np.diff(s_sorted) < 0):
        raise ValueError("arrivals must be sorted ascending")
    count = 1
    for factor in feasible_counts(s_sorted, t.times)[0]:
        count *= int(factor)
    return count


def posterior_ordering_entropy(real: ArrivalRealization, passage: FirstPassageModel) -> float:
    """Entropy in nats of the posterior over which launch produced each sorted arrival."""
    M = real.M
    if M == 1:
        return 0.0

    if passage.is_exponential:
        count = feasible_count(real.sorted_arrivals, real.launches)
        if count == 0:
            raise InfeasibleRealizationError("no permutation is consistent with the arrivals")
        return math.log(count)

    if M > MAX_ENUMERATION_M:
        raise ValueError(f"posterior enumeration is capped at M = {MAX_ENUMERATION_M}")
    delays = real.sorted_arrivals[:, None] - real.launches.times[None, :]
    with np.errstate(divide="ignore"):
        loglik = np.where(delays >= 0, passage.logpdf(np.maximum(delays, 0.0)), -np.inf)
    perms = np.array(list(itertools.permutations(range(M))))
    scores = loglik[np.arange(M)[None, :], perms].sum(axis=1)
    if not np.any(np.isfinite(scores)):
        raise InfeasibleRealizationError("no permutation is consistent with the arrivals")
    posterior = np.exp(scores - logsumexp(scores))
    return float(entr(posterior).sum())
