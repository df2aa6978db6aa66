"""
Seeded Monte-Carlo engine for the token channel S = T + D.

Replications are cut into fixed-size blocks; block b always draws from the
Philox stream keyed by (seed, b), so estimates do not depend on how many
workers run the blocks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from joblib import Parallel, delayed

from src.dist import FirstPassageModel, sample
from src.errors import InfeasibleRealizationError
from src.iidorder import IIDInput
from src.ordent import (ArrivalRealization, LaunchVector, feasible_counts, h_up_exact,
                        posterior_ordering_entropy, theta_pmf)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024
MIN_REPLICATIONS = 100


@dataclass(frozen=True)
class SimConfig:
    M: int
    passage: FirstPassageModel
    input: Union[IIDInput, LaunchVector]
    replications: int = 10_000
    seed: int = 7
    workers: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be at least 1, got {self.M}")
        if self.replications < MIN_REPLICATIONS:
            raise ValueError(f"need at least {MIN_REPLICATIONS} replications, got {self.replications}")
        if self.workers < 1 or self.block_size < 1:
            raise ValueError("workers and block_size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if isinstance(self.input, LaunchVector) and self.input.M != self.M:
            raise ValueError(f"launch vector has {self.input.M} tokens, config says {self.M}")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    replications: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error cannot be negative")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        spread = float(np.std(values, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(values)), spread / math.sqrt(n), n)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error + 1e-12


def replication_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


# --------------------------------------------------------------------
# Drawing
# --------------------------------------------------------------------
def _draw_launches(cfg: SimConfig, stream: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(cfg.input, LaunchVector):
        return np.tile(cfg.input.times, (n, 1))
    return np.sort(cfg.input.marginal.sample(stream, (n, cfg.M)), axis=1)


def _draw_delays(cfg: SimConfig, stream: np.random.Generator, n: int) -> np.ndarray:
    return np.asarray(cfg.passage.law.rvs(size=(n, cfg.M), random_state=stream), dtype=float)


def simulate_epoch(cfg: SimConfig, stream: np.random.Generator) -> ArrivalRealization:
    launches = _draw_launches(cfg, stream, 1)[0]
    raw = launches + sample(cfg.passage, stream, cfg.M)
    order = np.argsort(raw, kind="stable")
    return ArrivalRealization(LaunchVector(launches), raw, raw[order], order)


# --------------------------------------------------------------------
# Per-block kernels
# --------------------------------------------------------------------
def _entropy_block(cfg: SimConfig, stream: np.random.Generator, n: int) -> np.ndarray:
    t = _draw_launches(cfg, stream, n)
    raw = t + _draw_delays(cfg, stream, n)
    if cfg.M == 1:
        return np.zeros(n)
    if cfg.passage.is_exponential:
        counts = feasible_counts(np.sort(raw, axis=1), t)
        if np.any(counts == 0):
            raise InfeasibleRealizationError("simulated arrivals admit no feasible ordering")
        return np.log(counts).sum(axis=1)
    values = np.empty(n)
    for i in range(n):
        order = np.argsort(raw[i], kind="stable")
        real = ArrivalRealization(LaunchVector(t[i]), raw[i], raw[i][order], order)
        values[i] = posterior_ordering_entropy(real, cfg.passage)
    return values


def _h_up_block(cfg: SimConfig, stream: np.random.Generator, n: int) -> np.ndarray:
    t = _draw_launches(cfg, stream, n)
    return np.array([h_up_exact(LaunchVector(row), cfg.passage) for row in t])


def _theta_block(cfg: SimConfig, stream: np.random.Generator, n: int, m: int, ell: int) -> np.ndarray:
    t = _draw_launches(cfg, stream, n)
    if ell > m or ell < 0:
        return np.zeros(n)
    return np.array([theta_pmf(LaunchVector(row), m, cfg.passage)[ell] for row in t])


def _pair_sum_block(cfg: SimConfig, stream: np.random.Generator, n: int, target: str) -> np.ndarray:
    x = _draw_launches(cfg, stream, n)
    if target == "S":
        x = x + _draw_delays(cfg, stream, n)
    kernel = cfg.passage.ccdf(np.abs(x[:, :, None] - x[:, None, :]))
    return kernel.sum(axis=(1, 2)) - np.trace(kernel, axis1=1, axis2=2)


def _run_block(cfg: SimConfig, block: int, n: int, kernel: Callable, args: tuple) -> np.ndarray:
    return kernel(cfg, replication_stream(cfg.seed, block), n, *args)


def _collect(cfg: SimConfig, kernel: Callable, *args) -> np.ndarray:
    """Runs kernel over every replication block and concatenates in block order."""
    sizes = [cfg.block_size] * (cfg.replications // cfg.block_size)
    if cfg.replications % cfg.block_size:
        sizes.append(cfg.replications % cfg.block_size)
    logger.info("%s: %d replications in %d blocks on %d workers",
                kernel.__name__, cfg.replications, len(sizes), cfg.workers)
    parts = Parallel(n_jobs=cfg.workers)(
        delayed(_run_block)(cfg, block, n, kernel, args) for block, n in enumerate(sizes))
    return np.concatenate(parts)


# --------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------
def estimate_ordering_entropy(cfg: SimConfig) -> Estimate:
    return Estimate.from_values(_collect(cfg, _entropy_block))


def estimate_h_up(cfg: SimConfig) -> Estimate:
    """Average of the ordering-entropy upper bound over sampled launch vectors."""
    return Estimate.from_values(_collect(cfg, _h_up_block))


def estimate_theta_bar(cfg: SimConfig, m: int, ell: int) -> Estimate:
    if not 1 <= m <= cfg.M - 1:
        raise ValueError(f"m must lie in 1..{cfg.M - 1}, got {m}")
    return Estimate.from_values(_collect(cfg, _theta_block, m, ell))


def draw_pair_sums(cfg: SimConfig, target: str = "T") -> np.ndarray:
    """Samples of sum over i != j of Q(X_i - X_j), X the launches ("T") or arrivals ("S")."""
    if target not in ("T", "S"):
        raise ValueError(f"target must be 'T' or 'S', got {target!r}")
    if cfg.M < 2:
        raise ValueError("pair statistics need M >= 2")
    return _collect(cfg, _pair_sum_block, target)


def estimate_gamma(cfg: SimConfig, target: str = "T") -> Estimate:
    pairs = cfg.M * (cfg.M - 1)
    return Estimate.from_values(draw_pair_sums(cfg, target) / pairs)


def estimate_gamma_variance(cfg: SimConfig, target: str = "T") -> Estimate:
    """
    Variance of the pair sum across replications. With target "T" the launch
    draws play the role of the untilted arrival law, so a uniform launch law on
    [0, tau] gives the zero-tilt slope times M(M-1).
    """
    values = draw_pair_sums(cfg, target)
    n = values.size
    squared = (values - np.mean(values)) ** 2
    variance = float(np.sum(squared)) / (n - 1)
    spread = float(np.std(squared, ddof=1)) / math.sqrt(n) * n / (n - 1)
    return Estimate(variance, spread, n)
