"""
Reproduction checks behind the `verify` command.

Each suite takes its block of the YAML preset plus the run seed and worker
count, and returns check rows (suite, check, measured, expected, tolerance,
status). INFO rows are reported but never fail a run.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from src import bounds, deadline, iidorder, ordent
from src.dist import FirstPassageModel
from src.mc import (SimConfig, draw_pair_sums, estimate_gamma, estimate_gamma_variance,
                    estimate_h_up, estimate_ordering_entropy)

logger = logging.getLogger(__name__)

COLUMNS = ["suite", "check", "measured", "expected", "tolerance", "status"]
DEFAULT_K_SIGMA = 3.0


def _row(suite: str, check: str, measured: float, expected: float, tolerance: float,
         passed) -> dict:
    if passed is None:
        status = "INFO"
    else:
        status = "PASS" if passed and math.isfinite(measured) else "FAIL"
    return {"suite": suite, "check": check, "measured": float(measured),
            "expected": float(expected), "tolerance": float(tolerance), "status": status}


def _close(suite: str, check: str, measured: float, expected: float, tolerance: float) -> dict:
    return _row(suite, check, measured, expected, tolerance, abs(measured - expected) <= tolerance)


def _k(params: dict) -> float:
    return float(params.get("k_sigma", DEFAULT_K_SIGMA))


# --------------------------------------------------------------------
# Single-token deadline channel
# --------------------------------------------------------------------
def suite_deadline_capacity(params: dict, seed: int, workers: int) -> list:
    grid = deadline.CapacityGrid(n_input=params.get("n_input", 400),
                                 n_output=params.get("n_output", 4000))
    tol = params.get("tolerance", 1e-3)
    rows = []
    for mu_tau in params.get("mu_tau", [0.5, 1.0, math.e, 5.0]):
        ch = deadline.DeadlineChannel(1.0, float(mu_tau))
        rows.append(_close("theorem1", f"numeric capacity at mu*tau={mu_tau:g}",
                           deadline.numeric_capacity(ch, grid), deadline.capacity(ch), tol))
    return rows


def suite_exponential_output(params: dict, seed: int, workers: int) -> list:
    s_grid = deadline.VariationalGrid(points=params.get("points", 512))
    rows = []
    for mu, tau in params.get("cases", [[1.0, 1.0], [2.0, 0.5]]):
        ch = deadline.DeadlineChannel(float(mu), float(tau))
        fit = deadline.variational_check(ch, s_grid)
        label = f"mu={mu:g}, tau={tau:g}"
        rows.append(_close("theorem2", f"region-I quadratic coefficient ({label})",
                           fit.region1_quadratic_coeff, -mu ** 2 / (2.0 * (math.e + mu * tau)),
                           params.get("region1_tol", 1e-6)))
        rows.append(_close("theorem2", f"region-II quadratic coefficient ({label})",
                           fit.region2_quadratic_coeff, 0.0, params.get("region2_tol", 1e-8)))
        rows.append(_row("theorem2", f"quadratic fit residual ({label})", fit.fit_residual, 0.0,
                         params.get("residual_tol", 1e-8),
                         fit.fit_residual < params.get("residual_tol", 1e-8)))
    return rows


# --------------------------------------------------------------------
# Ordering entropy: oracles and closed forms
# --------------------------------------------------------------------
def suite_theta(params: dict, seed: int, workers: int) -> list:
    rng = np.random.default_rng(seed)
    instances = params.get("instances", 100)
    max_M = params.get("max_M", 10)
    tol = params.get("tolerance", 1e-12)
    passages = [FirstPassageModel.exponential(1.0), FirstPassageModel.uniform(1.0)]

    worst = 0.0
    for i in range(instances):
        M = int(rng.integers(2, max_M + 1))
        t = ordent.LaunchVector.from_unsorted(rng.uniform(0.0, params.get("span", 3.0), M))
        passage = passages[i % len(passages)]
        for m in range(1, M):
            pmf = ordent.theta_pmf(t, m, passage)
            brute = np.array([ordent.brute_force_theta(t, m, ell, passage) for ell in range(m + 1)])
            worst = max(worst, float(np.max(np.abs(pmf - brute))))
    return [_row("theta", f"max |theta_pmf - brute force| over {instances} instances",
                 worst, 0.0, tol, worst <= tol)]


def suite_iid_pipeline(params: dict, seed: int, workers: int) -> list:
    mu, tau = float(params.get("mu", 1.0)), float(params.get("tau", 2.0))
    tol = params.get("tolerance", 1e-8)
    passage = FirstPassageModel.exponential(mu)
    Ms = range(1, params.get("max_M", 12) + 1)

    cases = [
        ("mean constraint", iidorder.mean_constraint_input(mu, tau),
         lambda M: iidorder.ordering_entropy_mean_constraint(mu, tau, M)),
        ("deadline", iidorder.deadline_input(mu, tau),
         lambda M: iidorder.ordering_entropy_deadline(mu, tau, M)),
    ]
    rows = []
    for label, input, closed in cases:
        gap = max(abs(iidorder.h_up_iid(input, passage, M) - closed(M)) for M in Ms)
        rows.append(_row("theorem3", f"max |pipeline - closed form|, {label}, M<={max(Ms)}",
                         gap, 0.0, tol, gap <= tol))
    dual = max(abs(iidorder.ordering_entropy_deadline_sum(mu, tau, M)
                   - iidorder.ordering_entropy_deadline(mu, tau, M)) for M in Ms)
    rows.append(_row("theorem3", "max |binomial sum - closed form|, deadline", dual, 0.0,
                     params.get("dual_tolerance", 1e-12), dual <= params.get("dual_tolerance", 1e-12)))
    return rows


def _equality_suite(name: str, params: dict, seed: int, workers: int, make_input, closed) -> list:
    mu, tau = float(params.get("mu", 1.0)), float(params.get("tau", 1.0))
    passage = FirstPassageModel.exponential(mu)
    input = make_input(mu, tau)
    rows = []
    for M in params.get("M", [2, 3, 4, 5, 6]):
        cfg = SimConfig(M, passage, input, params.get("replications", 20_000), seed, workers)
        est = estimate_ordering_entropy(cfg)
        rows.append(_close(name, f"MC ordering entropy vs closed form, M={M}",
                           est.mean, closed(mu, tau, M), _k(params) * est.std_error))
    return rows


def suite_mean_constraint(params: dict, seed: int, workers: int) -> list:
    return _equality_suite("theorem4", params, seed, workers, iidorder.mean_constraint_input,
                           iidorder.ordering_entropy_mean_constraint)


def suite_deadline_ordering(params: dict, seed: int, workers: int) -> list:
    return _equality_suite("theorem5", params, seed, workers, iidorder.deadline_input,
                           iidorder.ordering_entropy_deadline)


def suite_strict(params: dict, seed: int, workers: int) -> list:
    mu, tau = float(params.get("mu", 1.0)), float(params.get("tau", 2.0))
    passage = FirstPassageModel.uniform(mu)
    input = iidorder.uniform_input(tau)
    rows = []
    for M in params.get("M", [3, 4, 5]):
        cfg = SimConfig(M, passage, input, params.get("replications", 2000), seed, workers)
        entropy, bound = estimate_ordering_entropy(cfg), estimate_h_up(cfg)
        slack = _k(params) * math.hypot(entropy.std_error, bound.std_error)
        rows.append(_row("strict", f"MC ordering entropy <= mean h_up, uniform passage, M={M}",
                         entropy.mean, bound.mean, slack, entropy.mean <= bound.mean + slack))
    return rows


def _limit_suite(name: str, params: dict, finite, limit) -> list:
    M = params.get("M", 2000)
    rel = params.get("rel_tolerance", 0.01)
    rows = []
    for rho in params.get("rho", [0.5, 1.0, 2.0]):
        target = limit(rho)
        rows.append(_close(name, f"H/M at M={M} vs Poisson limit, rho={rho:g}",
                           finite(1.0, M / rho, M) / M, target, rel * abs(target)))
    return rows


def suite_mean_limit(params: dict, seed: int, workers: int) -> list:
    return _limit_suite("theorem6", params, iidorder.ordering_entropy_mean_constraint,
                        iidorder.asymptotic_mean)


def suite_deadline_limit(params: dict, seed: int, workers: int) -> list:
    return _limit_suite("theorem7", params, iidorder.ordering_entropy_deadline,
                        iidorder.asymptotic_deadline)


# --------------------------------------------------------------------
# Capacity-bound chain
# --------------------------------------------------------------------
def suite_pair_bound(params: dict, seed: int, workers: int) -> list:
    tau = float(params.get("tau", 3.0))
    passage = FirstPassageModel.exponential(1.0)
    input = iidorder.uniform_input(tau)
    gamma_T = bounds.Z(tau)
    rows = [_close("theorem8", f"gamma_T by quadrature vs Z({tau:g})",
                   bounds.gamma_T_iid(input, 1.0), gamma_T, 1e-8)]

    optimal = iidorder.deadline_input(1.0, tau)
    launch_laws = {"uniform": (input, gamma_T), "deadline-optimal": (optimal, bounds.gamma_T_iid(optimal, 1.0))}
    for label, (law, law_gamma) in launch_laws.items():
        for M in params.get("M", [3, 4, 5, 6, 7, 8]):
            est = estimate_h_up(SimConfig(M, passage, law, params.get("replications", 2000), seed, workers))
            slack = _k(params) * est.std_error
            bound = bounds.h_up_gamma_bound(M, law_gamma)
            rows.append(_row("theorem8", f"gamma bound dominates mean h_up, {label} launches, M={M}",
                             est.mean, bound, slack, est.mean - slack <= bound))

    M_big = params.get("limit_M", 10_000)
    rel = params.get("rel_tolerance", 0.01)
    for rho in params.get("rho", [0.1, 1.0, 10.0]):
        x = M_big / rho
        rows.append(_close("theorem8", f"M*Z vs 2 rho at M={M_big}, rho={rho:g}",
                           M_big * bounds.Z(x), 2.0 * rho, rel * 2.0 * rho))
        target = 8.0 * rho ** 2 + 2.0 * rho
        rows.append(_close("theorem8", f"(M-1) gamma_S'(0) vs 8 rho^2 + 2 rho at M={M_big}, rho={rho:g}",
                           (M_big - 1) * bounds.gamma_S0_prime(1.0, x, M_big), target, rel * target))
    rows.append(_row("theorem8", "cq_upper(1) == ln 5", bounds.cq_upper(1.0), math.log(5.0), 0.0,
                     bounds.cq_upper(1.0) == math.log(5.0)))
    return rows


def suite_pair_sums(params: dict, seed: int, workers: int) -> list:
    tau, M = float(params.get("tau", 1.0)), params.get("M", 4)
    cfg = SimConfig(M, FirstPassageModel.exponential(1.0), iidorder.uniform_input(tau),
                    params.get("replications", 20_000), seed, workers)
    k = _k(params)
    gamma_T, gamma_S = estimate_gamma(cfg, "T"), estimate_gamma(cfg, "S")
    exact = bounds.Z(tau)
    return [
        _close("theorem9", f"MC gamma_T vs Z({tau:g})", gamma_T.mean, exact, k * gamma_T.std_error),
        _row("theorem9", f"MC gamma_S >= gamma_T / 2, M={M}", gamma_S.mean, bounds.gamma_S_lower(exact),
             k * gamma_S.std_error, gamma_S.mean + k * gamma_S.std_error >= bounds.gamma_S_lower(exact)),
    ]


def suite_per_token_capacity(params: dict, seed: int, workers: int) -> list:
    rng = np.random.default_rng(seed)
    draws = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), params.get("identity_draws", 100)))
    radical = max(abs(bounds.beta_tilde_radical(r) / bounds.beta_tilde(r) - 1.0) for r in draws)
    tilted = max(abs(bounds.tilted_gamma_bound(r) / (4.0 * r) - 1.0) for r in draws)
    rows = [
        _row("theorem10", "beta intercept: radical vs simplified, max rel error", radical, 0.0, 1e-12,
             radical <= 1e-12),
        _row("theorem10", "tilted gamma bound vs 4 rho, max rel error", tilted, 0.0, 1e-12, tilted <= 1e-12),
        _row("theorem10", "cq_upper(1) == ln 5", bounds.cq_upper(1.0), math.log(5.0), 0.0,
             bounds.cq_upper(1.0) == math.log(5.0)),
    ]

    M = params.get("M", 2000)
    rel = params.get("rel_tolerance", 0.01)
    for rho in params.get("rho", [0.1, 1.0, 10.0]):
        cq = bounds.cq_upper(rho)
        rows.append(_row("theorem10", f"cq_upper >= single-token rate at M={M}, rho={rho:g}",
                         bounds.single_token_rate(M, rho), cq, 0.0, bounds.single_token_rate(M, rho) <= cq))
        rows.append(_close("theorem10", f"finite-M per-token bound vs cq_upper, M={M}, rho={rho:g}",
                           bounds.per_token_upper(bounds.LoadPoint.from_rho(rho, M=M)), cq, rel * cq))

    solver = params.get("tilt_solver")
    if solver:
        M_small, rho = solver.get("M", 3), solver.get("rho", 1.0)
        cfg = SimConfig(M_small, FirstPassageModel.exponential(1.0), iidorder.uniform_input(M_small / rho),
                        solver.get("replications", 20_000), seed, workers)
        sums = draw_pair_sums(cfg, "T")
        point = bounds.solve_beta_star(sums, M_small)
        rows.append(_row("theorem10", f"tilt solver beta* (M={M_small}, rho={rho:g})",
                         point.beta, bounds.beta_tilde(rho), 0.0, None))
        rows.append(_row("theorem10", "tilted slope at beta* vs at zero tilt",
                         bounds.tilted_variance(sums, point.beta), bounds.tilted_variance(sums, 0.0), 0.0, None))
    return rows


def suite_gammaprime(params: dict, seed: int, workers: int) -> list:
    mu, tau, M = float(params.get("mu", 1.0)), float(params.get("tau", 2.0)), params.get("M", 5)
    cfg = SimConfig(M, FirstPassageModel.exponential(mu), iidorder.uniform_input(tau),
                    params.get("replications", 100_000), seed, workers)
    est = estimate_gamma_variance(cfg, "T")
    pairs = M * (M - 1)
    slack = _k(params) * est.std_error
    direct = pairs * bounds.gamma_S0_prime_direct(mu, tau, M)
    published = pairs * bounds.gamma_S0_prime(mu, tau, M)
    return [
        _close("gammaprime", f"pair-sum variance vs direct closed form, M={M}", est.mean, direct, slack),
        _row("gammaprime", f"pair-sum variance vs published closed form, M={M}", est.mean, published,
             slack, None),
        _close("gammaprime", "published and direct forms agree at M=2",
               bounds.gamma_S0_prime(mu, tau, 2), bounds.gamma_S0_prime_direct(mu, tau, 2), 1e-12),
    ]


SUITES = {
    "theorem1": suite_deadline_capacity,
    "theorem2": suite_exponential_output,
    "theta": suite_theta,
    "theorem3": suite_iid_pipeline,
    "theorem4": suite_mean_constraint,
    "theorem5": suite_deadline_ordering,
    "strict": suite_strict,
    "theorem6": suite_mean_limit,
    "theorem7": suite_deadline_limit,
    "theorem8": suite_pair_bound,
    "theorem9": suite_pair_sums,
    "theorem10": suite_per_token_capacity,
    "gammaprime": suite_gammaprime,
}
SUITE_NAMES = tuple(SUITES) + ("all",)


def run_suite(name: str, config: dict, seed: int, workers: int = 1) -> pd.DataFrame:
    """Runs one suite, or every suite in table order for 'all'."""
    if name not in SUITE_NAMES:
        raise ValueError(f"unknown suite '{name}', expected one of {SUITE_NAMES}")
    names = list(SUITES) if name == "all" else [name]
    k_sigma = config.get("k_sigma", DEFAULT_K_SIGMA)

    rows = []
    for suite in names:
        params = {"k_sigma": k_sigma, **(config.get("suites", {}).get(suite) or {})}
        logger.info("running suite %s", suite)
        rows.extend(SUITES[suite](params, seed, workers))
    return pd.DataFrame(rows, columns=COLUMNS)


def all_passed(report: pd.DataFrame) -> bool:
    return not (report["status"] == "FAIL").any()
