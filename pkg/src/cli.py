"""
Command-line front end: capacity and ordering-entropy tables, large-M limits,
and the reproduction checks. Tables go to stdout (and to --out with a
manifest); logs go to stderr.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 solver did
not converge.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import gammaln

from src import __version__, bounds, deadline, iidorder, ordent
from src.dist import FirstPassageModel
from src.errors import ConvergenceError, UsageError
from src.loaders import load_density, load_suite_config
from src.mc import MIN_REPLICATIONS, SimConfig, estimate_ordering_entropy
from src.verify import SUITE_NAMES, all_passed, run_suite
from utils.report import FORMATS, render_table, tidy, to_bits, write_output
from utils.validate import (parse_int_range, parse_range, require_nonnegative, require_positive,
                            resolve_seed)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2
EXIT_NO_CONVERGENCE = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SUITE_DIR = Path(__file__).resolve().parent.parent / "data" / "suites"
DEFAULT_RHO_SWEEP = "0.5:4:0.5"
LN2 = math.log(2.0)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; usage errors here exit with 1."""

    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------
# capacity
# --------------------------------------------------------------------
def _capacity_row(mu: float, mu_tau: float, numeric: bool, grid: deadline.CapacityGrid) -> dict:
    ch = deadline.DeadlineChannel(mu, mu_tau / mu)
    exact = deadline.capacity(ch)
    solved = deadline.numeric_capacity(ch, grid) if numeric else math.nan
    return {
        "mu_tau": float(mu_tau),
        "sigma_star": deadline.optimal_sigma(ch),
        "capacity_nats": exact,
        "capacity_bits": exact / LN2,
        "numeric_capacity": solved,
        "abs_gap": abs(solved - exact),
    }


def cmd_capacity(args) -> pd.DataFrame:
    mu = require_positive("mu", args.mu)
    if args.sweep_mutau:
        grid_values = parse_range(args.sweep_mutau)
        for value in grid_values:
            require_nonnegative("sweep-mutau", value)
    else:
        grid_values = [mu * require_positive("tau", args.tau)]
    grid = deadline.CapacityGrid(n_input=args.grid_input, n_output=args.grid_output)

    rows = Parallel(n_jobs=args.workers)(
        delayed(_capacity_row)(mu, float(x), not args.no_numeric, grid) for x in grid_values)
    df = pd.DataFrame(rows).sort_values("mu_tau", kind="mergesort").reset_index(drop=True)
    if args.bits:
        df = to_bits(df.drop(columns="capacity_bits"), ["capacity_nats", "numeric_capacity", "abs_gap"])
    return tidy(df, "mu_tau") if args.tidy else df


# --------------------------------------------------------------------
# ordent
# --------------------------------------------------------------------
ENTROPY_COLUMNS = ["closed_form_nats", "pipeline_nats", "mc_mean", "mc_stderr", "log_M_factorial"]


def _ordent_setup(args):
    """Launch law, passage model and closed form (or None) for the requested case."""
    mu = require_positive("mu", args.mu)
    passage = FirstPassageModel.uniform(mu) if args.passage == "uniform" else FirstPassageModel.exponential(mu)
    exponential = passage.is_exponential

    if args.case == "custom":
        if not args.density:
            raise UsageError("--case custom needs --density <file>")
        return iidorder.IIDInput(load_density(args.density)), passage, None

    tau = require_positive("tau", args.tau)
    if args.case == "mean":
        closed = lambda M: iidorder.ordering_entropy_mean_constraint(mu, tau, M)
        return iidorder.mean_constraint_input(mu, tau), passage, closed if exponential else None
    closed = lambda M: iidorder.ordering_entropy_deadline(mu, tau, M)
    return iidorder.deadline_input(mu, tau), passage, closed if exponential else None


def cmd_ordering_entropy(args) -> pd.DataFrame:
    input, passage, closed = _ordent_setup(args)
    Ms = parse_int_range(args.M_sweep) if args.M_sweep else [args.M if args.M is not None else 4]
    if min(Ms) < 1:
        raise UsageError(f"M must be at least 1, got {min(Ms)}")

    rows = []
    for M in sorted(Ms):
        row = {
            "M": M,
            "closed_form_nats": closed(M) if closed else math.nan,
            "pipeline_nats": iidorder.h_up_iid(input, passage, M),
            "mc_mean": math.nan,
            "mc_stderr": math.nan,
            "log_M_factorial": float(gammaln(M + 1)),
        }
        if args.mc_reps and not passage.is_exponential and M > ordent.MAX_ENUMERATION_M:
            logger.warning("skipping Monte Carlo at M=%d: posterior enumeration is capped at M=%d",
                           M, ordent.MAX_ENUMERATION_M)
        elif args.mc_reps:
            est = estimate_ordering_entropy(SimConfig(M, passage, input, args.mc_reps, args.seed, args.workers))
            row["mc_mean"], row["mc_stderr"] = est.mean, est.std_error
        rows.append(row)

    df = pd.DataFrame(rows, columns=["M"] + ENTROPY_COLUMNS)
    if args.bits:
        df = to_bits(df, ENTROPY_COLUMNS)
    return tidy(df, "M") if args.tidy else df


# --------------------------------------------------------------------
# asymptotics
# --------------------------------------------------------------------
def _asymptotic_row(rho: float, M) -> dict:
    row = {
        "rho": rho,
        "h_over_m_mean_limit": iidorder.asymptotic_mean(rho),
        "h_over_m_deadline_limit": iidorder.asymptotic_deadline(rho),
        "cq_upper": bounds.cq_upper(rho),
    }
    if M is not None:
        row["finite_M_deadline"] = iidorder.ordering_entropy_deadline(1.0, M / rho, M) / M
    return row


def cmd_asymptotics(args) -> pd.DataFrame:
    if args.rho_sweep:
        rhos = parse_range(args.rho_sweep)
    elif args.rho is not None:
        rhos = np.array([args.rho])
    else:
        rhos = parse_range(DEFAULT_RHO_SWEEP)
    for rho in rhos:
        require_positive("rho", rho)
    if args.M is not None and args.M < 1:
        raise UsageError(f"M must be at least 1, got {args.M}")

    rows = Parallel(n_jobs=args.workers)(delayed(_asymptotic_row)(float(r), args.M) for r in rhos)
    df = pd.DataFrame(rows).sort_values("rho", kind="mergesort").reset_index(drop=True)
    if args.bits:
        df = to_bits(df, [c for c in df.columns if c != "rho"])
    return tidy(df, "rho") if args.tidy else df


# --------------------------------------------------------------------
# verify
# --------------------------------------------------------------------
def cmd_verify(args) -> pd.DataFrame:
    if args.suite_config:
        path = Path(args.suite_config)
    else:
        path = SUITE_DIR / ("quick.yml" if args.quick else "full.yml")
    config = load_suite_config(path)
    logger.info("verify %s with preset %s, seed %d", args.suite, path.name, args.seed)
    return run_suite(args.suite, config, args.seed, args.workers)


# --------------------------------------------------------------------
# Parser and entry point
# --------------------------------------------------------------------
def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mu", type=float, default=1.0, help="passage rate")
    common.add_argument("--tau", type=float, default=1.0, help="launch deadline")
    common.add_argument("--M", type=int, default=None, help="number of tokens")
    common.add_argument("--rho", type=float, default=None, help="load lambda/mu")
    common.add_argument("--seed", type=int, default=None, help="defaults to $TOKEN_TIMING_SEED, then 7")
    common.add_argument("--mc-reps", type=int, default=0, help="Monte-Carlo replications (0 skips)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--bits", action="store_true", help="report entropies in bits")
    common.add_argument("--tidy", action="store_true", help="long form: one row per point with a series column")
    common.add_argument("--out", default=None, help="also write the table here, with a manifest")
    common.add_argument("--format", choices=FORMATS, default="csv")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="token-timing", description="Identical-token timing channel numerics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_common_flags()]

    p = sub.add_parser("capacity", parents=common, help="single-token capacity under a deadline")
    p.add_argument("--sweep-mutau", default=None, help="inclusive range start:stop:step or a list")
    p.add_argument("--no-numeric", action="store_true", help="skip the Blahut-Arimoto cross-check")
    p.add_argument("--grid-input", type=int, default=400)
    p.add_argument("--grid-output", type=int, default=4000)
    p.set_defaults(handler=cmd_capacity)

    p = sub.add_parser("ordent", aliases=["ordering-entropy"], parents=common,
                       help="ordering entropy of M i.i.d. tokens")
    p.add_argument("--case", choices=["mean", "deadline", "custom"], default="deadline")
    p.add_argument("--density", default=None, help="launch density file for --case custom")
    p.add_argument("--passage", choices=["exponential", "uniform"], default="exponential")
    p.add_argument("--M-sweep", default=None, help="inclusive integer range lo:hi")
    p.set_defaults(handler=cmd_ordering_entropy, command="ordent")

    p = sub.add_parser("asymptotics", parents=common, help="per-token limits at load rho")
    p.add_argument("--rho-sweep", default=None, help=f"inclusive range, default {DEFAULT_RHO_SWEEP}")
    p.set_defaults(handler=cmd_asymptotics)

    p = sub.add_parser("verify", parents=common, help="run reproduction checks")
    p.add_argument("suite", choices=SUITE_NAMES)
    p.add_argument("--quick", action="store_true", help="use the desk-scale preset")
    p.add_argument("--suite-config", default=None, help="YAML preset overriding --quick")
    p.set_defaults(handler=cmd_verify)
    return parser


def _parameters(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "handler"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.seed = resolve_seed(args.seed)
        if args.workers < 1:
            raise UsageError(f"--workers must be at least 1, got {args.workers}")
        if args.mc_reps and args.mc_reps < MIN_REPLICATIONS:
            raise UsageError(f"--mc-reps must be 0 or at least {MIN_REPLICATIONS}, got {args.mc_reps}")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        table = args.handler(args)
        if args.out:
            manifest = write_output(table, args.out, args.format, args.command, _parameters(args), args.seed)
            logger.info("wrote %s (sha256 %s)", args.out, manifest.output_digest)
        sys.stdout.write(render_table(table, args.format))
    except ConvergenceError as e:
        print(f"no convergence: {e} (last capacity {e.last_capacity:.9g} after {e.iterations} iterations)",
              file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "verify" and not all_passed(table):
        failed = int((table["status"] == "FAIL").sum())
        print(f"{failed} check(s) failed", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
