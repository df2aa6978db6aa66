import math
import os

import numpy as np

from src.errors import UsageError

SEED_ENV_VAR = "TOKEN_TIMING_SEED"
DEFAULT_SEED = 7
RANGE_DECIMALS = 12


# --------------------------------------------------------------------
# Sweep ranges
# --------------------------------------------------------------------
def parse_range(text: str) -> np.ndarray:
    """
    Parses an inclusive float range "start:stop:step" or a comma list "a,b,c".
    '0:10:0.5' gives 21 points.
    """
    text = text.strip()
    if "," in text or ":" not in text:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"cannot parse value list '{text}'")
        if not values:
            raise UsageError("empty value list")
        return np.array(values)

    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range '{text}' must look like start:stop:step")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"cannot parse range '{text}'")
    if not step > 0 or stop < start:
        raise UsageError(f"range '{text}' needs step > 0 and stop >= start")

    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), RANGE_DECIMALS)


def parse_int_range(text: str) -> list:
    """Inclusive integer range "lo:hi" or "lo:hi:step", or a comma list."""
    text = text.strip()
    separator = ":" if ":" in text else ","
    try:
        parts = [int(p) for p in text.split(separator) if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse integer range '{text}'")

    if separator == ",":
        values = parts
    elif len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] < 1):
        raise UsageError(f"integer range '{text}' must look like lo:hi[:step]")
    else:
        values = list(range(parts[0], parts[1] + 1, parts[2] if len(parts) == 3 else 1))
    if not values:
        raise UsageError(f"integer range '{text}' is empty")
    return values


# --------------------------------------------------------------------
# Parameter checks
# --------------------------------------------------------------------
def require_positive(name: str, value: float) -> float:
    if value is None or not (value > 0 and math.isfinite(value)):
        raise UsageError(f"--{name} must be positive and finite, got {value}")
    return value


def require_nonnegative(name: str, value: float) -> float:
    if value is None or not (value >= 0 and math.isfinite(value)):
        raise UsageError(f"--{name} must be nonnegative and finite, got {value}")
    return value


def resolve_seed(seed) -> int:
    """--seed wins, then TOKEN_TIMING_SEED, then the default."""
    if seed is None:
        raw = os.environ.get(SEED_ENV_VAR)
        if raw is None:
            return DEFAULT_SEED
        try:
            seed = int(raw)
        except ValueError:
            raise UsageError(f"{SEED_ENV_VAR}={raw!r} is not an integer")
    if not 0 <= seed < 2 ** 64:
        raise UsageError(f"seed must be a 64-bit unsigned value, got {seed}")
    return seed
