import math
from pathlib import Path

import yaml

from src.dist import Atom, MixedDensity1D, Piece
from src.errors import InvalidDensityError


def parse_density(text: str) -> MixedDensity1D:
    """
    Parses the launch-density text format, one directive per line:

        atom  <loc> <mass>
        piece <a> <b> const <level>
        piece <a> <b|inf> exp <rate> <level>

    Blank lines and '#' comments are ignored.
    """
    atoms, pieces = [], []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if fields[0] == "atom" and len(fields) == 3:
                atoms.append(Atom(float(fields[1]), float(fields[2])))
            elif fields[0] == "piece" and len(fields) == 5 and fields[3] == "const":
                pieces.append(Piece.constant(float(fields[1]), float(fields[2]), float(fields[4])))
            elif fields[0] == "piece" and len(fields) == 6 and fields[3] == "exp":
                end = math.inf if fields[2] in ("inf", "+inf") else float(fields[2])
                pieces.append(Piece.exponential(float(fields[1]), float(fields[5]), float(fields[4]), end))
            else:
                raise InvalidDensityError(f"unrecognized directive '{line}'")
        except (ValueError, InvalidDensityError) as e:
            raise InvalidDensityError(f"line {number}: {e}") from e

    try:
        return MixedDensity1D(atoms=tuple(atoms), pieces=tuple(sorted(pieces, key=lambda p: p.start)))
    except InvalidDensityError as e:
        raise InvalidDensityError(f"density file: {e}") from e


def load_density(source) -> MixedDensity1D:
    """
    Loads a launch density from a path or an open text buffer.
    """
    try:
        if isinstance(source, (str, Path)):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source.read()
        return parse_density(text)
    except InvalidDensityError:
        raise
    except Exception as e:
        raise RuntimeError(f"Density Load Error: {e}")


def load_suite_config(filepath) -> dict:
    """Verification preset: per-suite replication counts, grids and tolerances."""
    try:
        with open(filepath, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f) or {}
    except Exception as e:
        raise RuntimeError(f"Suite Config Error: {e}")
    if "suites" not in config:
        raise RuntimeError(f"Suite Config Error: {filepath} has no 'suites' section")
    return config
