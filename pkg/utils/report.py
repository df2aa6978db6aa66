import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd

from src import __version__

FORMATS = ("csv", "json")


# --------------------------------------------------------------------
# Table rendering
# --------------------------------------------------------------------
def _json_ready(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return _json_ready(value.item())
    return value


def render_table(df: pd.DataFrame, fmt: str = "csv") -> str:
    """CSV with a header row and LF endings, or JSON with one array per column."""
    if fmt == "csv":
        return df.to_csv(index=False, lineterminator="\n")
    if fmt == "json":
        columns = {col: [_json_ready(v) for v in df[col].tolist()] for col in df.columns}
        return json.dumps(columns, indent=2) + "\n"
    raise ValueError(f"unknown format '{fmt}', expected one of {FORMATS}")


def tidy(df: pd.DataFrame, key: str) -> pd.DataFrame:
    """Long form for plotting: one row per (key, series) point."""
    long = df.melt(id_vars=[key], var_name="series", value_name="value")
    return long.sort_values([key, "series"], kind="mergesort").reset_index(drop=True)


def to_bits(df: pd.DataFrame, columns) -> pd.DataFrame:
    """Divides entropy columns by ln 2 and renames a _nats suffix to _bits."""
    out = df.copy()
    renames = {}
    for col in columns:
        if col in out.columns:
            out[col] = out[col] / math.log(2.0)
            if col.endswith("_nats"):
                renames[col] = col[: -len("_nats")] + "_bits"
    return out.rename(columns=renames)


# --------------------------------------------------------------------
# Run manifest
# --------------------------------------------------------------------
@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int
    output_digest: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    @classmethod
    def for_output(cls, command: str, parameters: dict, seed: int, payload: str) -> "RunManifest":
        digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        return cls(command=command, parameters=parameters, seed=seed, output_digest=digest)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n"


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_output(df: pd.DataFrame, out, fmt: str, command: str, parameters: dict, seed: int) -> RunManifest:
    """
    Writes the table and its manifest side by side. The digest covers the
    table bytes only, so reruns with the same seed reproduce it.
    """
    out = Path(out)
    payload = render_table(df, fmt)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(payload)
        manifest = RunManifest.for_output(command, parameters, seed, payload)
        with open(manifest_path(out), "w", encoding="utf-8", newline="\n") as f:
            f.write(manifest.to_json())
    except OSError as e:
        raise RuntimeError(f"Output Write Error: {e}")
    return manifest
