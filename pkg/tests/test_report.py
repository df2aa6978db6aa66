import json
import math

import numpy as np
import pandas as pd
import pytest

from src.errors import UsageError
from utils.report import RunManifest, manifest_path, render_table, tidy, to_bits, write_output
from utils.validate import parse_int_range, parse_range, require_positive, resolve_seed


@pytest.fixture
def table():
    return pd.DataFrame({"M": [1, 2], "value_nats": [0.0, math.log(2.0)], "note": [1.5, math.nan]})


# --------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------
def test_csv_has_header_and_lf_endings(table):
    text = render_table(table, "csv")
    assert text.splitlines()[0] == "M,value_nats,note"
    assert "\r" not in text
    assert text.endswith("\n")


def test_json_mirrors_columns(table):
    data = json.loads(render_table(table, "json"))
    assert data["M"] == [1, 2]
    assert data["note"] == [1.5, None]


def test_unknown_format(table):
    with pytest.raises(ValueError):
        render_table(table, "xml")


def test_to_bits_converts_and_renames(table):
    out = to_bits(table, ["value_nats"])
    assert "value_bits" in out.columns and "value_nats" not in out.columns
    assert out["value_bits"][1] == pytest.approx(1.0)


def test_tidy_is_sorted_long_form(table):
    long = tidy(table, "M")
    assert list(long.columns) == ["M", "series", "value"]
    assert len(long) == 4
    assert list(long["series"][:2]) == ["note", "value_nats"]


# --------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------
def test_output_and_manifest_written(tmp_path, table):
    out = tmp_path / "run" / "table.csv"
    first = write_output(table, out, "csv", "ordent", {"M": 2}, 7)
    second = write_output(table, out, "csv", "ordent", {"M": 2}, 7)
    assert out.read_text(encoding="utf-8") == render_table(table, "csv")
    assert first.output_digest == second.output_digest

    stored = json.loads(manifest_path(out).read_text(encoding="utf-8"))
    assert stored["command"] == "ordent"
    assert stored["seed"] == 7
    assert stored["output_digest"] == first.output_digest
    assert manifest_path(out).name == "table.csv.manifest.json"


def test_digest_changes_with_content(table):
    a = RunManifest.for_output("x", {}, 7, render_table(table))
    b = RunManifest.for_output("x", {}, 7, render_table(table.iloc[:1]))
    assert a.output_digest != b.output_digest


# --------------------------------------------------------------------
# Flag parsing
# --------------------------------------------------------------------
def test_float_range_is_inclusive():
    values = parse_range("0:10:0.5")
    assert len(values) == 21
    assert values[-1] == 10.0
    assert values[3] == 1.5
    np.testing.assert_array_equal(parse_range("0.5,1,2"), [0.5, 1.0, 2.0])


@pytest.mark.parametrize("text", ["1:2", "a:b:c", "2:1:0.5", "0:1:0", ""])
def test_bad_float_ranges(text):
    with pytest.raises(UsageError):
        parse_range(text)


def test_int_ranges():
    assert parse_int_range("2:8") == [2, 3, 4, 5, 6, 7, 8]
    assert parse_int_range("2:8:3") == [2, 5, 8]
    assert parse_int_range("3,5") == [3, 5]
    with pytest.raises(UsageError):
        parse_int_range("5:2")


def test_require_positive():
    assert require_positive("mu", 2.0) == 2.0
    with pytest.raises(UsageError):
        require_positive("mu", 0.0)


def test_seed_resolution(monkeypatch):
    monkeypatch.delenv("TOKEN_TIMING_SEED", raising=False)
    assert resolve_seed(None) == 7
    monkeypatch.setenv("TOKEN_TIMING_SEED", "42")
    assert resolve_seed(None) == 42
    assert resolve_seed(3) == 3
    monkeypatch.setenv("TOKEN_TIMING_SEED", "x")
    with pytest.raises(UsageError):
        resolve_seed(None)
