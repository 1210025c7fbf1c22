"""Tests for the helpers module."""

import json
import math

import pytest

from second_order_projection.config import reset_settings
from second_order_projection.helpers import (
    canonical_json,
    format_cell,
    format_float,
    parse_csv,
    read_json,
    to_csv,
    to_json,
    write_csv_atomic,
    write_files_atomic,
    write_json_atomic,
    write_text_atomic,
)


def test_format_float_default_digits():
    """Test 17 significant digits in lowercase scientific notation."""
    assert format_float(1.0) == "1.0000000000000000e+00"


def test_format_float_digits():
    """Test an explicit digit count."""
    assert format_float(0.5, digits=3) == "5.00e-01"


def test_format_float_from_settings(monkeypatch):
    """Test that OUTPUT_DIGITS sets the default precision."""
    monkeypatch.setenv("OUTPUT_DIGITS", "5")
    reset_settings()

    assert format_float(1.23456) == "1.2346e+00"


def test_format_float_non_finite():
    """Test nan, inf, -inf and None."""
    assert format_float(math.nan) == "nan"
    assert format_float(math.inf) == "inf"
    assert format_float(-math.inf) == "-inf"
    assert format_float(None) == ""


def test_format_cell():
    """Test cell rendering for each value type."""
    assert format_cell(True) == "true"
    assert format_cell(False) == "false"
    assert format_cell(12) == "12"
    assert format_cell(0.25) == format_float(0.25)
    assert format_cell("lambda_minus") == "lambda_minus"


def test_to_csv():
    """Test header, rows and LF line endings."""
    text = to_csv(["n", "err", "slope"], [[12, 0.5, None], [18, 0.25, -1.0]])

    lines = text.split("\n")
    assert lines[0] == "n,err,slope"
    assert lines[1] == f"12,{format_float(0.5)},"
    assert lines[2].startswith("18,")
    assert text.endswith("\n")
    assert "\r" not in text


def test_to_csv_row_length():
    """Test that ragged rows are rejected."""
    with pytest.raises(ValueError, match="Row has 1 cells"):
        to_csv(["a", "b"], [[1]])


def test_parse_csv():
    """Test reading back header and rows."""
    header, rows = parse_csv(to_csv(["i", "member"], [[0, True], [1, False]]))

    assert header == ["i", "member"]
    assert rows == [["0", "true"], ["1", "false"]]


def test_parse_csv_empty():
    """Test that empty text has no header."""
    with pytest.raises(ValueError, match="no header"):
        parse_csv("")


def test_to_json():
    """Test sorted keys, indentation, trailing newline and non-finite values."""
    text = to_json({"b": math.inf, "a": [1, (2.0, -math.inf)], "c": None})

    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [1, [2.0, "-inf"]], "b": "inf", "c": None}


def test_canonical_json():
    """Test compact output independent of key order."""
    assert canonical_json({"b": 1, "a": [1.5]}) == '{"a":[1.5],"b":1}'
    assert canonical_json({"a": [1.5], "b": 1}) == canonical_json({"b": 1, "a": [1.5]})


def test_write_text_atomic(tmp_path):
    """Test writing into a new directory without leaving temporary files."""
    path = write_text_atomic(tmp_path / "out" / "spectrum.csv", "re,im\n")

    assert path.read_text(encoding="utf-8") == "re,im\n"
    assert [p.name for p in path.parent.iterdir()] == ["spectrum.csv"]


def test_write_text_atomic_replaces(tmp_path):
    """Test that an existing file is replaced."""
    path = tmp_path / "oracle.json"
    path.write_text("old", encoding="utf-8")

    write_text_atomic(path, "new\n")

    assert path.read_text(encoding="utf-8") == "new\n"


def test_write_json_and_read_back(tmp_path):
    """Test the JSON writer and reader."""
    path = write_json_atomic(tmp_path / "report.json", {"trials": 3, "eps": 1e-4})

    assert read_json(path) == {"eps": 1e-4, "trials": 3}
    assert path.read_bytes().endswith(b"\n")


def test_write_csv_atomic(tmp_path):
    """Test the CSV writer."""
    path = write_csv_atomic(tmp_path / "a.csv", ["x"], [[1], [2]])

    assert path.read_text(encoding="utf-8") == "x\n1\n2\n"


def test_write_files_atomic(tmp_path):
    """Test writing several rendered files."""
    written = write_files_atomic({tmp_path / "a.csv": "a\n", tmp_path / "b.json": "{}\n"})

    assert [p.name for p in written] == ["a.csv", "b.json"]
    assert (tmp_path / "b.json").read_text(encoding="utf-8") == "{}\n"
