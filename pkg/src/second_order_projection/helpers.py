"""Helper functions for deterministic output files.

Numbers are written with a fixed number of significant digits in lowercase
scientific notation, CSV uses LF line endings, JSON uses sorted keys, and
every file is written to a temporary sibling first and then renamed.
"""

import csv
import io
import json
import math
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from second_order_projection.config import get_settings


def format_float(x: float | None, digits: int | None = None) -> str:
    """Format a float with ``digits`` significant digits, e.g. 1.0000000000000000e+00.

    None becomes the empty string; non-finite values are spelled nan, inf, -inf.

    Example:
        >>> format_float(0.5, digits=3)
        '5.00e-01'

    """
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if digits is None:
        digits = get_settings().output_digits
    return f"{x:.{digits - 1}e}"


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or value is None:
        return format_float(value)
    return str(value)


def to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Render rows as CSV text with minimal quoting and LF line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"Row has {len(row)} cells, header has {len(header)}")
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def parse_csv(text: str) -> tuple[list[str], list[list[str]]]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise ValueError("CSV text has no header")
    return rows[0], rows[1:]


def _json_ready(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_float(obj)
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    return obj


def to_json(obj: Any) -> str:
    """Pretty JSON with sorted keys and a trailing newline."""
    return json.dumps(_json_ready(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def canonical_json(obj: Any) -> str:
    """Compact sorted-key JSON used for hashing."""
    return json.dumps(_json_ready(obj), sort_keys=True, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def write_text_atomic(path: str | Path, text: str) -> Path:
    """Write ``text`` (UTF-8, LF) to a temporary file in the target directory, then rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json_atomic(path: str | Path, obj: Any) -> Path:
    return write_text_atomic(path, to_json(obj))


def write_csv_atomic(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    return write_text_atomic(path, to_csv(header, rows))


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_files_atomic(files: dict[str | Path, str]) -> list[Path]:
    """Write several rendered files; nothing is written if rendering already failed upstream."""
    return [write_text_atomic(path, text) for path, text in files.items()]
