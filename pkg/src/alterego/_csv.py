"""Small CSV helpers shared by the loaders and writers."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def fmt(value) -> str:
    """Serialize a value with 12 significant digits; NaN/None become empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    x = float(value)
    if math.isnan(x):
        return ""
    out = f"{x:.12g}"
    return "0" if out == "-0" else out


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_rows(path: str | Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Return the header and ``(line_number, fields)`` pairs, skipping blank lines."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        rows = []
        for fields in reader:
            if not fields or all(not f.strip() for f in fields):
                continue
            rows.append((reader.line_num, [f.strip() for f in fields]))
    return header, rows


def parse_float(path, line: int, text: str, column: str) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, line, f"column {column!r}: not a number: {text!r}") from None
