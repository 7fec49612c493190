"""CSV writing with locale-independent number formatting."""

from __future__ import annotations

import csv
import math
from typing import Iterable, Sequence


def fmt_num(x) -> str:
    """Shortest round-trip decimal form; integral values print without ``.0``."""
    if isinstance(x, (bool,)):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def fmt_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return fmt_num(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt_cell(v) for v in r])
