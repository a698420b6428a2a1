"""JSON and CSV writers shared by the command-line tools.

Floats are written with ``repr``, the shortest text that parses back to the
same double, so every number round-trips exactly. Non-finite floats become
``null`` in JSON and ``nan``/``inf`` in CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def jsonable(obj: Any) -> Any:
    """Convert dataclasses, numpy scalars/arrays and complex numbers to JSON types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    return obj


def dumps(doc: Any) -> str:
    return json.dumps(jsonable(doc), indent=2, allow_nan=False) + "\n"


def fmt_float(x: float) -> str:
    return repr(float(x))


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    """Write to ``path``; ``-`` means standard output."""
    if str(path) == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, newline="")


def human_table(rows: Iterable[tuple[str, Sequence[float | str]]], header: Sequence[str] = ()) -> str:
    """Aligned plain-text table, floats to 9 significant digits."""
    def cell(v: Any) -> str:
        return f"{v:.9g}" if isinstance(v, (float, np.floating)) else str(v)

    body = [[name, *map(cell, vals)] for name, vals in rows]
    table = ([list(header)] if header else []) + body
    if not table:
        return ""
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table) + "\n"
