"""Indentation records and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass
import io
from pathlib import Path

import numpy as np

from ..errors import ParseError, RangeError

RECORD_HEADER = ("stretch_mm", "geometry", "param_mm", "depth_mm", "force_N", "trial")
GEOMETRIES = ("sphere", "cylinder", "cone")


@dataclass(frozen=True)
class IndentationRecord:
    """One calibration sample.

    ``param`` is the indenter diameter in mm for spheres and cylinders and
    the cone angle in degrees.
    """

    stretch_x: float
    geometry: str
    param: float
    depth: float
    force: float
    trial: int = 0

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise RangeError(f"unknown geometry {self.geometry!r}")
        if not self.param > 0:
            raise RangeError("geometry parameter must be positive")
        if self.depth < 0 or self.force < 0:
            raise RangeError("depth and force must be non-negative")


def _fmt(v, nd):
    return f"{v:.{nd}f}"


def format_record(r: IndentationRecord):
    return ",".join(
        (_fmt(r.stretch_x, 3), r.geometry, _fmt(r.param, 3), _fmt(r.depth, 3), f"{r.force:.9f}", str(int(r.trial)))
    )


def write_records(records, path_or_buf, comments=(), header=True):
    """Write records as CSV; ``comments`` become leading ``#`` lines."""
    lines = [f"# {c}" for c in comments]
    if header:
        lines.append(",".join(RECORD_HEADER))
    lines.extend(format_record(r) for r in records)
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_records(path_or_buf):
    """Parse a records CSV; errors carry the offending line number."""
    text = path_or_buf.read() if hasattr(path_or_buf, "read") else Path(path_or_buf).read_text()
    out = []
    seen_header = False
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if not seen_header:
            if tuple(c.strip() for c in row) != RECORD_HEADER:
                raise ParseError(f"expected header {','.join(RECORD_HEADER)}", lineno)
            seen_header = True
            continue
        if len(row) != len(RECORD_HEADER):
            raise ParseError(f"expected {len(RECORD_HEADER)} fields, got {len(row)}", lineno)
        try:
            rec = IndentationRecord(
                float(row[0]), row[1].strip(), float(row[2]), float(row[3]), float(row[4]), int(row[5])
            )
        except (ValueError, RangeError) as exc:
            raise ParseError(str(exc), lineno) from None
        out.append(rec)
    if not seen_header:
        raise ParseError("missing header", 1)
    return out


def records_to_arrays(records, geometry="sphere"):
    """``(X, y)`` with columns ``[stretch_mm, param_mm, depth_mm]`` for one geometry, plus trials."""
    sel = [r for r in records if r.geometry == geometry]
    X = np.array([[r.stretch_x, r.param, r.depth] for r in sel], float).reshape(-1, 3)
    y = np.array([r.force for r in sel], float)
    trials = np.array([r.trial for r in sel], int)
    return X, y, trials


def as_tuples(records):
    return [astuple(r) for r in records]
