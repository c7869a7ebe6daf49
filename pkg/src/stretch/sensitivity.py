"""Contact-diameter sensitivity sweep over cylinder probes, stretches and depths.

Each flat-ended cylinder is pressed through the depth range at every
stretch; at each depth the sensed contact patch is measured along both
image axes and compared with the true diameter.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry.patch import measure_diameters
from .sensing import calibrated_segmenter
from .sim.protocol import SENSITIVITY_CYLINDERS, Protocol, sensitivity_protocol
from .sim.scene import DEFAULT_BURST, DEFAULT_NOISE, SceneState, indent, observe
from .sim.shapes import Placed, make_indenter
from .sim.sheet import make_sheet

SENSITIVITY_HEADER = ("stretch_mm", "diameter_mm", "depth_mm", "d_i_mm", "d_j_mm")
SWEEP_DEPTHS = tuple(float(d) for d in range(1, 16))


@dataclass(frozen=True)
class SensitivityPoint:
    x: float
    diameter: float
    depth: float
    d_i: float  # nan when no contact was sensed
    d_j: float

    @property
    def errors(self):
        """Absolute diameter errors along i and j; a missed contact counts as the full diameter."""
        return tuple(self.diameter if np.isnan(v) else abs(v - self.diameter) for v in (self.d_i, self.d_j))


def default_sweep(**overrides) -> Protocol:
    return sensitivity_protocol(depths=SWEEP_DEPTHS, trials=1, **overrides)


def run_sensitivity(protocol: Protocol = None, segmenter=None, n_frames=DEFAULT_BURST, noise_sigma=DEFAULT_NOISE, progress=None):
    """Sensed diameters for every (stretch, cylinder, depth) of ``protocol``.

    Only cylinder geometries are swept. Camera noise is seeded by
    ``protocol.seed``.
    """
    protocol = protocol or default_sweep()
    segmenter = segmenter or calibrated_segmenter()
    out = []
    for x in protocol.stretches:
        for kind, d in protocol.geometries:
            if kind != "cylinder":
                continue
            scene = SceneState(make_sheet(x), Placed(make_indenter(kind, d), np.eye(4)), rng_seed=protocol.seed)
            for depth in sorted(protocol.depths):
                scene, _ = indent(scene, depth)
                _, patch = segmenter.extract(observe(scene, n_frames, noise_sigma))
                di, dj = measure_diameters(patch) if not patch.empty else (float("nan"), float("nan"))
                out.append(SensitivityPoint(float(x), float(d), float(depth), float(di), float(dj)))
            if progress is not None:
                progress(x, d)
    return out


@dataclass(frozen=True)
class SensitivitySummary:
    x: float
    mean_i: float
    mean_j: float
    max_error: float
    count: int

    @property
    def mean(self):
        return 0.5 * (self.mean_i + self.mean_j)


def summarize(points, min_depth=5.0):
    """Per-stretch mean and max diameter errors over depths of at least ``min_depth``."""
    by_x = {}
    for p in points:
        if p.depth >= min_depth:
            by_x.setdefault(p.x, []).append(p.errors)
    out = {}
    for x, errs in sorted(by_x.items()):
        e = np.array(errs)
        out[x] = SensitivitySummary(x, float(e[:, 0].mean()), float(e[:, 1].mean()), float(e.max()), len(e))
    return out


def write_sensitivity(points, path_or_buf, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(SENSITIVITY_HEADER))
    for p in points:
        lines.append(f"{p.x:.3f},{p.diameter:.3f},{p.depth:.3f},{p.d_i:.6f},{p.d_j:.6f}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_sensitivity(path_or_buf):
    text = path_or_buf.read() if hasattr(path_or_buf, "read") else Path(path_or_buf).read_text()
    out, header = [], False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header:
            if tuple(line.split(",")) != SENSITIVITY_HEADER:
                raise ParseError(f"expected header {','.join(SENSITIVITY_HEADER)}", lineno)
            header = True
            continue
        parts = line.split(",")
        if len(parts) != len(SENSITIVITY_HEADER):
            raise ParseError(f"expected {len(SENSITIVITY_HEADER)} fields", lineno)
        try:
            out.append(SensitivityPoint(*(float(v) for v in parts)))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not header:
        raise ParseError("missing header", 1)
    return out


__all__ = [
    "SENSITIVITY_CYLINDERS",
    "SensitivityPoint",
    "SensitivitySummary",
    "default_sweep",
    "read_sensitivity",
    "run_sensitivity",
    "summarize",
    "write_sensitivity",
]
