"""Depth frames of the membrane and their text serialisation."""
from __future__ import annotations

from dataclasses import dataclass, replace
import io
from pathlib import Path

import numpy as np

from ..errors import DegenerateMaskError, ParseError, RangeError

REST_WIDTH = 100.0
REST_LENGTH = 90.0
MAX_STRETCH = 80.0
CLAMP_MARGIN = 5.0
MAX_DEPTH = 200.0
HEADER = "STRETCH-DEPTH v1"
REST_DEPTH = 100.0  # mm, camera to flat membrane


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """Rectangular depth image, rows along i (width) and columns along j (stretch).

    ``pitch_j`` grows with the stretch so that the metric spacing follows
    the membrane: ``pitch_j = base * (rest_length + stretch_x) / rest_length``.
    """

    depth: np.ndarray
    pitch_i: float
    pitch_j: float
    stretch_x: float = 0.0
    gripper_throw: float = REST_LENGTH

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        if d.ndim != 2:
            raise ValueError("depth must be a 2D grid")
        if not np.all(np.isfinite(d)) or d.min(initial=0) < 0 or d.max(initial=0) > MAX_DEPTH:
            raise RangeError(f"depth samples must be finite and within [0, {MAX_DEPTH}] mm")
        object.__setattr__(self, "depth", d)

    @property
    def rows(self):
        return self.depth.shape[0]

    @property
    def cols(self):
        return self.depth.shape[1]

    def pixel_coordinates(self):
        """Metric (x, y) of pixel centres, centred on the frame."""
        xs = (np.arange(self.rows) + 0.5 - self.rows / 2) * self.pitch_i
        ys = (np.arange(self.cols) + 0.5 - self.cols / 2) * self.pitch_j
        return xs, ys

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return (
            self.depth.shape == other.depth.shape
            and np.array_equal(self.depth, other.depth)
            and (self.pitch_i, self.pitch_j, self.stretch_x, self.gripper_throw)
            == (other.pitch_i, other.pitch_j, other.stretch_x, other.gripper_throw)
        )


def mask_membrane(frame: DepthFrame, margin=CLAMP_MARGIN, rest_width=REST_WIDTH, rest_length=REST_LENGTH):
    """Crop the frame to the membrane box left between the gripper clamps."""
    if not rest_length - 1e-9 <= frame.gripper_throw <= rest_length + MAX_STRETCH + 1e-9:
        raise RangeError(f"gripper throw {frame.gripper_throw} mm outside [{rest_length}, {rest_length + MAX_STRETCH}]")
    keep_i = int(round((rest_width - 2 * margin) / frame.pitch_i))
    keep_j = int(round((frame.gripper_throw - 2 * margin) / frame.pitch_j))
    keep_i = min(keep_i, frame.rows)
    keep_j = min(keep_j, frame.cols)
    if keep_i <= 0 or keep_j <= 0:
        raise DegenerateMaskError("membrane mask is empty")
    # equal margins on both sides keep the crop centred
    i0 = (frame.rows - keep_i) // 2
    j0 = (frame.cols - keep_j) // 2
    keep_i = frame.rows - 2 * i0
    keep_j = frame.cols - 2 * j0
    return replace(frame, depth=frame.depth[i0 : i0 + keep_i, j0 : j0 + keep_j])


def _fmt(v):
    return f"{v:.3f}"


def write_frame(frame: DepthFrame, path_or_buf, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(
        f"{HEADER} {frame.rows} {frame.cols} {_fmt(frame.pitch_i * 1000)} {_fmt(frame.pitch_j * 1000)} "
        f"{_fmt(frame.stretch_x)} {_fmt(frame.gripper_throw)}"
    )
    for row in frame.depth:
        lines.append(" ".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_frame(path_or_buf):
    """Parse a ``STRETCH-DEPTH v1`` file; errors carry the offending line number."""
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        text = Path(path_or_buf).read_text()
    header = None
    values = []
    lineno = 0
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            parts = line.split()
            if " ".join(parts[:2]) != HEADER or len(parts) != 8:
                raise ParseError("expected 'STRETCH-DEPTH v1 rows cols pitch_i_um pitch_j_um stretch_mm throw_mm'", lineno)
            try:
                rows, cols = int(parts[2]), int(parts[3])
                pitch_i, pitch_j, stretch, throw = (float(p) for p in parts[4:])
            except ValueError as exc:
                raise ParseError(f"bad header field: {exc}", lineno) from None
            header = (rows, cols, pitch_i / 1000, pitch_j / 1000, stretch, throw)
            continue
        try:
            row = [float(v) for v in line.split()]
        except ValueError as exc:
            raise ParseError(f"bad depth value: {exc}", lineno) from None
        if len(row) != header[1]:
            raise ParseError(f"expected {header[1]} values, got {len(row)}", lineno)
        values.append(row)
    if header is None:
        raise ParseError("missing header", lineno or 1)
    if len(values) != header[0]:
        raise ParseError(f"expected {header[0]} rows, got {len(values)} (truncated file?)", lineno)
    rows, cols, pitch_i, pitch_j, stretch, throw = header
    try:
        return DepthFrame(np.array(values).reshape(rows, cols), pitch_i, pitch_j, stretch, throw)
    except RangeError as exc:
        raise ParseError(str(exc), lineno) from None


def average_frames(frames):
    """Pixel-wise mean of a burst of frames taken at the same stretch state."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to average")
    ref = frames[0]
    for f in frames[1:]:
        if f.depth.shape != ref.depth.shape or (f.pitch_i, f.pitch_j) != (ref.pitch_i, ref.pitch_j):
            raise ValueError("frames in a burst must share shape and pitch")
    depth = np.mean([f.depth for f in frames], axis=0)
    return replace(ref, depth=depth)
