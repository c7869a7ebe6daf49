"""Indentation sweep protocols and the characterization runner.

A protocol file holds one directive per line::

    # comment
    stretch_mm 0 10 20 30 40 50 60
    depths_mm 0:15:1
    geometry sphere 20
    geometry cone 45
    trials 5
    seed 0

``depths_mm`` and ``stretch_mm`` take explicit values or an inclusive
``start:stop:step`` range. ``geometry`` may repeat.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ParseError, RangeError
from ..mechanics.records import GEOMETRIES, RECORD_HEADER, IndentationRecord, format_record
from .scene import MAX_INDENT, SceneState, indent
from .shapes import Placed, make_indenter
from .sheet import MAX_STRETCH, make_sheet

DEFAULT_STRETCHES = tuple(float(x) for x in range(0, 61, 10))
DEFAULT_DEPTHS = tuple(float(d) for d in range(16))
CALIBRATION_SPHERES = (10.0, 15.0, 20.0, 25.0, 30.0)
SENSITIVITY_CYLINDERS = (10.0, 15.0, 20.0, 25.0, 30.0)
FORCE_NOISE = 0.01  # relative load-cell noise per trial


@dataclass(frozen=True)
class Protocol:
    """Cartesian sweep over stretch states, geometries and depths.

    Parameters
    ----------
    stretches, depths : tuple of float
        mm.
    geometries : tuple of (str, float)
        Indenter kind and its diameter (mm) or cone angle (deg).
    trials : int
        Repetitions; each trial perturbs the simulated forces with
        independent multiplicative noise of relative size ``force_noise``.
    seed : int
    force_noise : float
    """

    stretches: tuple = DEFAULT_STRETCHES
    depths: tuple = DEFAULT_DEPTHS
    geometries: tuple = tuple(("sphere", d) for d in CALIBRATION_SPHERES) + (("cylinder", 20.0), ("cone", 45.0))
    trials: int = 5
    seed: int = 0
    force_noise: float = FORCE_NOISE

    def __post_init__(self):
        if not self.stretches or not self.depths or not self.geometries:
            raise RangeError("protocol needs stretches, depths and at least one geometry")
        for x in self.stretches:
            if not 0.0 <= x <= MAX_STRETCH:
                raise RangeError(f"stretch {x} mm outside [0, {MAX_STRETCH}] mm")
        for d in self.depths:
            if not 0.0 <= d <= MAX_INDENT:
                raise RangeError(f"depth {d} mm outside [0, {MAX_INDENT}] mm")
        for kind, p in self.geometries:
            make_indenter(kind, p)
        if self.trials < 1:
            raise RangeError("trials must be at least 1")
        if self.force_noise < 0:
            raise RangeError("force_noise must be non-negative")

    @property
    def size(self):
        return len(self.stretches) * len(self.geometries) * len(self.depths) * self.trials


def calibration_protocol(**overrides):
    return replace(Protocol(geometries=tuple(("sphere", d) for d in CALIBRATION_SPHERES)), **overrides)


def sensitivity_protocol(**overrides):
    return replace(Protocol(geometries=tuple(("cylinder", d) for d in SENSITIVITY_CYLINDERS)), **overrides)


def _values(tokens, lineno):
    out = []
    try:
        for tok in tokens:
            if ":" in tok:
                parts = [float(v) for v in tok.split(":")]
                if len(parts) != 3 or parts[2] <= 0:
                    raise ParseError(f"bad range {tok!r}; expected start:stop:step", lineno)
                n = int(np.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
                out.extend(float(np.round(parts[0] + k * parts[2], 9)) for k in range(max(n, 0)))
            else:
                out.append(float(tok))
    except ValueError:
        raise ParseError(f"bad number in {' '.join(tokens)!r}", lineno) from None
    if not out:
        raise ParseError("directive needs at least one value", lineno)
    return tuple(out)


def _int(tokens, lineno, name):
    if len(tokens) != 1:
        raise ParseError(f"{name} takes one integer", lineno)
    try:
        return int(tokens[0])
    except ValueError:
        raise ParseError(f"{name} must be an integer, got {tokens[0]!r}", lineno) from None


def parse_protocol(text: str) -> Protocol:
    """Parse protocol text; errors carry the offending line number."""
    fields = {}
    geoms = []
    last = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        last = lineno
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *tokens = line.split()
        if key in ("stretch_mm", "depths_mm"):
            fields["stretches" if key == "stretch_mm" else "depths"] = _values(tokens, lineno)
        elif key == "geometry":
            if len(tokens) != 2 or tokens[0] not in GEOMETRIES:
                raise ParseError(f"geometry takes a kind in {GEOMETRIES} and one parameter", lineno)
            try:
                geoms.append((tokens[0], float(tokens[1])))
            except ValueError:
                raise ParseError(f"bad geometry parameter {tokens[1]!r}", lineno) from None
        elif key == "trials":
            fields["trials"] = _int(tokens, lineno, key)
        elif key == "seed":
            fields["seed"] = _int(tokens, lineno, key)
        elif key == "force_noise":
            fields["force_noise"] = _values(tokens, lineno)[0]
        else:
            raise ParseError(f"unknown directive {key!r}", lineno)
    if geoms:
        fields["geometries"] = tuple(geoms)
    for need in ("stretches", "depths"):
        if need not in fields:
            name = "stretch_mm" if need == "stretches" else "depths_mm"
            raise ParseError(f"missing directive {name}", max(last, 1))
    if "geometries" not in fields:
        raise ParseError("missing directive geometry", max(last, 1))
    try:
        return Protocol(**fields)
    except RangeError as exc:
        raise ParseError(str(exc), max(last, 1)) from None


def read_protocol(path) -> Protocol:
    return parse_protocol(Path(path).read_text())


def format_protocol(p: Protocol) -> str:
    lines = [
        "stretch_mm " + " ".join(f"{x:g}" for x in p.stretches),
        "depths_mm " + " ".join(f"{d:g}" for d in p.depths),
    ]
    lines += [f"geometry {k} {v:g}" for k, v in p.geometries]
    lines += [f"trials {p.trials}", f"seed {p.seed}", f"force_noise {p.force_noise:g}"]
    return "\n".join(lines) + "\n"


def simulate_curve(stretch_x, kind, param, depths):
    """Noise-free reaction forces (N) of one indenter pressed through ``depths``."""
    scene = SceneState(make_sheet(stretch_x), Placed(make_indenter(kind, param), np.eye(4)))
    out = {}
    for d in sorted(set(depths)):
        scene, gt = indent(scene, d)
        out[d] = gt.reaction_force
    return np.array([out[d] for d in depths])


def run_characterization(protocol: Protocol, out=None, comments=(), progress=None):
    """Run the sweep and return its records.

    Each (stretch, geometry) pair is simulated once; the trials then draw
    independent seeded force noise. When ``out`` is a path the CSV is
    written block by block, so a failure leaves every finished block on
    disk before the error propagates.
    """
    records = []
    fh = None
    if out is not None:
        fh = open(out, "w")
        fh.writelines(f"# {c}\n" for c in comments)
        fh.write(",".join(RECORD_HEADER) + "\n")
        fh.flush()
    try:
        for ix, x in enumerate(protocol.stretches):
            for ig, (kind, param) in enumerate(protocol.geometries):
                F = simulate_curve(x, kind, param, protocol.depths)
                block = []
                for t in range(protocol.trials):
                    rng = np.random.default_rng([protocol.seed, ix, ig, t])
                    noisy = np.clip(F * (1.0 + protocol.force_noise * rng.standard_normal(F.shape)), 0.0, None)
                    block.extend(
                        IndentationRecord(float(x), kind, float(param), float(d), round(float(f), 9), t)
                        for d, f in zip(protocol.depths, noisy)
                    )
                records.extend(block)
                if fh is not None:
                    fh.writelines(format_record(r) + "\n" for r in block)
                    fh.flush()
                if progress is not None:
                    progress(x, kind, param)
    finally:
        if fh is not None:
            fh.close()
    return records
