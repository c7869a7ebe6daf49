"""Active stiffness palpation with monotone force scheduling.

The hand first touches the object at zero stretch and records its height,
probes it to fit the contact radius, then walks a stretch schedule. At
each stretch it starts at the depth that continues the force reached so
far and presses deeper in fixed steps until the sensed object height has
dropped by the deflection threshold. The proxy stiffness is ``F* / drop``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFitError, InsufficientDataError, NoObjectError, ParseError, RangeError
from .geometry.cloud import FLAT_BAND
from .geometry.patch import fit_sphere
from .mechanics.modulus import ModulusModel, estimate_force, invert_depth
from .sensing import calibrated_segmenter, sense
from .sim.scene import DEFAULT_BURST, DEFAULT_NOISE, SceneState, press
from .sim.sheet import make_sheet

PALPATION_HEADER = ("step", "x_mm", "depth_mm", "height_mm", "Fstar_N")


@dataclass(frozen=True)
class PalpationConfig:
    """Palpation schedule and sensing constants (lengths in mm).

    ``touch_step`` and ``touch_threshold`` drive the initial approach: the
    hand descends in small steps until the membrane deflects by
    ``touch_threshold``, which fixes the reference height. Presses after a
    stretch change advance by ``catch_up_step`` until the estimated force
    reaches the previous value again. ``clamp_radius`` clips the fitted
    radius into the model's guarded range instead of failing, for objects
    such as dough blocks that are wider than any calibration sphere.
    """

    deflection_threshold: float = 1.5
    radius_probe_depth: float = 10.0
    stretch_schedule: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    max_depth: float = 15.0
    depth_step: float = 1.0
    touch_step: float = 0.125
    touch_threshold: float = 0.25
    search_depth: float = 30.0
    catch_up_step: float = 0.25
    n_frames: int = DEFAULT_BURST
    noise_sigma: float = DEFAULT_NOISE
    clamp_radius: bool = False

    def __post_init__(self):
        sched = tuple(float(x) for x in self.stretch_schedule)
        object.__setattr__(self, "stretch_schedule", sched)
        if not self.deflection_threshold > FLAT_BAND:
            raise RangeError(f"deflection threshold must exceed the {FLAT_BAND} mm noise band")
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])):
            raise RangeError("stretch schedule must be strictly increasing")
        if sched[0] < 0 or sched[-1] > 60.0:
            raise RangeError("stretch schedule must lie within [0, 60] mm")
        if not 0 < self.radius_probe_depth <= self.max_depth <= 15.0:
            raise RangeError("need 0 < radius_probe_depth <= max_depth <= 15 mm")
        for name in ("depth_step", "touch_step", "touch_threshold", "catch_up_step", "search_depth"):
            if not getattr(self, name) > 0:
                raise RangeError(f"{name} must be positive")


@dataclass(frozen=True)
class TraceStep:
    x: float
    depth: float  # sensed membrane indentation
    height: float  # sensed object height
    F_star: float
    command: float = float("nan")  # commanded travel below the reference height


@dataclass(frozen=True)
class RadiusEstimate:
    R_star: float
    height: float
    fallback: bool
    scene: SceneState = field(repr=False, compare=False)
    touch_pose: np.ndarray = field(repr=False, compare=False, default=None)  # membrane plane at the object top


@dataclass(frozen=True)
class StiffnessEstimate:
    stiffness: float  # N/mm
    F_star: float
    deflection: float
    R_star: float
    x: float
    depth: float
    trace: tuple = ()
    radius_fallback: bool = False
    scene: SceneState = field(repr=False, compare=False, default=None)  # scene after the last press

    @property
    def too_stiff(self):
        return False


@dataclass(frozen=True)
class TooStiff:
    """Schedule exhausted without a sensed deflection.

    ``lower_bound`` is the largest applied force over the threshold, a
    lower bound on the proxy stiffness.
    """

    lower_bound: float
    F_star: float
    R_star: float
    x: float
    depth: float
    trace: tuple = ()
    radius_fallback: bool = False
    scene: SceneState = field(repr=False, compare=False, default=None)

    @property
    def too_stiff(self):
        return True


def advance(pose, travel):
    """Hand pose moved ``travel`` mm along its approach direction (hand -Z)."""
    T = np.array(pose, float)
    T[:3, 3] -= travel * T[:3, 2]
    return T


def touch(scene: SceneState, segmenter, config: PalpationConfig):
    """Lower the hand until the membrane first deflects.

    Returns the scene at first touch and the sensed object height there.
    """
    start = np.asarray(scene.robot_pose, float)
    travel = 0.0
    while travel <= config.search_depth + 1e-9:
        scene, _ = press(scene, advance(start, travel))
        obs = sense(scene, segmenter, config.n_frames, config.noise_sigma)
        if obs.apex >= config.touch_threshold:
            return scene, obs.height
        travel += config.touch_step
    raise NoObjectError(f"no object within {config.search_depth} mm below the hand")


def estimate_radius(scene: SceneState, segmenter=None, config: PalpationConfig = PalpationConfig()) -> RadiusEstimate:
    """Fit the contact radius at zero stretch.

    The hand touches the object, records its height, presses
    ``radius_probe_depth`` further and fits a sphere to the contact patch.
    A planar patch falls back to half its larger extent and is flagged.
    """
    segmenter = segmenter or calibrated_segmenter()
    scene = scene.with_sheet(make_sheet(0.0))
    scene, h0 = touch(scene, segmenter, config)
    touch_pose = np.array(scene.pose, float)
    touch_pose[2, 3] = h0
    scene, _ = press(scene, advance(touch_pose, config.radius_probe_depth))
    obs = sense(scene, segmenter, config.n_frames, config.noise_sigma)
    if obs.patch.empty:
        raise NoObjectError("no contact at the radius probe depth")
    try:
        R, fallback = fit_sphere(obs.patch).radius, False
    except (DegenerateFitError, InsufficientDataError):
        R, fallback = max(obs.patch.extents) / 2.0, True
    return RadiusEstimate(float(R), h0, fallback, scene, touch_pose)


def palpate(scene: SceneState, model: ModulusModel, config: PalpationConfig = PalpationConfig(), segmenter=None):
    """Estimate the proxy stiffness of the object under the hand.

    Forces are estimated from the sensed membrane indentation, so the
    object's own sink is not mistaken for membrane deformation.

    Returns
    -------
    StiffnessEstimate or TooStiff
    """
    segmenter = segmenter or calibrated_segmenter()
    rad = estimate_radius(scene, segmenter, config)
    R, h0 = rad.R_star, rad.height
    if config.clamp_radius:
        R = float(np.clip(R, *model.radius_bounds()))
    ref = rad.touch_pose
    scene = rad.scene
    trace = []
    F_prev, h_cur, last = 0.0, h0, None
    for x in config.stretch_schedule:
        scene = scene.with_sheet(make_sheet(x))
        if F_prev > 0:
            try:
                start = invert_depth(model, R, x, F_prev)
            except RangeError:
                continue
            travel = (h0 - h_cur) + start
        else:
            travel = config.depth_step
        while travel <= config.max_depth + 1e-9:
            scene, _ = press(scene, advance(ref, travel))
            obs = sense(scene, segmenter, config.n_frames, config.noise_sigma)
            depth = min(max(obs.apex, 0.0), model.max_depth)
            F = estimate_force(model, R, x, depth)
            if F + 1e-12 < F_prev:
                travel += config.catch_up_step
                continue
            F_prev, h_cur = F, obs.height
            last = TraceStep(x, depth, obs.height, F, travel)
            trace.append(last)
            drop = h0 - obs.height
            if drop >= config.deflection_threshold:
                return StiffnessEstimate(F / drop, F, drop, R, x, depth, tuple(trace), rad.fallback, scene)
            travel += config.depth_step
    if last is None:
        raise InsufficientDataError("palpation recorded no force")
    return TooStiff(F_prev / config.deflection_threshold, F_prev, R, last.x, last.command, tuple(trace), rad.fallback, scene)


def force_trace(estimate):
    """``(x, depth, F*)`` along the visited states."""
    return [(s.x, s.depth, s.F_star) for s in estimate.trace]


# result files -----------------------------------------------------------------


def write_result(estimate, path_or_buf, comments=()):
    """CSV of the visited states plus ``key=value`` footers."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(PALPATION_HEADER))
    for k, s in enumerate(estimate.trace):
        lines.append(f"{k},{s.x:.3f},{s.depth:.6f},{s.height:.6f},{s.F_star:.9f}")
    lines.append(f"Rstar_mm={estimate.R_star:.6f}")
    if estimate.too_stiff:
        lines.append(f"stiffness_lower_bound_N_per_mm={estimate.lower_bound:.9f}")
    else:
        lines.append(f"stiffness_N_per_mm={estimate.stiffness:.9f}")
        lines.append(f"deflection_mm={estimate.deflection:.6f}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_result(path_or_buf):
    """Parse a result file into ``(trace, footers)``."""
    text = path_or_buf.read() if hasattr(path_or_buf, "read") else Path(path_or_buf).read_text()
    trace, footers, header = [], {}, False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, _, val = line.partition("=")
            try:
                footers[key] = float(val)
            except ValueError:
                raise ParseError(f"bad footer value {val!r}", lineno) from None
            continue
        if not header:
            if tuple(line.split(",")) != PALPATION_HEADER:
                raise ParseError(f"expected header {','.join(PALPATION_HEADER)}", lineno)
            header = True
            continue
        parts = line.split(",")
        if len(parts) != len(PALPATION_HEADER):
            raise ParseError(f"expected {len(PALPATION_HEADER)} fields", lineno)
        try:
            _, x, d, h, f = int(parts[0]), *(float(p) for p in parts[1:])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        trace.append(TraceStep(x, d, h, f))
    if not header:
        raise ParseError("missing header", 1)
    return trace, footers
