"""Dough shaping: pick a rolling stiffness, roll until the height settles, flatten, score.

The controller only observes the dough through the membrane camera. The
final score reads the dough height field directly, standing in for an
overhead camera.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import InputError, NoObjectError, RangeError
from .geometry.frame import DepthFrame, write_frame
from .mechanics.modulus import ModulusModel, default_model
from .palpation import PalpationConfig, TooStiff, palpate
from .sensing import calibrated_segmenter, sense
from .sim.objects import Dough
from .sim.scene import SceneState, hand_pose_at, press
from .sim.sheet import make_sheet

RUN_LOG_HEADER = ("step", "height_mm", "std_mm")
SCORE_HEADER = ("area_mm2", "perimeter_mm", "circularity", "steps")
CIRCULARITY_SLACK = 0.02
CONTOUR_SMOOTH = 0.7  # cells
# a flat dough top pressed deep shows only saddle-blurred edges, so probe shallow
DOUGH_PALPATION = {"clamp_radius": True, "radius_probe_depth": 4.0}


@dataclass(frozen=True)
class ShapingConfig:
    """Rolling and flattening parameters (lengths in mm, angles in degrees).

    ``flatten_depth`` is how far below the rolling plane the flattening
    press goes. ``step_angle`` is the hand's advance around the rolling
    circle per step; one height observation is taken per step.
    """

    height_window: int = 10
    height_std_threshold: float = 1.0
    roll_radius: float = 10.0
    step_angle: float = 36.0
    recenter_every: int = 20
    max_steps: int = 500
    flatten_stretch: float = 80.0
    flatten_depth: float = 22.0
    silhouette_fraction: float = 0.10
    palpation: PalpationConfig = field(default_factory=lambda: PalpationConfig(**DOUGH_PALPATION))

    def __post_init__(self):
        if self.height_window < 2:
            raise RangeError("height_window must be at least 2")
        if not self.height_std_threshold > 0 or not self.flatten_depth > 0:
            raise RangeError("height_std_threshold and flatten_depth must be positive")
        if self.roll_radius < 0 or self.recenter_every < 1 or self.max_steps < 1:
            raise RangeError("need roll_radius >= 0, recenter_every >= 1 and max_steps >= 1")
        if not 0 < self.silhouette_fraction < 1:
            raise RangeError("silhouette_fraction must lie in (0, 1)")
        make_sheet(self.flatten_stretch)  # stretch range check


@dataclass(frozen=True)
class RollState:
    """Contact state for rolling: stretch ``x`` and travel ``depth`` below the touch height."""

    x: float
    depth: float
    top_height: float
    estimate: object = field(repr=False, compare=False, default=None)

    @property
    def plane(self):
        """World height of the hand plane while rolling."""
        return self.top_height - self.depth


@dataclass(frozen=True, eq=False)
class RollResult:
    scene: SceneState
    steps: int
    heights: tuple
    stds: tuple
    converged: bool
    plane: float
    centre: tuple = (0.0, 0.0)  # sensed rolling centre, world x and y


@dataclass(frozen=True)
class CookieScore:
    area: float  # mm^2
    perimeter: float  # mm
    circularity: float
    roll_steps: int = 0


@dataclass(frozen=True, eq=False)
class ShapingResult:
    """Outcome of the full pipeline; ``aborted`` holds a ``TooStiff`` when the dough never yielded."""

    scene: SceneState
    roll: RollResult = None
    score: CookieScore = None
    state: RollState = None
    aborted: TooStiff = None
    volume_change: float = 0.0  # relative

    @property
    def ok(self):
        return self.aborted is None and self.roll is not None and self.roll.converged


class HeightMonitor:
    """Ring buffer of the last ``window`` heights with the settle test.

    The test applies only once the buffer is full; the standard deviation
    is the population one.
    """

    def __init__(self, window=10, threshold=1.0):
        self.window = int(window)
        self.threshold = float(threshold)
        self.buffer = deque(maxlen=self.window)

    def push(self, height):
        self.buffer.append(float(height))
        return self.std

    @property
    def full(self):
        return len(self.buffer) == self.window

    @property
    def std(self):
        return float(np.std(self.buffer)) if self.full else float("nan")

    @property
    def settled(self):
        return self.full and self.std < self.threshold


def _require_dough(scene):
    if scene.obj is None:
        raise NoObjectError("no dough in the scene")


def select_roll_stiffness(scene: SceneState, model: ModulusModel = None, config: ShapingConfig = ShapingConfig(), segmenter=None):
    """Palpate the dough and return the state at which it first yielded.

    Returns
    -------
    RollState or TooStiff
        ``TooStiff`` when the schedule ended without a sensed deflection;
        rolling is then pointless and the pipeline aborts.
    """
    _require_dough(scene)
    est = palpate(scene, model or default_model(), config.palpation, segmenter)
    if est.too_stiff:
        return est
    last = est.trace[-1]
    top = last.height + est.deflection
    return RollState(est.x, float(last.command), float(top), est)


def _circle_pose(centre, radius, angle, z):
    return hand_pose_at(centre[0] + radius * np.cos(angle), centre[1] + radius * np.sin(angle), z)


def _centre(contacts, fallback, config):
    if not contacts:
        return tuple(float(v) for v in fallback)
    return tuple(float(v) for v in np.mean(contacts[-config.recenter_every :], axis=0))


def roll_until_round(scene: SceneState, state: RollState, config: ShapingConfig = ShapingConfig(), segmenter=None, log=None):
    """Roll in a circle at the fixed contact state until the height trace settles.

    The circle is centred on the mean contact point of the recent steps
    and re-centred every ``config.recenter_every`` steps. ``log`` receives
    ``(step, height, std)`` per step.
    """
    _require_dough(scene)
    segmenter = segmenter or calibrated_segmenter()
    scene = scene.with_sheet(make_sheet(state.x))
    start = np.asarray(scene.pose, float)
    centre = start[:2, 3].copy()
    contacts = []
    monitor = HeightMonitor(config.height_window, config.height_std_threshold)
    heights, stds = [], []
    step = 0
    for step in range(1, config.max_steps + 1):
        angle = np.radians(config.step_angle) * (step - 1)
        scene, _ = press(scene, _circle_pose(centre, config.roll_radius, angle, state.plane))
        obs = sense(scene, segmenter, config.palpation.n_frames, config.palpation.noise_sigma)
        if obs.in_contact:
            contacts.append(obs.world_points().mean(axis=0)[:2])
        std = monitor.push(obs.height)
        heights.append(obs.height)
        stds.append(std)
        if log is not None:
            log(step, obs.height, std)
        if monitor.settled:
            return RollResult(scene, step, tuple(heights), tuple(stds), True, state.plane, _centre(contacts, centre, config))
        if step % config.recenter_every == 0 and contacts:
            centre = _centre(contacts, centre, config)
    return RollResult(scene, step, tuple(heights), tuple(stds), False, state.plane, _centre(contacts, centre, config))


def flatten(scene: SceneState, plane: float, config: ShapingConfig = ShapingConfig(), centre=None):
    """One press at the flattening stretch with the hand plane at world height ``plane``.

    The hand is centred over ``centre`` (world x, y), by default its
    current position. Pressing again at the same plane leaves the dough
    unchanged once it lies below the plane.
    """
    _require_dough(scene)
    scene = scene.with_sheet(make_sheet(config.flatten_stretch))
    xy = np.asarray(scene.pose, float)[:2, 3] if centre is None else np.asarray(centre, float)
    scene, _ = press(scene, hand_pose_at(xy[0], xy[1], plane))
    return scene


def silhouette(heights, fraction=0.10):
    h = np.asarray(heights, float)
    top = h.max(initial=0.0)
    if not top > 0:
        raise NoObjectError("no dough on the table")
    return h > fraction * top


def contour_perimeter(mask, cell=1.0, smooth=CONTOUR_SMOOTH):
    """Perimeter (mm) of a boolean silhouette along its marching-squares contours.

    On a raw binary mask the contour still follows the pixel staircase
    and overstates the length of any boundary not at a multiple of 45
    degrees (a digital disc scores about 0.88). A Gaussian blur of
    ``smooth`` cells before contouring at the 0.5 level removes most of
    that bias while only slightly rounding true corners.
    """
    field = np.pad(np.asarray(mask, float), 3)
    if smooth > 0:
        field = ndimage.gaussian_filter(field, smooth, mode="constant")
    total = 0.0
    for c in measure.find_contours(field, 0.5):
        total += float(np.hypot(*np.diff(c, axis=0).T).sum())
    return total * cell


def score_mask(mask, cell=1.0, roll_steps=0) -> CookieScore:
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise NoObjectError("empty silhouette")
    area = float(mask.sum()) * cell * cell
    per = contour_perimeter(mask, cell)
    return CookieScore(area, per, 4.0 * np.pi * area / per**2, int(roll_steps))


def score_cookie(scene_or_dough, roll_steps=0, fraction=0.10) -> CookieScore:
    """Circularity of the top-down dough silhouette."""
    dough = scene_or_dough.obj if isinstance(scene_or_dough, SceneState) else scene_or_dough
    if not isinstance(dough, Dough):
        raise NoObjectError("scene holds no dough")
    return score_mask(silhouette(dough.heights, fraction), dough.cell, roll_steps)


def shape_dough(scene: SceneState, model: ModulusModel = None, config: ShapingConfig = ShapingConfig(), segmenter=None, log=None):
    """Full pipeline: palpate, roll until settled, flatten and score."""
    _require_dough(scene)
    if not isinstance(scene.obj, Dough):
        raise InputError("shaping needs a dough object")
    segmenter = segmenter or calibrated_segmenter()
    v0 = scene.obj.volume
    state = select_roll_stiffness(scene, model, config, segmenter)
    if isinstance(state, TooStiff):
        return ShapingResult(scene, aborted=state)
    # rolling starts from the dough as palpation left it
    scene = state.estimate.scene
    roll = roll_until_round(scene, state, config, segmenter, log)
    scene = roll.scene
    scene = flatten(scene, roll.plane - config.flatten_depth, config, roll.centre)
    score = score_cookie(scene, roll.steps, config.silhouette_fraction)
    dv = (scene.obj.volume - v0) / v0
    return ShapingResult(scene, roll, score, state, None, dv)


# files --------------------------------------------------------------------------


def write_run_log(roll: RollResult, path_or_buf, comments=(), score: CookieScore = None):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(RUN_LOG_HEADER))
    for k, (h, s) in enumerate(zip(roll.heights, roll.stds), start=1):
        lines.append(f"{k},{h:.6f},{'' if np.isnan(s) else f'{s:.6f}'}")
    if score is not None:
        lines.append(",".join(SCORE_HEADER))
        lines.append(format_score(score))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def format_score(score: CookieScore):
    return f"{score.area:.3f},{score.perimeter:.6f},{score.circularity:.6f},{score.roll_steps}"


def dough_frame(dough: Dough, margin=5):
    """Dough height field as a ``DepthFrame`` cropped to the occupied cells plus ``margin``."""
    occ = np.argwhere(dough.heights > 0)
    if occ.size == 0:
        raise NoObjectError("no dough on the table")
    lo = np.maximum(occ.min(axis=0) - margin, 0)
    hi = np.minimum(occ.max(axis=0) + margin + 1, dough.heights.shape)
    return DepthFrame(dough.heights[lo[0] : hi[0], lo[1] : hi[1]], dough.cell, dough.cell)


def write_dough(dough: Dough, path_or_buf, comments=()):
    return write_frame(dough_frame(dough), path_or_buf, comments)
