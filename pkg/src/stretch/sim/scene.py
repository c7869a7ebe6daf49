"""Simulated world: membrane, object and hand pose.

Scenes are immutable values; ``indent`` and ``press`` return a new scene
holding the relaxed membrane together with the ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from ..errors import RangeError
from ..geometry.frame import REST_DEPTH, DepthFrame, average_frames
from .objects import Dough, LinearSpringBody, redistribute
from .shapes import Placed
from .sheet import MembraneSheet
from .solver import YIELD_RATIO, operator_for, relax

CAMERA_ROWS = 200
CAMERA_COLS = 180
CAMERA_PITCH = 0.5  # mm at zero stretch
CAMERA_DISTANCE = REST_DEPTH
DEFAULT_NOISE = 0.33  # mm; 3 sigma ~ the +-1 mm sensor noise
MAX_INDENT = 15.0
PIXEL_CONTACT_TOL = 0.02  # mm
MAX_DOUGH_PASSES = 8
DOUGH_LAYER = 1.0  # mm, depth over which dough contact is elastic


@dataclass(frozen=True, eq=False)
class GroundTruth:
    contact_mask: np.ndarray
    reaction_force: float
    object_height: float
    penetration: float = 0.0


@dataclass(frozen=True, eq=False)
class SceneState:
    sheet: MembraneSheet
    obj: object = None
    robot_pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    rng_seed: int = 0
    hand_pose: np.ndarray = None
    membrane: object = None
    sink: float = 0.0
    step: int = 0

    @property
    def pose(self):
        return self.robot_pose if self.hand_pose is None else self.hand_pose

    def with_sheet(self, sheet):
        return replace(self, sheet=sheet, membrane=None)

    def moved(self, robot_pose):
        return replace(self, robot_pose=np.asarray(robot_pose, float), hand_pose=None, membrane=None, sink=0.0)


def hand_pose_at(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def _placed(obj, sink=0.0):
    if isinstance(obj, Placed):
        return obj
    if isinstance(obj, LinearSpringBody):
        return obj.placed(sink)
    return None


def column_heights(obj, hand_pose, x, y, sink=0.0):
    """Object upper surface along hand +Z, in hand coordinates."""
    if obj is None:
        return np.full(np.broadcast(x, y).shape, -np.inf)
    if isinstance(obj, Dough):
        if not np.allclose(hand_pose[:3, :3], np.eye(3)):
            raise RangeError("dough can only be pressed from above")
        t = hand_pose[:3, 3]
        return obj.surface(np.asarray(x) + t[0], np.asarray(y) + t[1]) - t[2]
    return _placed(obj, sink).column_heights(hand_pose, x, y)


def object_top(obj):
    """World height of the undeformed object top."""
    if obj is None:
        return -np.inf
    if isinstance(obj, Dough):
        return obj.max_height
    placed = _placed(obj)
    lo, hi = placed.shape.bounds()
    corners = np.array([[a, b, c] for a in (lo[0], hi[0]) for b in (lo[1], hi[1]) for c in (lo[2], hi[2])])
    return float((corners @ placed.pose[:3, :3].T + placed.pose[:3, 3])[:, 2].max())


def _is_symmetric(obj, hand_pose):
    placed = _placed(obj)
    if placed is None or not placed.shape.symmetric:
        return False
    rel = np.linalg.inv(hand_pose) @ placed.pose
    return np.allclose(rel[:3, :3], np.eye(3), atol=1e-12) and np.allclose(rel[:2, 3], 0.0, atol=1e-9)


def _nodes(sheet):
    xs, ys = sheet.axes
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return X.ravel(), Y.ravel()


def _warm_start(scene, op):
    m = scene.membrane
    if m is None or m.u.shape[0] != op.n_red or getattr(m, "op", None) is not op:
        return None
    return m.u


def _solve(op, s, u0, force_cap=None, body_k=None, sink0=0.0, cap_stiffness=None):
    if u0 is not None and body_k is None:
        peak = float(np.max(op.P @ u0, initial=0.0))
        top = float(np.max(s))
        if peak > 1e-6 and top > 0:
            u0 = u0 * (top / peak)
    rel = relax(op, s, force_cap=force_cap, u0=u0, body_k=body_k, sink0=sink0, cap_stiffness=cap_stiffness)
    rel.op = op
    return rel


def approach_depth_pose(scene, depth):
    """Hand pose that presses ``depth`` mm past first contact along hand -Z."""
    X, Y = _nodes(scene.sheet)
    s = column_heights(scene.obj, scene.robot_pose, X, Y)
    top = float(np.max(s)) if np.isfinite(s).any() else None
    if top is None:
        return scene.robot_pose
    shift = np.eye(4)
    shift[2, 3] = -(depth - top)
    return scene.robot_pose @ shift


def indent(scene: SceneState, depth):
    """Press the hand ``depth`` mm past first contact and relax the membrane."""
    if not 0.0 <= depth <= MAX_INDENT + 1e-9:
        raise RangeError(f"indentation depth {depth} mm outside [0, {MAX_INDENT}] mm")
    return press(scene, approach_depth_pose(scene, depth))


def press(scene: SceneState, hand_pose):
    """Relax the membrane with the hand at ``hand_pose`` and update deformable objects."""
    hand_pose = np.asarray(hand_pose, float)
    sheet = scene.sheet
    X, Y = _nodes(sheet)
    obj = scene.obj
    sink = 0.0
    symmetric = _is_symmetric(obj, hand_pose)
    op = operator_for(sheet, symmetric)
    u0 = _warm_start(scene, op)

    if isinstance(obj, Dough):
        obj, rel = _press_dough(op, obj, hand_pose, X, Y, u0)
    else:
        s0 = column_heights(obj, hand_pose, X, Y)
        if isinstance(obj, LinearSpringBody) and np.isfinite(s0).any() and s0.max() > 0:
            rel = _solve(op, s0, u0, body_k=obj.k_o, sink0=scene.sink)
            sink = rel.sink
        else:
            rel = _solve(op, s0, u0)

    new = replace(scene, obj=obj, hand_pose=hand_pose, membrane=rel, sink=sink, step=scene.step + 1)
    mask = contact_mask(new)
    if isinstance(obj, Dough):
        height = obj.max_height
    elif obj is None:
        height = float("nan")
    else:
        height = object_top(obj) - sink
    pen = float(np.max(rel.penetration[~rel.yielded], initial=0.0))
    return new, GroundTruth(mask, rel.reaction_force, height, pen)


def _membrane_interp(sheet, w, x, y):
    """Bilinear membrane displacement at hand-frame (x, y); zero beyond the free span."""
    xs, ys = sheet.axes
    ni, nj = sheet.shape
    a = (np.asarray(x) - xs[0]) / (xs[1] - xs[0])
    b = (np.asarray(y) - ys[0]) / (ys[1] - ys[0])
    out = ndimage.map_coordinates(w.reshape(ni, nj), [a.ravel(), b.ravel()], order=1, mode="constant", cval=0.0)
    return out.reshape(np.broadcast(a, b).shape)


def _press_dough(op, dough, hand_pose, X, Y, u0):
    sheet = op.sheet
    t = hand_pose[:3, 3]
    p_y = dough.yield_pressure * 1e-3  # N/mm^2
    cap = p_y * op.node_area
    # elastic dough contact: modulus over one cell of depth
    kc = dough.E_o * 1e-3 * op.node_area / DOUGH_LAYER
    slack = YIELD_RATIO * p_y * DOUGH_LAYER / (dough.E_o * 1e-3)  # cap / kc, node area cancels
    xs, ys = dough.cell_centres()
    CX, CY = np.meshgrid(xs - t[0], ys - t[1], indexing="ij")
    hx, hy = sheet.half_span
    footprint = (np.abs(CX) <= hx) & (np.abs(CY) <= hy)
    ni, nj = sheet.shape
    volume = dough.volume
    rel = None
    for _ in range(MAX_DOUGH_PASSES):
        s = dough.surface(X + t[0], Y + t[1]) - t[2]
        rel = _solve(op, s, u0, force_cap=cap, cap_stiffness=kc)
        u0 = rel.u
        h = dough.heights
        surf = np.full(h.shape, np.inf)
        surf[footprint] = t[2] + _membrane_interp(sheet, rel.w, CX[footprint], CY[footprint])
        yielded = np.zeros(h.shape, bool)
        a = (CX[footprint] - sheet.axes[0][0]) / sheet.spacing[0]
        b = (CY[footprint] - sheet.axes[1][0]) / sheet.spacing[1]
        yflag = rel.yielded.reshape(ni, nj).astype(float)
        yielded[footprint] = ndimage.map_coordinates(yflag, [a, b], order=1, mode="nearest") > 0
        # dough yields down to the elastic penetration at yield onset, not to the membrane itself
        excess = np.where(yielded & (h > surf + slack), h - surf - slack, 0.0)
        removed = dough.flow_rate * excess
        if removed.sum() * dough.cell**2 <= 5e-4 * volume:
            break
        new = h - removed
        contact = footprint & (new >= surf - 0.05) & (new > 0)
        contact |= removed > 0
        h_ref = float(new[contact].max()) if contact.any() else float(new.max())
        caps = np.where(footprint, np.minimum(surf, h_ref), h_ref)
        dough = dough.with_heights(redistribute(new, removed, contact, caps))
    return dough, rel


def camera_axes(sheet):
    rows, cols = CAMERA_ROWS, CAMERA_COLS
    pitch_j = CAMERA_PITCH * (sheet.rest_length + sheet.stretch_x) / sheet.rest_length
    xs = (np.arange(rows) + 0.5 - rows / 2) * CAMERA_PITCH
    ys = (np.arange(cols) + 0.5 - cols / 2) * pitch_j
    return xs, ys, CAMERA_PITCH, pitch_j


def surface_heights(scene):
    """Membrane surface height (toward the camera) on the camera grid, plus the object surface."""
    xs, ys, _, _ = camera_axes(scene.sheet)
    PX, PY = np.meshgrid(xs, ys, indexing="ij")
    if scene.membrane is None:
        w = np.zeros(PX.shape)
    else:
        w = _membrane_interp(scene.sheet, scene.membrane.w, PX, PY)
    s = column_heights(scene.obj, scene.pose, PX, PY, sink=scene.sink)
    return w, s


def contact_mask(scene):
    w, s = surface_heights(scene)
    if scene.membrane is None or scene.membrane.reaction_force <= 0:
        return np.zeros(w.shape, bool)
    return np.isfinite(s) & (s >= w - PIXEL_CONTACT_TOL)


def render_depth(scene: SceneState, noise_sigma=DEFAULT_NOISE, frame=0):
    """Orthographic depth image of the membrane seen from the camera.

    The membrane cannot pass through the object, so the rendered surface is
    the upper envelope of the interpolated membrane and the object surface.
    Noise is zero-mean Gaussian, seeded by (rng_seed, step, frame).
    """
    if noise_sigma < 0:
        raise RangeError("noise_sigma must be non-negative")
    w, s = surface_heights(scene)
    z = np.maximum(w, np.where(np.isfinite(s), s, -np.inf))
    depth = CAMERA_DISTANCE - z
    if noise_sigma > 0:
        rng = np.random.default_rng([scene.rng_seed, scene.step, frame])
        depth = depth + rng.normal(0.0, noise_sigma, depth.shape)
    depth = np.round(depth, 3)
    _, _, pitch_i, pitch_j = camera_axes(scene.sheet)
    return DepthFrame(depth, pitch_i, pitch_j, scene.sheet.stretch_x, scene.sheet.gripper_throw)


DEFAULT_BURST = 32


def observe(scene: SceneState, n_frames=DEFAULT_BURST, noise_sigma=DEFAULT_NOISE):
    """Average of a burst of ``n_frames`` noisy frames of a static scene."""
    if n_frames < 1:
        raise RangeError("n_frames must be at least 1")
    return average_frames(render_depth(scene, noise_sigma, frame=k) for k in range(n_frames))


def flat_observations(sheet, count, rng_seed=0, n_frames=DEFAULT_BURST, noise_sigma=DEFAULT_NOISE):
    """``count`` independent noisy observations of the unloaded sheet."""
    return [observe(SceneState(sheet, rng_seed=rng_seed, step=k), n_frames, noise_sigma) for k in range(count)]
