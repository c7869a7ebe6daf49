"""World-frame fusion of contact patches and extent measurement.

Each contact patch lives in the hand frame of the pose it was sensed
from. ``patch_to_world`` maps it through the hand pose and ``WorldCloud``
accumulates the points from many contacts, keeping one point per voxel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import DegenerateFitError, InputError, InsufficientDataError, ParseError
from .geometry.patch import ContactPatch
from .palpation import PalpationConfig, advance, touch
from .sensing import calibrated_segmenter, sense
from .sim.scene import press
from .sim.sheet import make_sheet

VOXEL = 0.5  # mm, about the camera pitch
TRIM = (1.0, 99.0)  # percentiles kept by measure_extent


def check_rigid(pose, tol=1e-9):
    """Raise ``InputError`` unless ``pose`` is a 4x4 rigid transform."""
    T = np.asarray(pose, float)
    if T.shape != (4, 4) or not np.all(np.isfinite(T)):
        raise InputError("pose must be a finite 4x4 matrix")
    R = T[:3, :3]
    if not np.allclose(T[3], (0.0, 0.0, 0.0, 1.0), atol=tol):
        raise InputError("pose bottom row must be [0, 0, 0, 1]")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InputError("pose rotation is not orthonormal with determinant 1")
    return T


def patch_to_world(patch, hand_pose):
    """World coordinates (n, 3) of a patch or of hand-frame points."""
    T = check_rigid(hand_pose)
    pts = patch.points if isinstance(patch, ContactPatch) else np.asarray(patch, float).reshape(-1, 3)
    return pts @ T[:3, :3].T + T[:3, 3]


def _voxel_keys(points, voxel):
    return np.floor(points / voxel).astype(np.int64)


@dataclass(frozen=True, eq=False)
class WorldCloud:
    """Fused world points with the contact and pose each point came from.

    Holds at most one point per ``voxel``-sized cube; the first point to
    land in a voxel is kept.
    """

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    contact_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    pose_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    voxel: float = VOXEL

    def __post_init__(self):
        pts = np.asarray(self.points, float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        for name in ("contact_ids", "pose_ids"):
            ids = np.asarray(getattr(self, name), int).reshape(-1)
            if ids.shape[0] != pts.shape[0]:
                raise InputError(f"{name} must have one entry per point")
            object.__setattr__(self, name, ids)
        if not self.voxel > 0:
            raise InputError("voxel size must be positive")

    def __len__(self):
        return self.points.shape[0]

    def merge(self, points, contact_id=0, pose_id=0):
        """New cloud with ``points`` appended and voxel-deduplicated."""
        new = np.asarray(points, float).reshape(-1, 3)
        if new.shape[0] == 0:
            return self
        pts = np.vstack([self.points, new])
        cid = np.r_[self.contact_ids, np.broadcast_to(np.asarray(contact_id, int), new.shape[:1])]
        pid = np.r_[self.pose_ids, np.broadcast_to(np.asarray(pose_id, int), new.shape[:1])]
        _, first = np.unique(_voxel_keys(pts, self.voxel), axis=0, return_index=True)
        keep = np.sort(first)
        return WorldCloud(pts[keep], cid[keep], pid[keep], self.voxel)


def merge(cloud: WorldCloud, points, contact_id=0, pose_id=0) -> WorldCloud:
    return cloud.merge(points, contact_id, pose_id)


def measure_extent(cloud, axis, trim=TRIM):
    """Spread of the points along ``axis`` between the ``trim`` percentiles."""
    pts = cloud.points if isinstance(cloud, WorldCloud) else np.asarray(cloud, float).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise InsufficientDataError("extent needs at least two points")
    a = np.asarray(axis, float)
    n = np.linalg.norm(a)
    if not n > 0:
        raise InputError("axis must be non-zero")
    proj = pts @ (a / n)
    lo, hi = np.percentile(proj, trim)
    return float(hi - lo)


def ring_radius(cloud, directions=36, trim=TRIM):
    """Half the mean trimmed extent over ``directions`` horizontal axes.

    For a ring the membrane also spans the interior at wire height, so a
    point-to-circle fit is biased; the extent of the outer boundary is not.
    """
    angles = np.pi * np.arange(int(directions)) / int(directions)
    ext = [measure_extent(cloud, (np.cos(a), np.sin(a), 0.0), trim) for a in angles]
    return float(np.mean(ext)) / 2.0


@dataclass(frozen=True)
class CircleFit:
    center: np.ndarray
    radius: float
    rms: float


def fit_circle(points):
    """Least-squares circle through the xy components of ``points``."""
    xy = np.asarray(points, float)[:, :2]
    if xy.shape[0] < 3:
        raise InsufficientDataError("circle fit needs at least three points")
    A = np.c_[2 * xy, np.ones(len(xy))]
    sol, *_ = np.linalg.lstsq(A, (xy**2).sum(axis=1), rcond=None)
    c0, r0 = sol[:2], np.sqrt(max(sol[2] + sol[:2] @ sol[:2], 0.0))
    if not r0 > 0:
        raise DegenerateFitError("points do not determine a circle")
    res = optimize.least_squares(lambda p: np.hypot(*(xy - p[:2]).T) - p[2], np.r_[c0, r0], method="lm")
    c, r = res.x[:2], abs(res.x[2])
    rms = float(np.sqrt(np.mean((np.hypot(*(xy - c).T) - r) ** 2)))
    return CircleFit(c, float(r), rms)


def scan(scene, views, depth=8.0, stretch_x=0.0, segmenter=None, config: PalpationConfig = PalpationConfig(), cloud=None):
    """Touch the object from each view, press ``depth`` further and fuse the contacts.

    ``views`` are hand poses clear of the object whose approach axis
    (hand -Z) points at it. Returns the cloud and the final scene.
    """
    segmenter = segmenter or calibrated_segmenter()
    cloud = cloud if cloud is not None else WorldCloud()
    scene = scene.with_sheet(make_sheet(stretch_x))
    for k, view in enumerate(views):
        scene = scene.moved(check_rigid(view))
        scene, _ = touch(scene, segmenter, config)
        scene, _ = press(scene, advance(scene.pose, depth))
        obs = sense(scene, segmenter, config.n_frames, config.noise_sigma)
        if obs.in_contact:
            cloud = cloud.merge(patch_to_world(obs.patch, obs.pose), contact_id=k, pose_id=k)
    return cloud, scene


# files --------------------------------------------------------------------------


def write_cloud(cloud: WorldCloud, path_or_buf, comments=()):
    """ASCII export, one ``x_mm y_mm z_mm contact_id pose_id`` line per point."""
    lines = [f"# {c}" for c in comments]
    for p, c, q in zip(cloud.points, cloud.contact_ids, cloud.pose_ids):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c} {q}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_cloud(path_or_buf, voxel=VOXEL) -> WorldCloud:
    text = path_or_buf.read() if hasattr(path_or_buf, "read") else Path(path_or_buf).read_text()
    pts, cids, pids = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        try:
            pts.append([float(v) for v in parts[:3]])
            cids.append(int(parts[3]))
            pids.append(int(parts[4]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return WorldCloud(np.array(pts).reshape(-1, 3), cids, pids, voxel)
