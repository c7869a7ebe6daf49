"""Rigid indenter and object shapes.

Every shape lives in a local frame whose +Z axis points toward the
membrane; the topmost point of the shape sits at local ``z = 0`` and the
body extends toward ``-Z``. ``top_height`` gives the analytic upper
surface along local Z (``-inf`` outside the silhouette) and ``sdf`` the
signed distance (negative inside).
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ..errors import RangeError


def _xy(x, y):
    return np.asarray(x, float), np.asarray(y, float)


class Shape:
    kind = "shape"
    param = float("nan")
    #: mirror symmetric about the local X and Y axes
    symmetric = False

    def sdf(self, p):
        raise NotImplementedError

    def top_height(self, x, y):
        raise NotImplementedError

    def bounds(self):
        """Axis-aligned (lo, hi) corners in the local frame."""
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(Shape):
    """Sphere (or the exposed hemisphere of a probe) of radius ``R``."""

    R: float
    kind = "sphere"
    symmetric = True

    def __post_init__(self):
        if not self.R > 0:
            raise RangeError("sphere radius must be positive")

    @property
    def param(self):
        return 2.0 * self.R

    def sdf(self, p):
        p = np.asarray(p, float)
        c = np.array([0.0, 0.0, -self.R])
        return np.linalg.norm(p - c, axis=-1) - self.R

    def top_height(self, x, y):
        x, y = _xy(x, y)
        r2 = x * x + y * y
        inside = r2 <= self.R**2
        z = np.full(np.broadcast(x, y).shape, -np.inf)
        z[inside] = np.sqrt(self.R**2 - r2[inside]) - self.R
        return z

    def bounds(self):
        return np.array([-self.R, -self.R, -2 * self.R]), np.array([self.R, self.R, 0.0])


@dataclass(frozen=True)
class FlatPunch(Shape):
    """Right circular cylinder pressed along its axis (flat circular face)."""

    R: float
    height: float = 40.0
    kind = "cylinder"
    symmetric = True

    def __post_init__(self):
        if not self.R > 0:
            raise RangeError("cylinder radius must be positive")

    @property
    def param(self):
        return 2.0 * self.R

    def sdf(self, p):
        p = np.asarray(p, float)
        r = np.hypot(p[..., 0], p[..., 1])
        dr = r - self.R
        zc = -self.height / 2
        dz = np.abs(p[..., 2] - zc) - self.height / 2
        outside = np.hypot(np.maximum(dr, 0), np.maximum(dz, 0))
        return outside + np.minimum(np.maximum(dr, dz), 0.0)

    def top_height(self, x, y):
        x, y = _xy(x, y)
        inside = x * x + y * y <= self.R**2
        return np.where(inside, 0.0, -np.inf)

    def bounds(self):
        return np.array([-self.R, -self.R, -self.height]), np.array([self.R, self.R, 0.0])


@dataclass(frozen=True)
class Cone(Shape):
    """Cone with its apex toward the membrane.

    ``theta`` (degrees) is the angle between the conical surface and the
    membrane plane.
    """

    theta: float
    height: float = 30.0
    kind = "cone"
    symmetric = True

    def __post_init__(self):
        if not 0.0 < self.theta < 90.0:
            raise RangeError("cone angle must lie strictly between 0 and 90 degrees")

    @property
    def param(self):
        return self.theta

    @property
    def _tan(self):
        return math.tan(math.radians(self.theta))

    def sdf(self, p):
        p = np.asarray(p, float)
        r = np.hypot(p[..., 0], p[..., 1])
        t = math.radians(self.theta)
        # distance to the lateral surface line z = -r tan(theta), in the (r, z) half plane
        lateral = (p[..., 2] + r * math.tan(t)) * math.cos(t)
        base = -self.height - p[..., 2]
        return np.maximum(lateral, base)

    def top_height(self, x, y):
        x, y = _xy(x, y)
        z = -np.hypot(x, y) * self._tan
        return np.where(z >= -self.height, z, -np.inf)

    def bounds(self):
        rb = self.height / self._tan
        return np.array([-rb, -rb, -self.height]), np.array([rb, rb, 0.0])


@dataclass(frozen=True)
class Box(Shape):
    """Axis-aligned box with its top face at local z = 0."""

    sx: float
    sy: float
    sz: float
    kind = "box"
    symmetric = True

    @property
    def param(self):
        return self.sx

    def sdf(self, p):
        p = np.asarray(p, float)
        c = np.array([0.0, 0.0, -self.sz / 2])
        q = np.abs(p - c) - np.array([self.sx, self.sy, self.sz]) / 2
        return np.linalg.norm(np.maximum(q, 0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)

    def top_height(self, x, y):
        x, y = _xy(x, y)
        inside = (np.abs(x) <= self.sx / 2) & (np.abs(y) <= self.sy / 2)
        return np.where(inside, 0.0, -np.inf)

    def bounds(self):
        return np.array([-self.sx / 2, -self.sy / 2, -self.sz]), np.array([self.sx / 2, self.sy / 2, 0.0])


@dataclass(frozen=True)
class Torus(Shape):
    """Wire ring of centreline radius ``ring_radius`` lying in the local XY plane."""

    ring_radius: float
    wire_radius: float
    kind = "torus"
    symmetric = True

    @property
    def param(self):
        return 2.0 * self.ring_radius

    def sdf(self, p):
        p = np.asarray(p, float)
        r = np.hypot(p[..., 0], p[..., 1]) - self.ring_radius
        return np.hypot(r, p[..., 2] + self.wire_radius) - self.wire_radius

    def top_height(self, x, y):
        x, y = _xy(x, y)
        d = np.hypot(x, y) - self.ring_radius
        inside = np.abs(d) <= self.wire_radius
        z = np.full(d.shape, -np.inf)
        z[inside] = np.sqrt(self.wire_radius**2 - d[inside] ** 2) - self.wire_radius
        return z

    def bounds(self):
        e = self.ring_radius + self.wire_radius
        return np.array([-e, -e, -2 * self.wire_radius]), np.array([e, e, 0.0])


def make_indenter(kind, param):
    """Characterisation probe from its record description.

    ``param`` is the diameter in mm for spheres and cylinders and the cone
    angle in degrees for cones.
    """
    if kind == "sphere":
        return Sphere(param / 2.0)
    if kind == "cylinder":
        return FlatPunch(param / 2.0)
    if kind == "cone":
        return Cone(param)
    raise RangeError(f"unknown indenter geometry {kind!r}")


def rigid_transform(rotation=None, translation=(0.0, 0.0, 0.0)):
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    T[:3, 3] = translation
    return T


def rotation_about(axis, angle_deg):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    a = math.radians(angle_deg)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(a) * K + (1 - math.cos(a)) * K @ K


@dataclass(frozen=True, eq=False)
class Placed:
    """A shape at a rigid pose in the world frame."""

    shape: Shape
    pose: np.ndarray

    def world_sdf(self, p):
        p = np.asarray(p, float)
        R, t = self.pose[:3, :3], self.pose[:3, 3]
        return self.shape.sdf((p - t) @ R)

    def column_heights(self, hand_pose, x, y):
        """Upper surface height along hand +Z at hand-frame columns (x, y)."""
        x, y = _xy(x, y)
        rel = np.linalg.inv(hand_pose) @ self.pose
        R, t = rel[:3, :3], rel[:3, 3]
        if np.allclose(R, np.eye(3), atol=1e-12):
            return self.shape.top_height(x - t[0], y - t[1]) + t[2]
        return _march(self.shape, rel, x, y)


def _march(shape, rel, x, y, max_steps=600, eps=1e-5):
    """Sphere-trace columns downward (hand -Z) against a rotated shape."""
    lo, hi = shape.bounds()
    corners = np.array([[a, b, c] for a in (lo[0], hi[0]) for b in (lo[1], hi[1]) for c in (lo[2], hi[2])])
    zc = corners @ rel[:3, :3].T + rel[:3, 3]
    z_top, z_bot = zc[:, 2].max() + 1.0, zc[:, 2].min() - 1.0
    R, t = rel[:3, :3], rel[:3, 3]
    shp = np.broadcast(x, y).shape
    xf = np.broadcast_to(x, shp).ravel()
    yf = np.broadcast_to(y, shp).ravel()
    z = np.full(xf.size, z_top)
    hit = np.zeros(xf.size, bool)
    alive = np.ones(xf.size, bool)
    for _ in range(max_steps):
        if not alive.any():
            break
        ia = np.flatnonzero(alive)
        p = np.stack([xf[ia], yf[ia], z[ia]], axis=1)
        d = shape.sdf((p - t) @ R)
        done = d < eps
        hit[ia[done]] = True
        alive[ia[done]] = False
        step = np.maximum(d, eps)
        z[ia[~done]] -= step[~done]
        gone = z < z_bot
        alive &= ~gone
    return np.where(hit, z, -np.inf).reshape(shp)
