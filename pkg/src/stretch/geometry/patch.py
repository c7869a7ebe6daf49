"""Contact patches: extraction from a labelled cloud, sphere fits and diameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize

from ..errors import DegenerateFitError, InsufficientDataError
from .cloud import Label, MembraneCloud

PLANE_SLACK = 0.2  # mm
_EIGHT = np.ones((3, 3), bool)
_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class ContactPatch:
    """Connected set of membrane pixels touching the object.

    ``mask`` is a boolean pixel grid; ``points`` the matching (N, 3) rest
    frame positions. An empty patch stands for "no contact".
    """

    mask: np.ndarray
    points: np.ndarray
    pitch_i: float
    pitch_j: float
    secondary: list = field(default_factory=list)

    @property
    def empty(self):
        return self.points.shape[0] == 0

    @property
    def size(self):
        return int(self.points.shape[0])

    @property
    def centroid(self):
        if self.empty:
            return np.full(3, np.nan)
        return self.points.mean(axis=0)

    @property
    def area(self):
        """Pixel-footprint area in mm^2."""
        return self.size * self.pitch_i * self.pitch_j

    @property
    def extents(self):
        """Bounding extents along i and j in mm."""
        if self.empty:
            return 0.0, 0.0
        ii, jj = np.nonzero(self.mask)
        return (np.ptp(ii) + 1) * self.pitch_i, (np.ptp(jj) + 1) * self.pitch_j


def empty_patch(cloud: MembraneCloud):
    return ContactPatch(np.zeros(cloud.shape, bool), np.zeros((0, 3)), cloud.pitch_i, cloud.pitch_j)


def _fit_plane(pts):
    """Least-squares plane ``z = a x + b y + c``; horizontal through the mean if underdetermined."""
    A = np.c_[pts[:, 0], pts[:, 1], np.ones(len(pts))]
    if len(pts) < 3 or np.linalg.matrix_rank(A) < 3:
        return np.array([0.0, 0.0, pts[:, 2].mean()])
    coef, *_ = np.linalg.lstsq(A, pts[:, 2], rcond=None)
    return coef


def extract_contact(cloud: MembraneCloud, slack: float = PLANE_SLACK, erosion: int = 2) -> ContactPatch:
    """Contact patch from the Contact labels plus the above-plane rule.

    A plane is fitted to the Contact pixels and every deformed pixel lying
    above it (less ``slack``) joins them, which recovers flat faces whose
    curvature is near zero. The largest 8-connected component is returned;
    the remaining components go to ``secondary`` as boolean masks, largest
    first.

    Normals average over a window and the curvature stencil compares
    neighbouring normals, so a contact edge also lights up free pixels up
    to half a normal window away. ``erosion`` pixels (2 for the default
    5-pixel window) are peeled off the region along the image axes to undo
    that reach; set 0 to keep the raw region.
    """
    if cloud.labels is None:
        raise ValueError("cloud has no labels; call segment first")
    contact = cloud.labels == Label.CONTACT
    if not contact.any():
        return empty_patch(cloud)
    P = cloud.points
    a, b, c = _fit_plane(P[contact])
    plane = a * P[..., 0] + b * P[..., 1] + c
    deformed = cloud.labels != Label.UNDEFORMED
    region = contact | (deformed & (P[..., 2] > plane - slack))
    if erosion > 0:
        region = ndimage.binary_erosion(region, _CROSS, iterations=erosion)
    lab, n = ndimage.label(region, structure=_EIGHT)
    if n == 0:
        return empty_patch(cloud)
    sizes = np.bincount(lab.ravel(), minlength=n + 1)[1:]
    order = np.argsort(-sizes, kind="stable") + 1
    main = lab == order[0]
    secondary = [lab == k for k in order[1:]]
    return ContactPatch(main, P[main], cloud.pitch_i, cloud.pitch_j, secondary)


def _line_extent(mask, axis, centre, pitch):
    line = np.take(mask, centre, axis=1 - axis)
    idx = np.flatnonzero(line)
    if idx.size == 0:
        return 0.0
    return (idx.max() - idx.min() + 1) * pitch


def measure_diameters(patch: ContactPatch):
    """Patch extents (d_i, d_j) along the pixel row and column through the centroid.

    Returns
    -------
    (float, float)
        Lengths in mm. ``pitch_j`` already carries the stretch scaling.
    """
    if patch.empty:
        raise InsufficientDataError("cannot measure an empty patch")
    ii, jj = np.nonzero(patch.mask)
    ci = int(np.clip(round(ii.mean()), ii.min(), ii.max()))
    cj = int(np.clip(round(jj.mean()), jj.min(), jj.max()))
    d_i = _line_extent(patch.mask, 0, cj, patch.pitch_i)
    d_j = _line_extent(patch.mask, 1, ci, patch.pitch_j)
    return d_i, d_j


@dataclass(frozen=True)
class SphereFit:
    center: np.ndarray
    radius: float
    rms: float


def _algebraic_sphere(pts):
    A = np.c_[2 * pts, np.ones(len(pts))]
    rhs = (pts**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    c = sol[:3]
    r2 = sol[3] + c @ c
    return c, np.sqrt(max(r2, 0.0))


def fit_sphere(points, coplanar_tol: float = 1e-3) -> SphereFit:
    """Sphere through 3D points: algebraic fit refined by geometric Gauss-Newton.

    Parameters
    ----------
    points : array-like of shape (n, 3) or ContactPatch
    coplanar_tol : float
        Smallest-to-largest singular value ratio of the centred points below
        which the set counts as planar.

    Raises
    ------
    InsufficientDataError
        Fewer than 10 points.
    DegenerateFitError
        The points are coplanar.
    """
    pts = points.points if isinstance(points, ContactPatch) else np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 10:
        raise InsufficientDataError("sphere fit needs at least 10 points")
    q = pts - pts.mean(axis=0)
    s = np.linalg.svd(q, compute_uv=False)
    if s[0] == 0 or s[2] / s[0] < coplanar_tol:
        raise DegenerateFitError("points are coplanar; no unique sphere")
    c0, r0 = _algebraic_sphere(pts)

    def resid(p):
        return np.linalg.norm(pts - p[:3], axis=1) - p[3]

    def jac(p):
        d = pts - p[:3]
        n = np.linalg.norm(d, axis=1, keepdims=True)
        return np.c_[-d / n, -np.ones(len(pts))]

    sol = optimize.least_squares(resid, np.r_[c0, r0], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    c, r = sol.x[:3], abs(sol.x[3])
    if not np.isfinite(r) or r <= 0:
        raise DegenerateFitError("sphere fit diverged")
    rms = float(np.sqrt(np.mean(resid(np.r_[c, r]) ** 2)))
    return SphereFit(c, float(r), rms)
