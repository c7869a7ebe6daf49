"""Membrane point clouds: normals, curvature signals and segmentation."""
from __future__ import annotations

from dataclasses import dataclass, replace
import enum
import io
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..errors import RangeError
from .frame import DepthFrame

FLAT_BAND = 1.0  # mm


class Label(enum.IntEnum):
    UNDEFORMED = 0
    DEFORMED_NO_CONTACT = 1
    CONTACT = 2


@dataclass(frozen=True, eq=False)
class MembraneCloud:
    """Per-pixel membrane geometry in the flat rest-plane frame.

    ``points`` has shape (rows, cols, 3) with z positive toward the
    camera. Later stages fill ``normals``, the curvature signals ``k_i`` and
    ``k_j`` and ``labels``. ``valid`` marks pixels with a full curvature
    stencil; ``degenerate`` marks pixels whose normal fell back to +Z.
    """

    points: np.ndarray
    pitch_i: float
    pitch_j: float
    stretch_x: float = 0.0
    normals: np.ndarray | None = None
    degenerate: np.ndarray | None = None
    k_i: np.ndarray | None = None
    k_j: np.ndarray | None = None
    valid: np.ndarray | None = None
    labels: np.ndarray | None = None

    @property
    def shape(self):
        return self.points.shape[:2]

    @property
    def z(self):
        return self.points[..., 2]

    def extent(self):
        """Metric footprint (i, j) of the pixel grid."""
        rows, cols = self.shape
        return rows * self.pitch_i, cols * self.pitch_j


def to_membrane_frame(frame: DepthFrame, rest_depth: float) -> MembraneCloud:
    """Lift a depth frame into rest-plane coordinates.

    Parameters
    ----------
    frame : DepthFrame
    rest_depth : float
        Camera depth (mm) of the flat undeformed membrane.

    Returns
    -------
    MembraneCloud
        Points only; ``z = rest_depth - depth`` so deformation toward the
        camera is positive.
    """
    if not rest_depth > 0:
        raise RangeError("rest_depth must be positive")
    xs, ys = frame.pixel_coordinates()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y, rest_depth - frame.depth], axis=-1)
    return MembraneCloud(pts, frame.pitch_i, frame.pitch_j, frame.stretch_x)


def _box_sum(a, window):
    # zero padding + division by the count gives windows clamped to the grid
    return ndimage.uniform_filter(a, size=window, mode="constant", cval=0.0) * window**2


def estimate_normals(cloud: MembraneCloud, window: int = 3, rel_tol: float = 1e-10) -> MembraneCloud:
    """Least-squares plane normal over a ``window`` x ``window`` neighbourhood.

    Windows are clipped at the grid border. Normals point toward the camera
    (+Z). Neighbourhoods whose points are collinear get the rest-plane
    normal and are flagged in ``degenerate``.
    """
    if window < 3 or window % 2 == 0:
        raise RangeError("window must be an odd count >= 3")
    P = cloud.points
    rows, cols = cloud.shape
    n = _box_sum(np.ones((rows, cols)), window)
    mean = [_box_sum(P[..., a], window) / n for a in range(3)]
    C = np.empty((rows, cols, 3, 3))
    # shift by the grid centre so the raw moments stay small
    Q = P - P.reshape(-1, 3).mean(axis=0)
    mean = [m - c for m, c in zip(mean, P.reshape(-1, 3).mean(axis=0))]
    for a in range(3):
        for b in range(a, 3):
            m = _box_sum(Q[..., a] * Q[..., b], window) / n - mean[a] * mean[b]
            if a == b:
                m = np.maximum(m, 0.0)
            C[..., a, b] = C[..., b, a] = m
    w, v = np.linalg.eigh(C)
    normals = v[..., :, 0].copy()
    scale = np.maximum(w[..., 2], 1e-300)
    degenerate = w[..., 1] <= rel_tol * scale
    normals[degenerate] = (0.0, 0.0, 1.0)
    flip = normals[..., 2] < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return replace(cloud, normals=normals, degenerate=degenerate)


def curvature_signals(cloud: MembraneCloud) -> MembraneCloud:
    """Central-difference curvature signals along both image axes.

    ``K_i = <p(i+1, j) - p(i-1, j), n(i+1, j) - n(i-1, j)>`` and likewise
    along j. Positive means locally convex toward the camera. Border
    pixels get zero and are marked invalid.
    """
    if cloud.normals is None:
        raise ValueError("normals are required; call estimate_normals first")
    P, N = cloud.points, cloud.normals
    rows, cols = cloud.shape
    k_i = np.zeros((rows, cols))
    k_j = np.zeros((rows, cols))
    k_i[1:-1, :] = np.einsum("abk,abk->ab", P[2:, :] - P[:-2, :], N[2:, :] - N[:-2, :])
    k_j[:, 1:-1] = np.einsum("abk,abk->ab", P[:, 2:] - P[:, :-2], N[:, 2:] - N[:, :-2])
    valid = np.zeros((rows, cols), bool)
    valid[1:-1, 1:-1] = True
    k_i[~valid] = 0.0
    k_j[~valid] = 0.0
    return replace(cloud, k_i=k_i, k_j=k_j, valid=valid)


def segment(
    cloud: MembraneCloud,
    k_threshold: float,
    flat_band: float = FLAT_BAND,
    saddle_ratio: float | None = None,
) -> MembraneCloud:
    """Three-way labelling of valid pixels.

    Undeformed where ``|z| < flat_band``; otherwise Contact where either
    curvature signal exceeds ``k_threshold``; the rest is deformed without
    contact. Invalid border pixels are labelled Undeformed.

    Parameters
    ----------
    saddle_ratio : float, optional
        When given, a pixel convex along one axis and concave along the
        other by more than ``saddle_ratio`` times that convexity is a
        saddle and not Contact. The free membrane around an indenter is
        saddle shaped, so this keeps the contact label from bleeding
        outward.
    """
    if cloud.k_i is None:
        raise ValueError("curvature signals are required; call curvature_signals first")
    labels = np.full(cloud.shape, Label.DEFORMED_NO_CONTACT, dtype=np.int8)
    convex = (cloud.k_i > k_threshold) | (cloud.k_j > k_threshold)
    if saddle_ratio is not None:
        hi = np.maximum(cloud.k_i, cloud.k_j)
        convex &= np.minimum(cloud.k_i, cloud.k_j) >= -saddle_ratio * hi
    labels[convex] = Label.CONTACT
    labels[np.abs(cloud.z) < flat_band] = Label.UNDEFORMED
    labels[~cloud.valid] = Label.UNDEFORMED
    return replace(cloud, labels=labels)


def smooth_depth(frame: DepthFrame, sigma_mm: float) -> DepthFrame:
    """Gaussian low-pass of the depth samples with a metric ``sigma_mm``."""
    if sigma_mm <= 0:
        return frame
    sig = (sigma_mm / frame.pitch_i, sigma_mm / frame.pitch_j)
    return replace(frame, depth=ndimage.gaussian_filter(frame.depth, sig, mode="nearest"))


CLOUD_HEADER = "i,j,x_mm,y_mm,z_mm,nx,ny,nz,Ki,Kj,label"


def write_cloud_csv(cloud: MembraneCloud, path_or_buf, comments=()):
    """Export a labelled cloud, one row per pixel in row-major order."""
    if cloud.labels is None:
        raise ValueError("cloud has no labels")
    rows, cols = cloud.shape
    I, J = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    names = {int(v): v.name.lower() for v in Label}
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    out.write(CLOUD_HEADER + "\n")
    P, N = cloud.points, cloud.normals
    for i, j in zip(I.ravel(), J.ravel()):
        p, nv = P[i, j], N[i, j]
        out.write(
            f"{i},{j},{p[0]:.4f},{p[1]:.4f},{p[2]:.4f},{nv[0]:.6f},{nv[1]:.6f},{nv[2]:.6f},"
            f"{cloud.k_i[i, j]:.6g},{cloud.k_j[i, j]:.6g},{names[int(cloud.labels[i, j])]}\n"
        )
    text = out.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text
