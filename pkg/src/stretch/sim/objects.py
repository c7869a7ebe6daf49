"""Deformable object stand-ins: spring-mounted bodies and plastic dough."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from ..errors import RangeError
from .shapes import Placed, Shape, rigid_transform


@dataclass(frozen=True, eq=False)
class LinearSpringBody:
    """Rigid shape on a linear spring acting along world -Z.

    One-degree-of-freedom proxy for a fluid-filled balloon: the exposed cap
    keeps its shape and sinks by ``F / k_o`` under load.
    """

    shape: Shape
    k_o: float  # N/mm
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    E_o: float = float("inf")  # kPa, material modulus of the body
    v_o: float = 0.5

    def __post_init__(self):
        if not self.k_o > 0:
            raise RangeError("spring constant k_o must be positive")

    def placed(self, sink=0.0):
        return Placed(self.shape, rigid_transform(self.pose[:3, :3], self.pose[:3, 3] - [0.0, 0.0, sink]))

    @property
    def top(self):
        return float(self.pose[2, 3])


@dataclass(frozen=True, eq=False)
class Dough:
    """Height-field dough on a table at world z = 0.

    ``heights[a, b]`` is the column height of the cell centred at
    ``origin + (a, b) * cell``. Columns under membrane pressure above
    ``yield_pressure`` compress; the displaced volume moves to the nearest
    columns not in contact.
    """

    heights: np.ndarray
    cell: float = 1.0
    origin: tuple = (0.0, 0.0)
    yield_pressure: float = 3.0  # kPa
    flow_rate: float = 1.0
    E_o: float = 50.0  # kPa
    v_o: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "heights", np.asarray(self.heights, dtype=float))
        if not 0.0 <= self.flow_rate <= 1.0:
            raise RangeError("flow_rate must lie in [0, 1]")

    @property
    def volume(self):
        return float(self.heights.sum() * self.cell**2)

    @property
    def max_height(self):
        return float(self.heights.max())

    def cell_centres(self):
        na, nb = self.heights.shape
        xs = self.origin[0] + np.arange(na) * self.cell
        ys = self.origin[1] + np.arange(nb) * self.cell
        return xs, ys

    def centroid(self):
        xs, ys = self.cell_centres()
        m = self.heights
        tot = m.sum()
        return float((xs[:, None] * m).sum() / tot), float((ys[None, :] * m).sum() / tot)

    def surface(self, x, y):
        """Bilinear top surface at world (x, y); ``-inf`` where there is no dough."""
        a = (np.asarray(x, float) - self.origin[0]) / self.cell
        b = (np.asarray(y, float) - self.origin[1]) / self.cell
        h = ndimage.map_coordinates(self.heights, [a.ravel(), b.ravel()], order=1, mode="constant", cval=0.0)
        h = h.reshape(np.broadcast(a, b).shape)
        return np.where(h > 1e-6, h, -np.inf)

    def with_heights(self, heights):
        return replace(self, heights=heights)


def dough_cube(side=40.0, cell=1.0, extent=240.0, yield_pressure=3.0, flow_rate=1.0, center=(0.0, 0.0)):
    n = int(round(extent / cell))
    xs = (np.arange(n) - (n - 1) / 2) * cell
    h = np.zeros((n, n))
    inside_x = np.abs(xs - center[0]) < side / 2
    inside_y = np.abs(xs - center[1]) < side / 2
    h[np.ix_(inside_x, inside_y)] = side
    return Dough(h, cell, (float(xs[0]), float(xs[0])), yield_pressure, flow_rate)


def dough_sphere(radius=20.0, cell=1.0, extent=240.0, yield_pressure=3.0, flow_rate=1.0, center=(0.0, 0.0)):
    """Dough ball resting on the table (its lower half is a column of the same footprint)."""
    n = int(round(extent / cell))
    xs = (np.arange(n) - (n - 1) / 2) * cell
    X, Y = np.meshgrid(xs - center[0], xs - center[1], indexing="ij")
    r2 = X**2 + Y**2
    h = np.where(r2 < radius**2, radius + np.sqrt(np.clip(radius**2 - r2, 0, None)), 0.0)
    return Dough(h, cell, (float(xs[0]), float(xs[0])), yield_pressure, flow_rate)


def _nearest_fill(h, total, contact, caps):
    """Fill free cells in order of distance from ``contact``; returns the volume left over."""
    free = ~contact
    dist = ndimage.distance_transform_edt(free)
    room = np.where(free, np.clip(caps - h, 0.0, None), 0.0)
    cand = np.flatnonzero(room.ravel() > 0)
    if cand.size == 0:
        return total
    d = np.round(dist.ravel()[cand], 6)
    order = np.lexsort((cand, d))
    cand, d = cand[order], d[order]
    r = room.ravel()[cand]
    flat = h.reshape(-1)
    # group boundaries of equal distance
    starts = np.flatnonzero(np.r_[True, d[1:] != d[:-1]])
    ends = np.r_[starts[1:], cand.size]
    remaining = total
    for s, e in zip(starts, ends):
        grp = r[s:e].sum()
        if grp <= remaining:
            flat[cand[s:e]] += r[s:e]
            remaining -= grp
        else:
            flat[cand[s:e]] += r[s:e] * (remaining / grp)
            remaining = 0.0
        if remaining <= 0:
            break
    return remaining


_SHIFTS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _shift(a, di, dj, fill):
    """``out[i, j] = a[i + di, j + dj]`` with ``fill`` beyond the grid."""
    out = np.full_like(a, fill)
    ni, nj = a.shape
    out[max(-di, 0):ni - max(di, 0), max(-dj, 0):nj - max(dj, 0)] = a[max(di, 0):ni - max(-di, 0), max(dj, 0):nj - max(-dj, 0)]
    return out


def _squeeze_round(h, src, region, room):
    """One potential-flow step: route ``src`` out of ``region`` and deposit it.

    Solves the graph Poisson problem ``L phi = src`` on the region with
    ``phi = 0`` in the neighbouring free cells; each free neighbour receives
    the potential drop across its edges. Returns the overflow per cell.
    """
    n = int(region.sum())
    idx = np.full(region.shape, -1)
    idx[region] = np.arange(n)
    rows, cols = [], []
    diag = np.zeros(n)
    inflow = []
    for di, dj in _SHIFTS:
        nb_idx = _shift(idx, di, dj, -2)  # -2 marks the grid edge (no flow)
        here = region & (nb_idx != -2)
        diag += here[region]
        link = region & (nb_idx >= 0)
        rows.append(idx[link])
        cols.append(nb_idx[link])
        inflow.append((di, dj, region & (nb_idx == -1)))
    r, c = np.concatenate(rows), np.concatenate(cols)
    L = sp.csr_matrix((np.r_[diag, -np.ones(r.size)], (np.r_[np.arange(n), r], np.r_[np.arange(n), c])), shape=(n, n))
    phi = np.zeros(region.shape)
    phi[region] = spla.spsolve(L.tocsc(), src[region])
    q = np.zeros(region.shape)
    for di, dj, out in inflow:
        # free cell at (i + di, j + dj) receives phi[i, j]
        q += _shift(np.where(out, phi, 0.0), -di, -dj, 0.0)
    q = np.clip(q, 0.0, None)
    put = np.minimum(q, room)
    h += put
    return q - put


def redistribute(heights, removed, contact, caps, max_rounds=200):
    """Move ``removed`` volume (per cell, in height units) out of the contact region.

    The volume flows like a squeeze film: a potential solved over the
    contact region drives it into the surrounding free cells, so edges
    facing the bulk receive more than corners and a pressed footprint
    rounds off. Cells filled to their cap join the region and pass the
    overflow on. Whatever cannot be routed (a region with no free
    neighbour) fills the nearest free cells by distance. Total volume is
    conserved exactly unless no cell has room left.
    """
    h = heights.copy()
    src = np.asarray(removed, float).copy()
    contact = np.asarray(contact, bool)
    caps = np.broadcast_to(np.asarray(caps, float), h.shape)
    total = float(src.sum())
    if total <= 0:
        return h
    tiny = 1e-12 * max(total, 1.0)
    for _ in range(max_rounds):
        if src.sum() <= tiny:
            return h
        room = np.where(contact, 0.0, np.clip(caps - h, 0.0, None))
        blocked = contact | (room <= 1e-12)
        lab, _ = ndimage.label(blocked)
        keep = np.unique(lab[src > 0])
        region = np.isin(lab, keep[keep > 0])
        # components without a free neighbour cannot drain
        drains = ndimage.binary_dilation(~blocked, ndimage.generate_binary_structure(2, 1)) & region
        if not np.isin(keep[keep > 0], lab[drains]).all():
            break
        src = _squeeze_round(h, src, region, room)
    rest = float(src.sum())
    if rest > tiny:
        _nearest_fill(h, rest, contact | (np.clip(caps - h, 0.0, None) <= 1e-12), caps)
    return h
