"""Pre-strained membrane sheet description.

Lengths are in mm, forces in N. The membrane frame has its origin at the
sheet centre, X along the i (width) direction, Y along the j (stretch)
direction and Z pointing toward the camera.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from ..errors import RangeError

MAX_STRETCH = 80.0


@dataclass(frozen=True)
class SpringParams:
    """Constitutive constants of the spring grid.

    Edge springs follow a softening power law ``T = Y * (eps**exponent + pretension)``
    where ``eps`` is the engineering strain of the edge relative to its
    relaxed (stretched) length. ``Y`` is the base stiffness (N/mm) scaled by
    the stiffening law

        1 + stiffening * x / rest_length + tension_gain * ln(1 + x / x_ref)

    The linear term models strain stiffening of the rubber; the log term the
    quick rise in membrane tension over the first few mm of stretch.
    """

    base_stiffness: float = 0.0595
    stiffening: float = 2.84
    tension_gain: float = 0.414
    x_ref: float = 10.0
    rest_length: float = 90.0
    exponent: float = 0.2
    pretension: float = 0.01
    shear_weight: float = 0.25
    bending_weight: float = 0.002

    def stiffness(self, stretch_x):
        lin = self.stiffening * stretch_x / self.rest_length
        return self.base_stiffness * (1.0 + lin + self.tension_gain * math.log1p(stretch_x / self.x_ref))


DEFAULT_SPRINGS = SpringParams()


@dataclass(frozen=True)
class MembraneSheet:
    stretch_x: float = 0.0
    grid_pitch: float = 1.0
    rest_width: float = 100.0
    rest_length: float = 90.0
    thickness: float = 2.0
    grip_width: float = 7.5
    springs: SpringParams = field(default=DEFAULT_SPRINGS)

    @property
    def free_length(self):
        """Unsupported span between the grips at rest."""
        return self.rest_length - 2.0 * self.grip_width

    @property
    def cauchy_strain(self):
        return self.stretch_x / self.free_length

    @property
    def gripper_throw(self):
        return self.rest_length + self.stretch_x

    @property
    def shape(self):
        ni = int(round(self.rest_width / self.grid_pitch)) + 1
        nj = int(round(self.free_length / self.grid_pitch)) + 1
        return ni, nj

    @property
    def spacing(self):
        h_j = self.grid_pitch * (self.free_length + self.stretch_x) / self.free_length
        return self.grid_pitch, h_j

    @cached_property
    def axes(self):
        ni, nj = self.shape
        h_i, h_j = self.spacing
        return (np.arange(ni) - (ni - 1) / 2) * h_i, (np.arange(nj) - (nj - 1) / 2) * h_j

    @property
    def half_span(self):
        """Half extents (X, Y) of the free region in the stretched state."""
        return self.rest_width / 2, (self.free_length + self.stretch_x) / 2

    @property
    def stiffness(self):
        return self.springs.stiffness(self.stretch_x)

    def node_grid(self, w=None):
        """(ni, nj, 3) node positions; ``w`` is the transverse displacement."""
        xs, ys = self.axes
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        Z = np.zeros_like(X) if w is None else np.asarray(w).reshape(X.shape)
        return np.stack([X, Y, Z], axis=-1)


def make_sheet(stretch_x, grid_pitch=1.0, springs=DEFAULT_SPRINGS, **kwargs):
    """Build the relaxed pre-strained sheet for a gripper stretch ``stretch_x`` (mm)."""
    if not 0.0 <= stretch_x <= MAX_STRETCH:
        raise RangeError(f"stretch_x={stretch_x} mm outside [0, {MAX_STRETCH}] mm")
    sheet = MembraneSheet(stretch_x=float(stretch_x), grid_pitch=float(grid_pitch), springs=springs, **kwargs)
    for dim in (sheet.rest_width, sheet.free_length):
        n = dim / grid_pitch
        if abs(n - round(n)) > 1e-9:
            raise RangeError(f"grid_pitch {grid_pitch} mm does not divide {dim} mm")
    return sheet
