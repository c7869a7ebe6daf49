"""Hertzian half-space indentation forces.

Public functions take depths and radii in mm, moduli in kPa and angles in
degrees, and return forces in N. Everything is converted to SI first.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ..errors import RangeError

MM = 1e-3
KPA = 1e3
RUBBER_POISSON = 0.5


@dataclass(frozen=True)
class HertzParams:
    """Material constants of one contact.

    ``E_o = None`` means a rigid object, whose compliance term vanishes.
    """

    E_star: float  # kPa
    v: float = RUBBER_POISSON
    E_o: float | None = None  # kPa
    v_o: float = RUBBER_POISSON

    def __post_init__(self):
        if not self.E_star > 0:
            raise RangeError("effective modulus must be positive")
        if not 0.0 <= self.v <= 0.5 + 1e-12:
            raise RangeError("Poisson ratio must lie in [0, 0.5]")
        if self.E_o is not None and not self.E_o > 0:
            raise RangeError("object modulus must be positive")

    @property
    def rigid(self):
        return self.E_o is None or math.isinf(self.E_o)

    def contact_modulus(self):
        """Combined modulus ``((1 - v^2)/E* + (1 - v_o^2)/E_o)^-1`` in Pa."""
        c = (1.0 - self.v**2) / (self.E_star * KPA)
        if not self.rigid:
            c += (1.0 - self.v_o**2) / (self.E_o * KPA)
        return 1.0 / c


def _params(params):
    if isinstance(params, HertzParams):
        return params
    return HertzParams(float(params))


def _depth(delta):
    d = np.asarray(delta, dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise RangeError("indentation depth must be finite and non-negative")
    return d * MM


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def hertz_sphere(delta, R, params):
    """Sphere pressed into an elastic half-space.

    ``F = 4/3 sqrt(delta^3 R) / ((1 - v^2)/E* + (1 - v_o^2)/E_o)``

    Parameters
    ----------
    delta : float or ndarray
        Indentation depth in mm.
    R : float
        Sphere radius in mm.
    params : HertzParams or float
        Material constants, or just ``E*`` in kPa for a rigid sphere.
    """
    if not R > 0:
        raise RangeError("sphere radius must be positive")
    p = _params(params)
    d = _depth(delta)
    return _scalar(4.0 / 3.0 * np.sqrt(d**3 * (R * MM)) * p.contact_modulus())


def hertz_cylinder(delta, R, params):
    """Rigid flat-ended cylinder of radius ``R`` (mm): ``F = 2 R delta E*``."""
    if not R > 0:
        raise RangeError("cylinder radius must be positive")
    p = _params(params)
    d = _depth(delta)
    return _scalar(2.0 * (R * MM) * d * (p.E_star * KPA))


def hertz_cone(delta, theta, params):
    """Rigid cone with half-space angle ``theta`` (deg): ``F = 2 delta^2 E* / (pi (1 - v^2) tan theta)``."""
    if not 0.0 < theta < 90.0:
        raise RangeError("cone angle must lie strictly between 0 and 90 degrees")
    p = _params(params)
    d = _depth(delta)
    return _scalar(2.0 * d**2 * (p.E_star * KPA) / (math.pi * (1.0 - p.v**2) * math.tan(math.radians(theta))))


def hertz_force(geometry, delta, param, params):
    """Dispatch on the geometry name; ``param`` is the diameter (mm) or the cone angle (deg)."""
    if geometry == "sphere":
        return hertz_sphere(delta, param / 2.0, params)
    if geometry == "cylinder":
        return hertz_cylinder(delta, param / 2.0, params)
    if geometry == "cone":
        return hertz_cone(delta, param, params)
    raise RangeError(f"unknown geometry {geometry!r}")


def hertz_slope(geometry, delta, param, params):
    """Closed-form ``dF/d(delta)`` in N/mm."""
    F = np.asarray(hertz_force(geometry, delta, param, params), float)
    d = np.asarray(delta, float)
    power = {"sphere": 1.5, "cylinder": 1.0, "cone": 2.0}[geometry]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d > 0, power * F / np.where(d > 0, d, 1.0), 0.0)
    if geometry == "cylinder":
        out = np.full_like(d, hertz_cylinder(1.0, param / 2.0, params))
    return _scalar(out)


def unit_force(geometry, delta, param, v=RUBBER_POISSON):
    """Force per kPa of ``E*`` for a rigid indenter; Hertz forces are linear in ``E*``."""
    return hertz_force(geometry, delta, param, HertzParams(1.0, v))
