"""Effective-modulus calibration, force estimation and leave-one-out validation.

The modulus surface has two layers. For every calibrated stretch ``x`` the
effective modulus decays with the contact diameter ``d`` as

    E*(d) = a + b * exp(-c * d)

and for a queried contact radius the per-stretch values are summarised by

    E*(x) = alpha + beta * ln(1 + x / x_ref),    beta >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
import math
from pathlib import Path

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.model_selection import LeaveOneGroupOut
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import FitError, InsufficientDataError, ModelRejectedError, ParseError, RangeError
from .hertz import KPA, MM, RUBBER_POISSON, hertz_sphere, unit_force

MIN_DEPTH = 3.0  # mm
MAX_DEPTH = 15.0  # mm
X_REF = 10.0  # mm
CALIB_HEADER = "STRETCH-CALIB v1"


def fit_modulus(records, min_depth=MIN_DEPTH, v=RUBBER_POISSON):
    """Least-squares ``E*`` for records of one stretch state and one indenter.

    Hertz forces are linear in ``E*``, so the fit is closed form.

    Returns
    -------
    (float, float)
        ``E*`` in kPa and the rms force residual in N over the fitted records.
    """
    records = list(records)
    keys = {(r.stretch_x, r.geometry, r.param) for r in records}
    if len(keys) > 1:
        raise RangeError("fit_modulus expects records of a single stretch and geometry")
    used = [r for r in records if r.depth >= min_depth]
    if len(used) < 5:
        raise InsufficientDataError(f"need at least 5 records with depth >= {min_depth} mm, got {len(used)}")
    g, p = used[0].geometry, used[0].param
    u = np.array([unit_force(g, r.depth, p, v) for r in used])
    F = np.array([r.force for r in used])
    E = float(u @ F / (u @ u))
    rms = float(np.sqrt(np.mean((E * u - F) ** 2)))
    return E, rms


def _sphere_unit(depth, diameter, v):
    """Rigid-sphere force per kPa, vectorised over depth and diameter."""
    E1 = KPA / (1.0 - v**2)
    return 4.0 / 3.0 * np.sqrt((depth * MM) ** 3 * (diameter / 2.0 * MM)) * E1


def _fit_decay(d, E):
    """``a + b exp(-c d)`` by variable projection over ``c`` then a joint refine."""
    d = np.asarray(d, float)
    E = np.asarray(E, float)

    def linear(c):
        A = np.c_[np.ones_like(d), np.exp(-c * d)]
        res = optimize.lsq_linear(A, E, bounds=([1e-9, 0.0], [np.inf, np.inf]))
        return res.x, float(np.sum((A @ res.x - E) ** 2))

    grid = np.geomspace(1e-3, 3.0, 80)
    sse = [linear(c)[1] for c in grid]
    c0 = float(grid[int(np.argmin(sse))])
    (a0, b0), _ = linear(c0)
    if b0 <= 1e-9:
        return np.array([a0, 0.0, c0])

    def resid(p):
        return p[0] + p[1] * np.exp(-p[2] * d) - E

    sol = optimize.least_squares(
        resid, [a0, b0, c0], bounds=([1e-9, 0.0, 1e-6], [np.inf, np.inf, 10.0]), xtol=1e-14, ftol=1e-14, gtol=1e-14
    )
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitError(f"diameter curve fit failed: {sol.message}")
    return sol.x


@dataclass(frozen=True)
class LOOResult:
    mean: float
    std: float
    force_range: float
    folds: tuple

    @property
    def percent_of_range(self):
        return 100.0 * self.mean / self.force_range if self.force_range > 0 else float("nan")


class ModulusModel(BaseEstimator, RegressorMixin):
    """Effective-modulus surface over contact diameter and stretch.

    ``fit`` takes rows ``[stretch_mm, diameter_mm, depth_mm]`` (an optional
    fourth column holds the trial index) with sphere forces in N, fits one
    ``E*`` per (stretch, diameter, trial) on depths ``>= min_depth``, then a
    decay curve per stretch. ``predict`` returns rigid-sphere Hertz forces
    for rows ``[stretch_mm, 2 R*_mm, depth_mm]``.

    Parameters
    ----------
    x_ref : float
        Offset of the logarithmic stretch law in mm.
    min_depth : float
        Records shallower than this are kept but not fitted.
    poisson : float
    diameter_guard : float
        Relative extrapolation allowed beyond the calibrated diameters.
    max_depth : float
    check_step : float
        Spacing in mm of the monotonicity verification grid.
    """

    def __init__(
        self,
        x_ref=X_REF,
        min_depth=MIN_DEPTH,
        poisson=RUBBER_POISSON,
        diameter_guard=0.25,
        max_depth=MAX_DEPTH,
        check_step=1.0,
    ):
        self.x_ref = x_ref
        self.min_depth = min_depth
        self.poisson = poisson
        self.diameter_guard = diameter_guard
        self.max_depth = max_depth
        self.check_step = check_step

    # fitting -------------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] not in (3, 4):
            raise ValueError("X must have columns [stretch_mm, diameter_mm, depth_mm(, trial)]")
        trial = X[:, 3] if X.shape[1] == 4 else np.zeros(len(X))
        x, d, delta = X[:, 0], X[:, 1], X[:, 2]
        if np.any(delta < 0) or np.any(y < 0) or np.any(d <= 0):
            raise RangeError("depths, forces and diameters must be non-negative")
        keep = delta >= self.min_depth
        stretches = np.unique(x)
        if len(stretches) < 4:
            raise InsufficientDataError(f"need at least 4 stretch states, got {len(stretches)}")
        curves, rms, points = [], [], {}
        for xs in stretches:
            at = x == xs
            diams = np.unique(d[at & keep])
            if len(diams) < 3:
                raise InsufficientDataError(f"need at least 3 diameters at stretch {xs:g} mm, got {len(diams)}")
            dd, ee = [], []
            for dia in diams:
                for t in np.unique(trial[at & keep & (d == dia)]):
                    sel = at & keep & (d == dia) & (trial == t)
                    if sel.sum() < 5:
                        raise InsufficientDataError(
                            f"need at least 5 depths >= {self.min_depth} mm at stretch {xs:g}, diameter {dia:g}"
                        )
                    u = _sphere_unit(delta[sel], dia, self.poisson)
                    dd.append(dia)
                    ee.append(float(u @ y[sel] / (u @ u)))
            points[float(xs)] = (np.array(dd), np.array(ee))
            abc = _fit_decay(dd, ee)
            curves.append(abc)
            sel = at & keep
            pred = (abc[0] + abc[1] * np.exp(-abc[2] * d[sel])) * _sphere_unit(delta[sel], d[sel], self.poisson)
            rms.append(float(np.sqrt(np.mean((pred - y[sel]) ** 2))))
        self.stretches_ = stretches.astype(float)
        self.curves_ = np.array(curves)
        self.rms_ = np.array(rms)
        self.diameter_range_ = (float(d[keep].min()), float(d[keep].max()))
        self.force_range_ = float(y.max() - y.min())
        self.points_ = points
        self.stretch_cache_ = {}
        self._verify()
        return self

    def _verify(self):
        a, b, c = self.curves_.T
        if np.any(a <= 0) or np.any(c <= 0) or np.any(b < 0):
            raise ModelRejectedError("diameter curves must have a > 0, b >= 0 and c > 0")
        lo, hi = self.diameter_range_
        grid = np.arange(lo, hi + 1e-9, self.check_step)
        E = self.per_stretch_modulus(grid)  # (n_stretch, n_grid)
        if np.any(E <= 0):
            raise ModelRejectedError("effective modulus is not positive over the calibrated region")
        drop = np.diff(E, axis=0)
        if np.any(drop < -1e-9 * np.abs(E[1:])):
            k, j = np.unravel_index(int(np.argmin(drop)), drop.shape)
            raise ModelRejectedError(
                f"E*(x) decreases between stretch {self.stretches_[k]:g} and {self.stretches_[k + 1]:g} mm "
                f"at diameter {grid[j]:g} mm"
            )

    # queries -------------------------------------------------------------

    def per_stretch_modulus(self, diameter):
        """``E*`` (kPa) at every calibrated stretch for the given diameters."""
        check_is_fitted(self, "curves_")
        d = np.atleast_1d(np.asarray(diameter, float))
        a, b, c = (v[:, None] for v in self.curves_.T)
        return a + b * np.exp(-c * d[None, :])

    def stretch_curve(self, rstar):
        """``(alpha, beta)`` of the logarithmic stretch law for contact radius ``rstar`` (mm)."""
        check_is_fitted(self, "curves_")
        key = round(float(rstar), 9)
        if key not in self.stretch_cache_:
            E = self.per_stretch_modulus(2.0 * key)[:, 0]
            A = np.c_[np.ones_like(self.stretches_), np.log1p(self.stretches_ / self.x_ref)]
            sol = optimize.lsq_linear(A, E, bounds=([-np.inf, 0.0], [np.inf, np.inf]))
            self.stretch_cache_[key] = (float(sol.x[0]), float(sol.x[1]))
        return self.stretch_cache_[key]

    def effective_modulus(self, rstar, stretch_x):
        alpha, beta = self.stretch_curve(rstar)
        E = alpha + beta * np.log1p(np.asarray(stretch_x, float) / self.x_ref)
        return float(E) if np.ndim(E) == 0 else E

    def radius_bounds(self):
        """Smallest and largest contact radius (mm) the guard accepts."""
        check_is_fitted(self, "curves_")
        lo, hi = self.diameter_range_
        return (1.0 - self.diameter_guard) * lo / 2.0, (1.0 + self.diameter_guard) * hi / 2.0

    def check_radius(self, rstar):
        check_is_fitted(self, "curves_")
        lo, hi = self.diameter_range_
        r_lo, r_hi = self.radius_bounds()
        if not r_lo <= rstar <= r_hi:
            d = 2.0 * rstar
            raise RangeError(
                f"contact diameter {d:.3g} mm outside the calibrated range [{lo:g}, {hi:g}] mm "
                f"+/- {self.diameter_guard:.0%}"
            )

    def predict(self, X, guard=True):
        check_is_fitted(self, "curves_")
        X = check_array(X, dtype=float)
        out = np.empty(len(X))
        for k, (x, d, delta) in enumerate(X[:, :3]):
            out[k] = estimate_force(self, d / 2.0, x, delta, guard=guard)
        return out

    def score(self, X, y, sample_weight=None):
        """Negative mean absolute force error (higher is better)."""
        return -float(np.average(np.abs(self.predict(X) - np.asarray(y)), weights=sample_weight))


def estimate_force(model: ModulusModel, rstar, stretch_x, depth, guard=True):
    """Rigid-sphere load estimate ``F*`` (N) from contact radius, stretch and depth (mm)."""
    if guard:
        model.check_radius(rstar)
    if not 0.0 <= depth <= model.max_depth + 1e-9:
        raise RangeError(f"depth {depth} mm outside [0, {model.max_depth}] mm")
    E = model.effective_modulus(rstar, stretch_x)
    if E <= 0:
        raise RangeError(f"effective modulus not positive at stretch {stretch_x} mm")
    return hertz_sphere(depth, rstar, E)


def invert_depth(model: ModulusModel, rstar, stretch_x, force, guard=True):
    """Depth (mm) at which the estimated force equals ``force`` (N)."""
    if force < 0:
        raise RangeError("target force must be non-negative")
    if guard:
        model.check_radius(rstar)
    if force == 0:
        return 0.0
    E = model.effective_modulus(rstar, stretch_x) * KPA / (1.0 - model.poisson**2)
    delta = (3.0 * force / (4.0 * E * math.sqrt(rstar * MM))) ** (2.0 / 3.0) / MM
    if delta > model.max_depth + 1e-9:
        raise RangeError(f"required depth {delta:.3g} mm exceeds {model.max_depth} mm")
    return delta


def loo_validate(X, y, model: ModulusModel | None = None):
    """Leave-one-diameter-out force error.

    Each diameter group is held out in turn; the model is refitted on the
    others and predicts every held-out (stretch, depth) force. Predictions
    on the outermost diameters extrapolate, so the diameter guard is off.

    Returns
    -------
    LOOResult
        Mean and standard deviation of the absolute error (N) over all
        held-out records, and the observed force range.
    """
    X, y = check_X_y(X, y, dtype=float)
    model = ModulusModel() if model is None else model
    groups = X[:, 1]
    if len(np.unique(groups)) < 3:
        raise InsufficientDataError("leave-one-out needs at least 3 diameter groups")
    errors, folds = [], []
    for train, test in LeaveOneGroupOut().split(X, y, groups):
        m = ModulusModel(**model.get_params()).fit(X[train], y[train])
        err = np.abs(m.predict(X[test], guard=False) - y[test])
        errors.append(err)
        folds.append((float(groups[test][0]), float(err.mean())))
    e = np.concatenate(errors)
    return LOOResult(float(e.mean()), float(e.std()), float(y.max() - y.min()), tuple(folds))


# calibration table ---------------------------------------------------------


def _g(v):
    return format(float(v), ".10g")


def write_table(model: ModulusModel, path_or_buf, comments=(), rstars=()):
    """Write the ``STRETCH-CALIB v1`` table; ``rstars`` adds cached stretch curves."""
    check_is_fitted(model, "curves_")
    lines = [f"# {c}" for c in comments]
    lo, hi = model.diameter_range_
    lines.append(CALIB_HEADER)
    lines.append(f"# diameters_mm {_g(lo)} {_g(hi)}")
    for x, (a, b, c), r in zip(model.stretches_, model.curves_, model.rms_):
        lines.append(f"{_g(x)} {_g(a)} {_g(b)} {_g(c)} {_g(r)}")
    for rs in rstars:
        alpha, beta = model.stretch_curve(rs)
        lines.append(f"{_g(rs)} {_g(alpha)} {_g(beta)}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        Path(path_or_buf).write_text(text)
    return text


def read_table(path_or_buf, **params) -> ModulusModel:
    """Rebuild a fitted ``ModulusModel`` from a calibration table."""
    text = path_or_buf.read() if hasattr(path_or_buf, "read") else Path(path_or_buf).read_text()
    header = False
    rows, cache, drange = [], {}, None
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if header and parts[:1] == ["diameters_mm"] and len(parts) == 3:
                drange = (float(parts[1]), float(parts[2]))
            continue
        if not header:
            if line != CALIB_HEADER:
                raise ParseError(f"expected '{CALIB_HEADER}'", lineno)
            header = True
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", lineno) from None
        if len(vals) == 5:
            if cache:
                raise ParseError("stretch rows must precede stretch-curve rows", lineno)
            rows.append(vals)
        elif len(vals) == 3:
            cache[round(vals[0], 9)] = (vals[1], vals[2])
        else:
            raise ParseError(f"expected 5 or 3 fields, got {len(vals)}", lineno)
    if not header:
        raise ParseError("missing header", max(lineno, 1))
    if not rows:
        raise ParseError("no stretch rows", max(lineno, 1))
    model = ModulusModel(**params)
    arr = np.array(rows)
    model.stretches_ = arr[:, 0]
    model.curves_ = arr[:, 1:4]
    model.rms_ = arr[:, 4]
    model.diameter_range_ = drange if drange is not None else (0.0, float("inf"))
    model.stretch_cache_ = dict(cache)
    return model


@lru_cache(maxsize=1)
def default_model() -> ModulusModel:
    """The bundled calibration: spheres of 10 to 30 mm over stretches 0 to 60 mm."""
    with resources.files("stretch.data").joinpath("calibration.txt").open() as fh:
        return read_table(fh)
