"""Depth-frame to contact-patch pipeline as a scikit-learn transformer."""
from __future__ import annotations

from collections import defaultdict

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import InsufficientDataError, RangeError
from .cloud import FLAT_BAND, Label, MembraneCloud, curvature_signals, estimate_normals, segment, smooth_depth, to_membrane_frame
from .frame import CLAMP_MARGIN, REST_DEPTH, DepthFrame, mask_membrane
from .patch import PLANE_SLACK, ContactPatch, extract_contact


def _as_frames(X):
    if isinstance(X, DepthFrame):
        return [X], True
    frames = list(X)
    for f in frames:
        if not isinstance(f, DepthFrame):
            raise TypeError(f"expected DepthFrame, got {type(f).__name__}")
    return frames, False


class MembraneSegmenter(BaseEstimator, TransformerMixin):
    """Label membrane pixels as undeformed, deformed or in contact.

    ``fit`` calibrates the curvature threshold from frames of the flat,
    unloaded membrane: per stretch state, the threshold is ``margin`` times
    the ``1 - fp_target`` quantile of the larger curvature signal. Between
    calibrated stretch states the threshold is interpolated linearly.

    Parameters
    ----------
    window : int
        Side of the normal-estimation neighbourhood in pixels.
    smooth_sigma : float
        Gaussian pre-smoothing of the depth image in mm; 0 disables it.
    flat_band : float
        Height band (mm) treated as undeformed.
    k_threshold : float or None
        Fixed curvature threshold. ``None`` calibrates it in ``fit``.
    fp_target : float
        Flat-frame tail probability used for calibration.
    margin : float
        Safety factor on the calibrated quantile.
    saddle_ratio : float or None
        Saddle rejection ratio passed to ``segment``.
    rest_depth : float
        Camera depth of the flat membrane in mm.
    crop_margin : float
        Clamp margin removed by ``mask_membrane``; ``None`` skips the crop.
    erosion : int
        Stencil compensation used by contact extraction.
    """

    def __init__(
        self,
        window=5,
        smooth_sigma=0.75,
        flat_band=FLAT_BAND,
        k_threshold=None,
        fp_target=1e-3,
        margin=2.0,
        saddle_ratio=0.0,
        rest_depth=REST_DEPTH,
        crop_margin=CLAMP_MARGIN,
        plane_slack=PLANE_SLACK,
        erosion=2,
    ):
        self.window = window
        self.smooth_sigma = smooth_sigma
        self.flat_band = flat_band
        self.k_threshold = k_threshold
        self.fp_target = fp_target
        self.margin = margin
        self.saddle_ratio = saddle_ratio
        self.rest_depth = rest_depth
        self.crop_margin = crop_margin
        self.plane_slack = plane_slack
        self.erosion = erosion

    def _validate_params(self):
        if self.window < 3 or self.window % 2 == 0:
            raise RangeError("window must be an odd count >= 3")
        if not 0 < self.fp_target < 1:
            raise RangeError("fp_target must lie in (0, 1)")
        if self.margin <= 0:
            raise RangeError("margin must be positive")

    def signals(self, frame: DepthFrame) -> MembraneCloud:
        """Crop, smooth and lift a frame; returns a cloud with normals and curvature."""
        if self.crop_margin is not None:
            frame = mask_membrane(frame, self.crop_margin)
        frame = smooth_depth(frame, self.smooth_sigma)
        cloud = to_membrane_frame(frame, self.rest_depth)
        return curvature_signals(estimate_normals(cloud, self.window))

    def fit(self, X, y=None):
        """Calibrate ``k_threshold_`` from frames of the unloaded membrane."""
        self._validate_params()
        frames, _ = _as_frames(X)
        if self.k_threshold is not None:
            self.stretches_ = np.array([0.0])
            self.thresholds_ = np.array([float(self.k_threshold)])
            return self
        if not frames:
            raise InsufficientDataError("threshold calibration needs at least one flat frame")
        groups = defaultdict(list)
        for f in frames:
            c = self.signals(f)
            groups[round(f.stretch_x, 6)].append(np.maximum(c.k_i, c.k_j)[c.valid])
        xs = sorted(groups)
        thr = [self.margin * float(np.quantile(np.concatenate(groups[x]), 1.0 - self.fp_target)) for x in xs]
        self.stretches_ = np.array(xs, float)
        self.thresholds_ = np.array(thr)
        return self

    def threshold_for(self, stretch_x):
        check_is_fitted(self, "thresholds_")
        return float(np.interp(stretch_x, self.stretches_, self.thresholds_))

    def label(self, frame: DepthFrame) -> MembraneCloud:
        cloud = self.signals(frame)
        thr = self.threshold_for(frame.stretch_x)
        return segment(cloud, thr, self.flat_band, saddle_ratio=self.saddle_ratio)

    def transform(self, X):
        """Labelled clouds for one frame or a sequence of frames."""
        check_is_fitted(self, "thresholds_")
        frames, single = _as_frames(X)
        out = [self.label(f) for f in frames]
        return out[0] if single else out

    def extract(self, frame: DepthFrame) -> tuple[MembraneCloud, ContactPatch]:
        """Labelled cloud and contact patch of one frame."""
        cloud = self.transform(frame)
        return cloud, extract_contact(cloud, self.plane_slack, self.erosion)

    def false_positive_rate(self, frames):
        """Fraction of valid pixels labelled Contact over frames of a flat membrane."""
        hits = total = 0
        for c in self.transform(list(frames)):
            hits += int(np.count_nonzero((c.labels == Label.CONTACT) & c.valid))
            total += int(np.count_nonzero(c.valid))
        return hits / total if total else 0.0
