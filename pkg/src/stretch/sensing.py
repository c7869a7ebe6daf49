"""Closed-loop observation: simulated camera, segmentation and world heights.

Controllers never read simulator internals; they observe a scene through
``sense``, which renders a frame burst and runs the geometry pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry.cloud import MembraneCloud
from .geometry.patch import ContactPatch
from .geometry.segmenter import MembraneSegmenter
from .sim.scene import DEFAULT_BURST, DEFAULT_NOISE, SceneState, flat_observations, observe
from .sim.sheet import make_sheet

CALIBRATION_STRETCHES = tuple(float(x) for x in range(0, 81, 10))


@dataclass(frozen=True, eq=False)
class Observation:
    """What the hand sees in one pose.

    ``apex`` is the largest membrane deformation (mm, hand frame) and
    ``height`` the world height of the highest contact point, or of the
    apex while no contact patch is found.
    """

    cloud: MembraneCloud
    patch: ContactPatch
    apex: float
    height: float
    pose: np.ndarray

    @property
    def in_contact(self):
        return not self.patch.empty

    def world_points(self):
        R, t = self.pose[:3, :3], self.pose[:3, 3]
        return self.patch.points @ R.T + t


def sense(scene: SceneState, segmenter: MembraneSegmenter, n_frames=DEFAULT_BURST, noise_sigma=DEFAULT_NOISE):
    frame = observe(scene, n_frames, noise_sigma)
    cloud, patch = segmenter.extract(frame)
    pose = scene.pose
    R, t = pose[:3, :3], pose[:3, 3]
    if patch.empty:
        z = cloud.z[cloud.valid]
        apex = float(z.max(initial=0.0))
        top = np.array([0.0, 0.0, apex])
    else:
        k = int(np.argmax(patch.points[:, 2]))
        apex = float(patch.points[k, 2])
        top = patch.points[k]
    height = float((R @ top + t)[2])
    return Observation(cloud, patch, apex, height, pose)


@lru_cache(maxsize=8)
def calibrated_segmenter(stretches=CALIBRATION_STRETCHES, frames=4, seed=0, n_frames=DEFAULT_BURST, **params):
    """Segmenter with curvature thresholds calibrated on flat simulated observations."""
    flats = []
    for k, x in enumerate(stretches):
        flats += flat_observations(make_sheet(x), frames, rng_seed=10_000 + 97 * seed + k, n_frames=n_frames)
    return MembraneSegmenter(**params).fit(flats)
