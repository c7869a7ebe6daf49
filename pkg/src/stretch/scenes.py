"""Ready-made simulated scenes for palpation, shaping and reconstruction.

Every factory takes a ``seed`` that sets the camera noise stream and,
where noted, small perturbations of the object itself. Lengths are in mm,
world z = 0 is the table.
"""
from __future__ import annotations

import numpy as np

from .errors import RangeError
from .sim.objects import LinearSpringBody, dough_cube
from .sim.scene import SceneState, hand_pose_at
from .sim.shapes import Box, Placed, Sphere, Torus, rigid_transform, rotation_about
from .sim.sheet import make_sheet

#: spring constants (N/mm) of the balloon stand-ins, softest first
BALLOONS = {"air": 0.05, "water": 0.15, "pudding": 0.4, "seeds": 1.0}
BALLOON_RADIUS = 15.0
BALLOON_TOP = 50.0
STANDOFF = 0.75  # start gap between membrane and object top
SHAPING_YIELD = 1.0  # kPa
PAPER_YIELD = 1.5  # kPa
CUBE_SIDE = 40.0
WIRE_RING_DIAMETER = 45.0
WIRE_DIAMETER = 1.5


def balloon_scene(kind="air", seed=0, radius=BALLOON_RADIUS, top=BALLOON_TOP):
    """Spring-mounted spherical cap; ``kind`` is a name from ``BALLOONS`` or a constant in N/mm."""
    if isinstance(kind, str) and kind not in BALLOONS:
        raise RangeError(f"unknown balloon {kind!r}; choose from {sorted(BALLOONS)}")
    k = BALLOONS[kind] if isinstance(kind, str) else float(kind)
    body = LinearSpringBody(Sphere(radius), k, rigid_transform(translation=(0.0, 0.0, top)))
    return SceneState(make_sheet(0.0), body, hand_pose_at(0.0, 0.0, top + STANDOFF), rng_seed=int(seed))


def anvil_scene(seed=0, side=60.0, height=40.0):
    """Rigid block that no stretch state can dent."""
    block = Placed(Box(side, side, height), rigid_transform(translation=(0.0, 0.0, height)))
    return SceneState(make_sheet(0.0), block, hand_pose_at(0.0, 0.0, height + STANDOFF), rng_seed=int(seed))


def dough_scene(seed=0, side=CUBE_SIDE, yield_pressure=SHAPING_YIELD, jitter=True):
    """Dough cube on the table.

    With ``jitter`` the seed also perturbs the side by up to 1 mm and the
    placement by up to 2 mm, so seeded runs see different cubes.
    """
    rng = np.random.default_rng([int(seed), 7])
    centre = (0.0, 0.0)
    if jitter:
        side = side + rng.uniform(-1.0, 1.0)
        centre = tuple(rng.uniform(-2.0, 2.0, size=2))
    dough = dough_cube(side, yield_pressure=yield_pressure, center=centre)
    top = dough.max_height
    return SceneState(make_sheet(0.0), dough, hand_pose_at(0.0, 0.0, top + STANDOFF), rng_seed=int(seed))


def paper_cube_scene(seed=0, side=CUBE_SIDE):
    """Crushable cube: dough with a low yield pressure and no jitter."""
    return dough_scene(seed, side, PAPER_YIELD, jitter=False)


def cube_scene(seed=0, side=CUBE_SIDE):
    """Rigid cube standing on the table."""
    cube = Placed(Box(side, side, side), rigid_transform(translation=(0.0, 0.0, side)))
    return SceneState(make_sheet(0.0), cube, hand_pose_at(0.0, 0.0, side + STANDOFF), rng_seed=int(seed))


def wire_scene(seed=0, ring_diameter=WIRE_RING_DIAMETER, wire_diameter=WIRE_DIAMETER):
    """Wire ring lying flat on the table."""
    ring = Torus(ring_diameter / 2.0, wire_diameter / 2.0)
    placed = Placed(ring, rigid_transform(translation=(0.0, 0.0, wire_diameter)))
    return SceneState(make_sheet(0.0), placed, hand_pose_at(0.0, 0.0, wire_diameter + STANDOFF), rng_seed=int(seed))


def side_view(direction, centre, standoff):
    """Hand pose facing ``centre`` horizontally from ``direction`` ('+x', '-x', '+y' or '-y').

    The hand's approach axis (-Z) points at the object; its origin sits
    ``standoff`` mm from ``centre`` along ``direction``.
    """
    axes = {"+x": ((0, 1, 0), 90.0), "-x": ((0, 1, 0), -90.0), "+y": ((1, 0, 0), -90.0), "-y": ((1, 0, 0), 90.0)}
    if direction not in axes:
        raise RangeError(f"unknown view direction {direction!r}")
    axis, angle = axes[direction]
    R = rotation_about(axis, angle)
    c = np.asarray(centre, float)
    return rigid_transform(R, c + standoff * R[:, 2])


def top_view(centre, standoff):
    c = np.asarray(centre, float)
    return hand_pose_at(c[0], c[1], c[2] + standoff)


def cube_views(side=CUBE_SIDE, gap=STANDOFF):
    """Top view plus the four side views of a cube centred on the table origin."""
    h = side / 2.0
    views = [top_view((0.0, 0.0, side), gap)]
    views += [side_view(d, (0.0, 0.0, h), h + gap) for d in ("+x", "-x", "+y", "-y")]
    return views


def wire_views(offset=25.0, height=WIRE_DIAMETER + STANDOFF):
    """Four top-down views over the ring at (+-offset, 0) and (0, +-offset)."""
    return [hand_pose_at(x, y, height) for x, y in ((offset, 0.0), (-offset, 0.0), (0.0, offset), (0.0, -offset))]
