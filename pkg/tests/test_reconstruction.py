"""World-frame fusion, extents and cloud files."""
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stretch.errors import InputError, InsufficientDataError, ParseError
from stretch.reconstruction import (
    WorldCloud,
    check_rigid,
    fit_circle,
    measure_extent,
    merge,
    patch_to_world,
    read_cloud,
    ring_radius,
    scan,
    write_cloud,
)
from stretch.scenes import CUBE_SIDE, STANDOFF, cube_scene, top_view
from stretch.sim.shapes import rigid_transform, rotation_about

unit = st.floats(-1, 1)


def random_pose(axis, angle, t):
    if not np.linalg.norm(axis) > 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    return rigid_transform(rotation_about(axis, angle), t)


poses = st.builds(
    random_pose,
    arrays(float, 3, elements=unit),
    st.floats(-180, 180),
    arrays(float, 3, elements=st.floats(-100, 100)),
)


def test_identity_and_translation():
    pts = np.array([[1.0, 2.0, 3.0], [-4.0, 0.5, 0.0]])
    assert np.array_equal(patch_to_world(pts, np.eye(4)), pts)
    T = rigid_transform(translation=(50.0, 0.0, 0.0))
    assert np.allclose(patch_to_world(pts, T), pts + [50.0, 0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(pose=poses, seed=st.integers(0, 1000))
def test_world_mapping_is_rigid(pose, seed):
    pts = np.random.default_rng(seed).uniform(-20, 20, (12, 3))
    w = patch_to_world(pts, pose)
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(w[:, None] - w[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-9)


@pytest.mark.parametrize(
    "bad",
    [
        np.diag([2.0, 1.0, 1.0, 1.0]),  # scaling
        np.diag([-1.0, 1.0, 1.0, 1.0]),  # reflection
        np.eye(3),
        np.r_[np.eye(4)[:3], [[0.0, 0.0, 1.0, 1.0]]],
        np.full((4, 4), np.nan),
    ],
)
def test_non_rigid_poses_rejected(bad):
    with pytest.raises(InputError):
        check_rigid(bad)


def test_merge_empty_dedup_and_order():
    c = WorldCloud()
    assert merge(c, np.zeros((0, 3))) is c
    c = merge(c, [[0.1, 0.1, 0.1], [5.0, 0.0, 0.0]], contact_id=1, pose_id=7)
    c = merge(c, [[0.2, 0.2, 0.2], [-3.0, 0.0, 0.0]], contact_id=2, pose_id=8)
    # the second point of the first voxel is dropped; first-seen order is kept
    assert np.allclose(c.points, [[0.1, 0.1, 0.1], [5.0, 0.0, 0.0], [-3.0, 0.0, 0.0]])
    assert c.contact_ids.tolist() == [1, 1, 2] and c.pose_ids.tolist() == [7, 7, 8]
    assert len(c) == 3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000))
def test_merge_keeps_one_point_per_voxel(seed):
    rng = np.random.default_rng(seed)
    c = WorldCloud(voxel=1.0)
    for k in range(3):
        c = c.merge(rng.uniform(-3, 3, (40, 3)), contact_id=k)
    keys = np.floor(c.points / 1.0)
    assert len(np.unique(keys, axis=0)) == len(c)
    assert c.merge(c.points).points.shape == c.points.shape


def test_cloud_validation():
    with pytest.raises(InputError):
        WorldCloud(np.zeros((2, 3)), [0], [0, 0])
    with pytest.raises(InputError):
        WorldCloud(voxel=0.0)


def test_extent_of_grid():
    g = np.stack(np.meshgrid(*(np.linspace(0, 40, 41),) * 3, indexing="ij"), -1).reshape(-1, 3)
    assert measure_extent(g, (1, 0, 0), trim=(0, 100)) == pytest.approx(40.0)
    assert measure_extent(g, (0, 0, 3), trim=(0, 100)) == pytest.approx(40.0)
    line = np.c_[np.linspace(0, 40, 4001), np.zeros((4001, 2))]
    assert measure_extent(line, (1, 0, 0)) == pytest.approx(39.2)  # 1st to 99th percentile
    with pytest.raises(InputError):
        measure_extent(g, (0, 0, 0))
    with pytest.raises(InsufficientDataError):
        measure_extent(g[:1], (1, 0, 0))


@settings(max_examples=40, deadline=None)
@given(pose=poses, axis=arrays(float, 3, elements=unit), seed=st.integers(0, 1000))
def test_extent_is_rigid_invariant(pose, axis, seed):
    if not np.linalg.norm(axis) > 1e-3:
        axis = np.array([1.0, 0.0, 0.0])
    pts = np.random.default_rng(seed).normal(0, 10, (200, 3))
    moved = patch_to_world(pts, pose)
    a = measure_extent(pts, axis)
    b = measure_extent(moved, pose[:3, :3] @ axis)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_ring_radius_and_circle_fit(rng):
    t = rng.uniform(0, 2 * np.pi, 2000)
    r = 22.5 + rng.uniform(-0.75, 0.75, t.size)
    pts = np.c_[r * np.cos(t) + 3.0, r * np.sin(t) - 1.0, np.zeros(t.size)]
    assert ring_radius(pts, trim=(0, 100)) == pytest.approx(23.25, abs=0.1)
    fit = fit_circle(pts)
    assert fit.radius == pytest.approx(22.5, abs=0.05)
    assert np.allclose(fit.center, [3.0, -1.0], atol=0.05)
    with pytest.raises(InsufficientDataError):
        fit_circle(pts[:2])


def test_cloud_file_round_trip():
    c = WorldCloud().merge([[1.25, -2.5, 3.0], [10.0, 0.0, 0.0]], contact_id=3, pose_id=4)
    text = write_cloud(c, io.StringIO(), ["scene cube"])
    back = read_cloud(io.StringIO(text))
    assert np.allclose(back.points, c.points)
    assert back.contact_ids.tolist() == [3, 3] and back.pose_ids.tolist() == [4, 4]
    with pytest.raises(ParseError) as info:
        read_cloud(io.StringIO("# c\n1 2 3 0\n"))
    assert info.value.line == 2


def test_top_scan_of_cube():
    cloud, _ = scan(cube_scene(seed=3), [top_view((0.0, 0.0, CUBE_SIDE), STANDOFF)], depth=8.0)
    assert len(cloud) > 100
    z = cloud.points[:, 2]
    assert np.percentile(z, 50) == pytest.approx(CUBE_SIDE, abs=1.0)
    assert np.all(np.abs(cloud.points[:, :2]) <= CUBE_SIDE / 2 + 2.0)
    assert set(cloud.pose_ids.tolist()) == {0}
