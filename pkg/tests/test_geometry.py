"""Depth frames, normals, curvature, segmentation and contact patches."""
from dataclasses import replace
import io
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_curvature, brute_normals, disc_mask, smooth_grid
from stretch.errors import DegenerateFitError, InsufficientDataError, ParseError, RangeError
from stretch.geometry.cloud import (
    Label,
    MembraneCloud,
    curvature_signals,
    estimate_normals,
    segment,
    to_membrane_frame,
    write_cloud_csv,
)
from stretch.geometry.frame import DepthFrame, mask_membrane, read_frame, write_frame
from stretch.geometry.patch import ContactPatch, extract_contact, fit_sphere, measure_diameters
from stretch.sensing import calibrated_segmenter


def grid(rows, cols, pitch, fn):
    x = (np.arange(rows) - (rows - 1) / 2) * pitch
    y = (np.arange(cols) - (cols - 1) / 2) * pitch
    X, Y = np.meshgrid(x, y, indexing="ij")
    return np.stack([X, Y, fn(X, Y)], axis=-1)


def sphere_points(rng, n, center, radius, cap=1.0):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[:, 2] = np.abs(v[:, 2]) * cap + (1 - cap)  # keep to one cap when cap < 1
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return center + radius * v


# frames ----------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(
    depth=arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 200)),
    pitch=st.floats(0.1, 2.0),
    stretch=st.floats(0, 80),
)
def test_frame_round_trip(depth, pitch, stretch):
    frame = DepthFrame(np.round(depth, 3), round(pitch, 3), round(pitch, 3), round(stretch, 3), round(90 + stretch, 3))
    back = read_frame(io.StringIO(write_frame(frame, io.StringIO(), ["c"])))
    assert back == frame


@pytest.mark.parametrize("bad", [np.nan, -1.0, 250.0])
def test_frame_rejects_out_of_range_depth(bad):
    with pytest.raises(RangeError):
        DepthFrame(np.array([[1.0, bad]]), 0.5, 0.5)


def test_truncated_frame_reports_line():
    text = write_frame(DepthFrame(np.full((4, 3), 100.0), 0.5, 0.5), io.StringIO(), ["one", "two"])
    cut = "\n".join(text.splitlines()[:-2]) + "\n"
    with pytest.raises(ParseError, match="line 5.*truncated"):
        read_frame(io.StringIO(cut))


@pytest.mark.parametrize(
    "text, line",
    [
        ("STRETCH-DEPTH v2 1 1 500 500 0 90\n1\n", 1),
        ("# c\nSTRETCH-DEPTH v1 1 2 500 500 0 90\n1.0 x\n", 3),
        ("STRETCH-DEPTH v1 1 2 500 500 0 90\n1.0\n", 2),
        ("STRETCH-DEPTH v1 1 1 500 500 0 90\n-3\n", 2),
    ],
)
def test_malformed_frames(text, line):
    with pytest.raises(ParseError) as info:
        read_frame(io.StringIO(text))
    assert info.value.line == line


def test_mask_is_centred_and_checks_throw():
    frame = DepthFrame(np.zeros((200, 180)), 0.5, 0.5, 0.0, 90.0)
    cropped = mask_membrane(frame)
    assert cropped.depth.shape == (180, 160)
    with pytest.raises(RangeError):
        mask_membrane(DepthFrame(np.zeros((4, 4)), 0.5, 0.5, 0.0, 200.0))


# normals and curvature ----------------------------------------------------------


def test_plane_normal_is_exact():
    a, b = 0.3, -0.2
    cloud = estimate_normals(MembraneCloud(grid(12, 10, 0.5, lambda X, Y: a * X + b * Y + 3), 0.5, 0.5), 5)
    expect = np.array([-a, -b, 1.0]) / np.sqrt(a * a + b * b + 1)
    assert np.allclose(cloud.normals, expect, atol=1e-12)
    assert not cloud.degenerate.any()


def test_collinear_window_falls_back_to_up():
    pts = grid(6, 6, 0.5, lambda X, Y: 0.5 * X)
    pts[..., 1] = 0.0  # every column collapses onto one line
    cloud = estimate_normals(MembraneCloud(pts, 0.5, 0.5), 3)
    assert cloud.degenerate.all()
    assert np.array_equal(cloud.normals, np.broadcast_to([0.0, 0.0, 1.0], pts.shape))


def test_curvature_matches_brute_force(rng):
    P = smooth_grid(rng, 16, 14)
    for w in (3, 5):
        cloud = curvature_signals(estimate_normals(MembraneCloud(P, 0.5, 0.5), w))
        assert np.allclose(cloud.normals, brute_normals(P, w), atol=1e-10)
        ki, kj = brute_curvature(P, brute_normals(P, w))
        assert np.allclose(cloud.k_i, ki, atol=1e-10) and np.allclose(cloud.k_j, kj, atol=1e-10)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_curvature_sign_follows_convexity(sign):
    R = 20.0
    P = grid(21, 21, 0.5, lambda X, Y: sign * (np.sqrt(R * R - X * X - Y * Y) - R))
    c = curvature_signals(estimate_normals(MembraneCloud(P, 0.5, 0.5), 3))
    inner = c.valid
    assert np.all(sign * c.k_i[inner] > 0) and np.all(sign * c.k_j[inner] > 0)
    # |dp|^2 / R for a 1 mm chord
    assert np.allclose(sign * c.k_i[10, 10], 1.0 / R, rtol=0.02)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_segment_is_a_partition(seed):
    rng = np.random.default_rng(seed)
    c = curvature_signals(estimate_normals(MembraneCloud(smooth_grid(rng, 12, 10), 0.5, 0.5), 3))
    thr = rng.uniform(0.0, 0.2)
    lab = segment(c, thr).labels
    assert set(np.unique(lab)) <= {int(v) for v in Label}
    assert np.all(lab[~c.valid] == Label.UNDEFORMED)
    assert np.all(lab[np.abs(c.z) < 1.0] == Label.UNDEFORMED)
    contact = lab == Label.CONTACT
    assert np.all(np.maximum(c.k_i, c.k_j)[contact] > thr)
    # the saddle rule only ever removes contact pixels
    strict = segment(c, thr, saddle_ratio=0.0).labels == Label.CONTACT
    assert np.all(contact[strict])


def test_saddle_rule():
    c = MembraneCloud(grid(3, 3, 1.0, lambda X, Y: np.full(X.shape, 5.0)), 1.0, 1.0)
    c = curvature_signals(estimate_normals(c, 3))
    k_i = np.full((3, 3), 0.5)
    k_j = np.full((3, 3), -0.1)
    c = replace(c, k_i=k_i, k_j=k_j)
    assert segment(c, 0.2).labels[1, 1] == Label.CONTACT
    assert segment(c, 0.2, saddle_ratio=0.3).labels[1, 1] == Label.CONTACT
    assert segment(c, 0.2, saddle_ratio=0.1).labels[1, 1] == Label.DEFORMED_NO_CONTACT


# contact patches ----------------------------------------------------------------


def plateau_cloud(n=30, radius=8.0, height=5.0):
    """Flat-topped bump whose contact labels cover only the rim of the top face."""
    top = disc_mask(n, radius)
    z = np.where(top, height, 2.0)
    pts = grid(n, n, 1.0, lambda X, Y: z)
    labels = np.full((n, n), Label.DEFORMED_NO_CONTACT, np.int8)
    rim = top & ~disc_mask(n, radius - 1.5)
    labels[rim] = Label.CONTACT
    labels[0, :] = labels[-1, :] = labels[:, 0] = labels[:, -1] = Label.UNDEFORMED
    return replace(MembraneCloud(pts, 1.0, 1.0), labels=labels), top


def test_above_plane_rule_fills_flat_face():
    cloud, top = plateau_cloud()
    patch = extract_contact(cloud, erosion=0)
    assert np.array_equal(patch.mask, top)
    assert patch.points.shape == (top.sum(), 3)
    assert np.allclose(patch.points[:, 2], 5.0)


def test_erosion_peels_along_axes():
    cloud, top = plateau_cloud()
    p0 = extract_contact(cloud, erosion=0)
    p2 = extract_contact(cloud, erosion=2)
    assert p2.mask.sum() < p0.mask.sum() and np.all(p0.mask[p2.mask])
    assert measure_diameters(p0)[0] - measure_diameters(p2)[0] == pytest.approx(4.0)


def test_no_contact_gives_empty_patch():
    cloud, _ = plateau_cloud()
    labels = np.where(cloud.labels == Label.CONTACT, Label.DEFORMED_NO_CONTACT, cloud.labels)
    patch = extract_contact(replace(cloud, labels=labels))
    assert patch.empty and patch.size == 0 and patch.extents == (0.0, 0.0)
    with pytest.raises(InsufficientDataError):
        measure_diameters(patch)


def test_secondary_components_are_ordered():
    cloud, _ = plateau_cloud()
    labels = cloud.labels.copy()
    labels[2:5, 2:5] = Label.CONTACT
    labels[2:4, 24:26] = Label.CONTACT
    z = cloud.points.copy()
    z[2:5, 2:5, 2] = z[2:4, 24:26, 2] = 9.0
    patch = extract_contact(replace(cloud, labels=labels, points=z), erosion=0)
    sizes = [m.sum() for m in patch.secondary]
    assert patch.size >= max(sizes) and sizes == sorted(sizes, reverse=True)


@pytest.mark.parametrize("radius", [5.0, 9.5, 14.0])
def test_disc_diameters(radius):
    n = 41
    mask = disc_mask(n, radius)
    patch = ContactPatch(mask, np.zeros((mask.sum(), 3)), 0.5, 0.75)
    d_i, d_j = measure_diameters(patch)
    cells = 2 * int(np.floor(radius)) + 1
    assert d_i == pytest.approx(cells * 0.5) and d_j == pytest.approx(cells * 0.75)


def test_sphere_fit_recovers_cap(rng):
    pts = sphere_points(rng, 300, np.array([1.0, -2.0, -5.0]), 12.0, cap=0.3)
    fit = fit_sphere(pts)
    assert fit.radius == pytest.approx(12.0, rel=1e-9)
    assert np.allclose(fit.center, [1.0, -2.0, -5.0], atol=1e-8)
    assert fit.rms < 1e-9


@settings(max_examples=25, deadline=None)
@given(shift=arrays(float, 3, elements=st.floats(-100, 100)), seed=st.integers(0, 1000))
def test_sphere_fit_translation_invariant(shift, seed):
    rng = np.random.default_rng(seed)
    pts = sphere_points(rng, 60, np.zeros(3), 10.0, cap=0.5) + 0.01 * rng.standard_normal((60, 3))
    a, b = fit_sphere(pts), fit_sphere(pts + shift)
    assert b.radius == pytest.approx(a.radius, rel=1e-6)
    assert np.allclose(b.center - shift, a.center, atol=1e-5)


def test_sphere_fit_degenerate_inputs(rng):
    with pytest.raises(InsufficientDataError):
        fit_sphere(rng.standard_normal((9, 3)))
    flat = np.c_[rng.standard_normal((50, 2)), np.zeros(50)]
    with pytest.raises(DegenerateFitError):
        fit_sphere(flat)


def test_cloud_csv_has_one_row_per_pixel():
    cloud, _ = plateau_cloud(8, 2.5)
    cloud = curvature_signals(estimate_normals(cloud, 3))
    text = write_cloud_csv(cloud, io.StringIO(), ["hdr"])
    lines = text.splitlines()
    assert lines[0] == "# hdr" and lines[1].startswith("i,j,x_mm")
    assert len(lines) == 2 + 64
    assert lines[2].endswith("undeformed")


def test_to_membrane_frame_flips_depth():
    frame = DepthFrame(np.array([[100.0, 97.5]]), 0.5, 0.5)
    cloud = to_membrane_frame(frame, 100.0)
    assert np.allclose(cloud.z, [[0.0, 2.5]])
    with pytest.raises(RangeError):
        to_membrane_frame(frame, 0.0)


# bundled fixtures through the full pipeline ---------------------------------------


def load_fixture(name):
    with resources.files("stretch.data").joinpath(name).open() as fh:
        return read_frame(fh)


def test_fixture_cylinder_diameter():
    frame = load_fixture("cylinder20_frame.txt")
    _, patch = calibrated_segmenter().extract(frame)
    d_i, d_j = measure_diameters(patch)
    assert abs(d_i - 20.0) <= 1.0 and abs(d_j - 20.0) <= 1.0
    assert not patch.secondary


def test_fixture_flat_has_no_contact():
    seg = calibrated_segmenter()
    frame = load_fixture("flat_frame.txt")
    _, patch = seg.extract(frame)
    assert patch.empty
    assert seg.false_positive_rate([frame]) < 1e-3


def test_thresholds_grow_with_stretch():
    seg = calibrated_segmenter()
    assert np.all(np.diff(seg.thresholds_) > 0)
    assert seg.threshold_for(5.0) == pytest.approx(np.mean(seg.thresholds_[:2]))
