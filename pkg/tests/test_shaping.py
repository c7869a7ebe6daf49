"""Dough shaping: the height monitor, scoring, flattening and stiffness selection."""
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import disc_mask
from stretch.errors import InputError, NoObjectError, RangeError
from stretch.geometry.frame import read_frame
from stretch.mechanics.modulus import default_model
from stretch.scenes import SHAPING_YIELD, anvil_scene, dough_scene
from stretch.shaping import (
    HeightMonitor,
    RollResult,
    ShapingConfig,
    flatten,
    score_cookie,
    score_mask,
    select_roll_stiffness,
    shape_dough,
    silhouette,
    write_dough,
    write_run_log,
)


# height monitor ---------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=1, max_size=30), st.integers(2, 12), st.floats(0.1, 5.0))
def test_monitor_matches_window_std(heights, window, threshold):
    m = HeightMonitor(window, threshold)
    for k, h in enumerate(heights, start=1):
        m.push(h)
        if k < window:
            assert not m.full and np.isnan(m.std) and not m.settled
        else:
            ref = float(np.std(heights[k - window : k]))
            assert m.std == pytest.approx(ref, abs=1e-9)
            assert m.settled == (m.std < threshold)


def test_monitor_needs_exactly_window_samples():
    m = HeightMonitor(10, 1.0)
    for _ in range(9):
        m.push(5.0)
    assert not m.settled
    m.push(5.0)
    assert m.settled and m.std == 0.0


# scoring ------------------------------------------------------------------------------


def test_square_circularity():
    s = score_mask(np.pad(np.ones((60, 60), bool), 5))
    assert s.area == 3600.0
    assert s.circularity == pytest.approx(np.pi / 4, abs=0.02)


@pytest.mark.parametrize("radius", [15.0, 25.0, 40.0])
def test_disc_circularity(radius):
    s = score_mask(disc_mask(int(2 * radius) + 11, radius))
    assert 0.95 <= s.circularity <= 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_circularity_invariant_under_quarter_turns(seed):
    rng = np.random.default_rng(seed)
    mask = np.zeros((40, 40), bool)
    mask[5:35, 5:35] = rng.uniform(size=(30, 30)) < 0.9
    base = score_mask(mask)
    for k in (1, 2, 3):
        turned = score_mask(np.rot90(mask, k))
        assert turned.area == base.area
        assert abs(turned.circularity - base.circularity) < 1e-3


def test_cell_size_scales_area_and_perimeter():
    mask = disc_mask(41, 15.0)
    a, b = score_mask(mask), score_mask(mask, cell=2.0)
    assert b.area == 4 * a.area and b.perimeter == pytest.approx(2 * a.perimeter)
    assert b.circularity == pytest.approx(a.circularity)


def test_empty_silhouette():
    with pytest.raises(NoObjectError):
        silhouette(np.zeros((5, 5)))
    with pytest.raises(NoObjectError):
        score_mask(np.zeros((5, 5), bool))
    assert silhouette(np.array([[0.5, 1.0, 10.0]])).tolist() == [[False, False, True]]


# flattening ----------------------------------------------------------------------------


def test_flatten_is_idempotent_and_conserves_volume():
    scene = dough_scene(seed=0, jitter=False)
    v0 = scene.obj.volume
    once = flatten(scene, 20.0, centre=(0.0, 0.0))
    twice = flatten(once, 20.0, centre=(0.0, 0.0))
    assert once.obj.max_height < 40.0
    assert once.obj.volume == pytest.approx(v0, rel=1e-9)
    assert np.allclose(twice.obj.heights, once.obj.heights, atol=0.05)
    assert score_cookie(once).area > score_cookie(scene).area


def test_config_rejects_overstretch():
    with pytest.raises(RangeError):
        ShapingConfig(flatten_stretch=90.0)
    with pytest.raises(RangeError):
        ShapingConfig(height_window=1)


def test_shaping_needs_dough():
    with pytest.raises(InputError):
        shape_dough(anvil_scene())


# stiffness selection -------------------------------------------------------------------


def test_softer_dough_yields_before_stiffer_dough():
    model = default_model()
    soft = select_roll_stiffness(dough_scene(seed=0, yield_pressure=SHAPING_YIELD, jitter=False), model)
    assert not soft.estimate.too_stiff
    assert soft.x < 60.0 and soft.depth > 0
    assert soft.plane == pytest.approx(soft.top_height - soft.depth)
    # a 3 kPa dough never dents within the schedule, so shaping aborts at the last stretch
    res = shape_dough(dough_scene(seed=0, yield_pressure=3.0, jitter=False), model)
    assert res.aborted is not None and res.aborted.x == 60.0 > soft.x
    assert not res.ok and res.roll is None and res.score is None


# files ----------------------------------------------------------------------------------


def test_run_log_and_dough_files():
    roll = RollResult(None, 3, (30.0, 29.5, 29.4), (float("nan"), float("nan"), 0.25), True, 25.0)
    text = write_run_log(roll, io.StringIO(), ["seed 0"], score_mask(disc_mask(31, 12.0), roll_steps=3))
    lines = text.splitlines()
    assert lines[:3] == ["# seed 0", "step,height_mm,std_mm", "1,30.000000,"]
    assert lines[4] == "3,29.400000,0.250000"
    assert lines[5] == "area_mm2,perimeter_mm,circularity,steps" and lines[6].endswith(",3")
    dough = dough_scene(seed=2).obj
    frame = read_frame(io.StringIO(write_dough(dough, io.StringIO())))
    assert frame.depth.sum() == pytest.approx(dough.heights.sum(), rel=1e-4)
