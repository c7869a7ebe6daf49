"""Stiffness palpation on spring-mounted balloons and a rigid anvil."""
from dataclasses import replace
import io

import numpy as np
import pytest

from stretch.errors import NoObjectError, ParseError, RangeError
from stretch.mechanics.modulus import default_model
from stretch.palpation import PalpationConfig, advance, force_trace, palpate, read_result, write_result
from stretch.scenes import BALLOONS, anvil_scene, balloon_scene
from stretch.sim.objects import LinearSpringBody
from stretch.sim.shapes import rotation_about, rigid_transform


@pytest.fixture(scope="module")
def water():
    return palpate(balloon_scene("water", seed=1), default_model())


@pytest.fixture(scope="module")
def anvil():
    return palpate(anvil_scene(seed=1), default_model(), PalpationConfig(clamp_radius=True))


def test_advance_moves_along_hand_minus_z():
    assert np.allclose(advance(np.eye(4), 3.0)[:3, 3], [0, 0, -3])
    tilted = rigid_transform(rotation_about((1, 0, 0), 90.0), (1.0, 2.0, 3.0))
    moved = advance(tilted, 2.0)
    assert np.allclose(moved[:3, 3], [1.0, 4.0, 3.0])
    assert np.array_equal(moved[:3, :3], tilted[:3, :3])


def test_water_balloon_estimate(water):
    assert not water.too_stiff
    assert water.stiffness == pytest.approx(BALLOONS["water"], rel=0.25)
    assert water.deflection >= 1.5
    assert water.stiffness == pytest.approx(water.F_star / water.deflection)


def test_force_trace_is_monotone(water):
    F = [f for _, _, f in force_trace(water)]
    assert len(F) >= 2 and all(b >= a for a, b in zip(F, F[1:]))
    xs = [x for x, _, _ in force_trace(water)]
    assert all(b >= a for a, b in zip(xs, xs[1:]))


def test_anvil_is_too_stiff(anvil):
    assert anvil.too_stiff
    assert anvil.x == 60.0
    assert anvil.lower_bound == pytest.approx(anvil.F_star / 1.5)
    assert anvil.lower_bound > max(BALLOONS.values())


@pytest.mark.parametrize("fixture", ["water", "anvil"])
def test_result_round_trip(fixture, request):
    est = request.getfixturevalue(fixture)
    text = write_result(est, io.StringIO(), ["run 0"])
    trace, footers = read_result(io.StringIO(text))
    assert len(trace) == len(est.trace)
    assert np.allclose([s.F_star for s in trace], [s.F_star for s in est.trace], rtol=1e-8)
    key = "stiffness_lower_bound_N_per_mm" if est.too_stiff else "stiffness_N_per_mm"
    assert footers[key] == pytest.approx(est.lower_bound if est.too_stiff else est.stiffness)
    assert footers["Rstar_mm"] == pytest.approx(est.R_star, abs=1e-6)


def test_result_parse_errors():
    with pytest.raises(ParseError) as info:
        read_result(io.StringIO("step,x_mm,depth_mm,height_mm,Fstar_N\n0,1,2,3\n"))
    assert info.value.line == 2
    with pytest.raises(ParseError):
        read_result(io.StringIO("Rstar_mm=abc\n"))


def test_empty_scene_has_no_object():
    scene = balloon_scene("air")
    with pytest.raises(NoObjectError):
        palpate(replace(scene, obj=None), default_model(), PalpationConfig(search_depth=1.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"deflection_threshold": 1.0},
        {"stretch_schedule": (0.0, 20.0, 10.0)},
        {"stretch_schedule": (0.0, 70.0)},
        {"max_depth": 16.0},
        {"touch_step": 0.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(RangeError):
        PalpationConfig(**kwargs)


def test_unknown_balloon():
    with pytest.raises(RangeError):
        balloon_scene("helium")
    assert isinstance(balloon_scene(0.3).obj, LinearSpringBody)
