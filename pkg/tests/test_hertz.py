import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stretch.errors import RangeError
from stretch.mechanics.hertz import (
    HertzParams,
    hertz_cone,
    hertz_cylinder,
    hertz_force,
    hertz_slope,
    hertz_sphere,
    unit_force,
)

mp.mp.dps = 40


def mp_sphere(d, R, E, v=0.5, Eo=None, vo=0.5):
    d, R, E = mp.mpf(d) / 1000, mp.mpf(R) / 1000, mp.mpf(E) * 1000
    c = (1 - mp.mpf(v) ** 2) / E
    if Eo is not None:
        c += (1 - mp.mpf(vo) ** 2) / (mp.mpf(Eo) * 1000)
    return mp.mpf(4) / 3 * mp.sqrt(d**3 * R) / c


def mp_cylinder(d, R, E):
    return 2 * (mp.mpf(R) / 1000) * (mp.mpf(d) / 1000) * mp.mpf(E) * 1000


def mp_cone(d, theta, E, v=0.5):
    d, E = mp.mpf(d) / 1000, mp.mpf(E) * 1000
    return 2 * d**2 * E / (mp.pi * (1 - mp.mpf(v) ** 2) * mp.tan(mp.radians(theta)))


def rel(a, b):
    return abs(a - float(b)) / abs(float(b))


def test_sphere_matches_high_precision(rng):
    for _ in range(200):
        d, R, E = rng.uniform(0.1, 15), rng.uniform(2, 20), rng.uniform(1, 20)
        assert rel(hertz_sphere(d, R, E), mp_sphere(d, R, E)) < 1e-12


def test_elastic_sphere_matches_high_precision(rng):
    for _ in range(100):
        d, R, E, Eo = rng.uniform(0.1, 15), rng.uniform(2, 20), rng.uniform(1, 20), rng.uniform(1, 100)
        got = hertz_sphere(d, R, HertzParams(E, 0.5, Eo, 0.3))
        assert rel(got, mp_sphere(d, R, E, 0.5, Eo, 0.3)) < 1e-12


def test_cylinder_and_cone_match_high_precision(rng):
    for _ in range(200):
        d, R, E, th = rng.uniform(0.1, 15), rng.uniform(2, 20), rng.uniform(1, 20), rng.uniform(5, 85)
        assert rel(hertz_cylinder(d, R, E), mp_cylinder(d, R, E)) < 1e-12
        assert rel(hertz_cone(d, th, E), mp_cone(d, th, E)) < 1e-12


def test_zero_depth_gives_zero_force():
    assert hertz_sphere(0.0, 10.0, 4.0) == 0.0
    assert hertz_cylinder(0.0, 10.0, 4.0) == 0.0
    assert hertz_cone(0.0, 45.0, 4.0) == 0.0


def test_known_value_sphere():
    # 4/3 * sqrt((1e-3)^3 * 1e-2) * 4000 / 0.75
    assert hertz_sphere(1.0, 10.0, 4.0) == pytest.approx(4 / 3 * math.sqrt(1e-11) * 4000 / 0.75, rel=1e-14)


def test_dispatch_uses_diameter():
    assert hertz_force("sphere", 3.0, 20.0, 5.0) == hertz_sphere(3.0, 10.0, 5.0)
    assert hertz_force("cylinder", 3.0, 20.0, 5.0) == hertz_cylinder(3.0, 10.0, 5.0)
    assert hertz_force("cone", 3.0, 45.0, 5.0) == hertz_cone(3.0, 45.0, 5.0)
    with pytest.raises(RangeError):
        hertz_force("torus", 1.0, 1.0, 1.0)


@pytest.mark.parametrize(
    "call",
    [
        lambda: hertz_sphere(-1.0, 10.0, 4.0),
        lambda: hertz_sphere(1.0, 0.0, 4.0),
        lambda: hertz_cone(1.0, 90.0, 4.0),
        lambda: hertz_cone(1.0, 0.0, 4.0),
        lambda: HertzParams(0.0),
        lambda: HertzParams(4.0, v=0.6),
        lambda: hertz_sphere(float("nan"), 10.0, 4.0),
    ],
)
def test_invalid_inputs_raise(call):
    with pytest.raises(RangeError):
        call()


@given(st.floats(0.01, 15), st.floats(1, 30), st.floats(0.5, 50))
def test_sphere_doubling_law(d, R, E):
    assert hertz_sphere(2 * d, R, E) / hertz_sphere(d, R, E) == pytest.approx(2**1.5, rel=1e-12)


@given(st.floats(0.01, 15), st.floats(1, 30), st.floats(0.5, 50), st.floats(0.1, 10))
def test_linear_in_modulus(d, R, E, s):
    for f in (hertz_sphere, hertz_cylinder):
        assert f(d, R, s * E) == pytest.approx(s * f(d, R, E), rel=1e-12)
    assert hertz_cone(d, 40.0, s * E) == pytest.approx(s * hertz_cone(d, 40.0, E), rel=1e-12)


@given(st.floats(0.0, 14.0), st.floats(0.01, 1.0), st.sampled_from(["sphere", "cylinder", "cone"]))
def test_strictly_increasing_in_depth(d, step, geom):
    param = 45.0 if geom == "cone" else 20.0
    assert hertz_force(geom, d + step, param, 4.0) > hertz_force(geom, d, param, 4.0)


@settings(max_examples=100)
@given(st.sampled_from(["sphere", "cylinder", "cone"]), st.floats(1.0, 14.0), st.floats(10.0, 30.0), st.floats(1, 20))
def test_slope_matches_central_difference(geom, d, p, E):
    param = 45.0 if geom == "cone" else p
    h = 1e-5
    fd = (hertz_force(geom, d + h, param, E) - hertz_force(geom, d - h, param, E)) / (2 * h)
    assert hertz_slope(geom, d, param, E) == pytest.approx(fd, rel=1e-6)


def test_unit_force_scales_to_force():
    assert unit_force("sphere", 5.0, 20.0) * 7.0 == pytest.approx(hertz_force("sphere", 5.0, 20.0, 7.0), rel=1e-14)


def test_vectorised_depths():
    d = np.array([0.0, 1.0, 4.0])
    F = hertz_sphere(d, 10.0, 4.0)
    assert F.shape == (3,)
    assert F[2] / F[1] == pytest.approx(8.0, rel=1e-12)
