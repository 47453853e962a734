import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from footnav.errors import LowGravityError, UndefinedHeadingError
from footnav.heading import (
    NO_HEADING,
    HdrState,
    HeadingMeasurement,
    HeadingSource,
    attitude_error_meas,
    circular_mean,
    compass_error_meas,
    compass_heading,
    hdr_measure,
    hdr_update,
    roll_pitch_from_accel,
    select_heading,
)
from footnav.mathcore import rotmat_from_euler, wrap_angle
from footnav.synth import field_from_inclination

from .conftest import random_euler

G = 9.81


def test_roll_pitch_examples():
    assert roll_pitch_from_accel((0, 0, G)) == (0.0, 0.0)
    roll, pitch = 0.3, -0.4
    a = G * np.array([-math.sin(pitch), math.sin(roll) * math.cos(pitch), math.cos(roll) * math.cos(pitch)])
    r, p = roll_pitch_from_accel(a)
    assert r == pytest.approx(roll, abs=1e-12) and p == pytest.approx(pitch, abs=1e-12)
    r, p = roll_pitch_from_accel((0, G, 0))
    assert r == pytest.approx(math.pi / 2) and p == 0.0


def test_roll_pitch_low_gravity():
    with pytest.raises(LowGravityError):
        roll_pitch_from_accel((0, 0, 0.4 * G))


def test_roll_pitch_inverts_gravity_projection(rng):
    for _ in range(1000):
        e = random_euler(rng)
        a = rotmat_from_euler(e).T @ [0, 0, G]
        r, p = roll_pitch_from_accel(a)
        assert r == pytest.approx(e[0], abs=1e-12) and p == pytest.approx(e[1], abs=1e-12)


def test_attitude_error_meas():
    assert attitude_error_meas(0.2, 0.1, 0.2, 0.1) == (0.0, 0.0)
    d_roll, _ = attitude_error_meas(0.1, 0.0, 0.05, 0.0)
    assert d_roll == pytest.approx(0.05)
    d_roll, _ = attitude_error_meas(3.13, 0.0, -3.13, 0.0)
    assert d_roll == pytest.approx(6.26 - 2 * math.pi)


def test_compass_level_north():
    b = field_from_inclination(math.radians(60.0))
    assert compass_heading(b, 0.0, 0.0) == 0.0


def test_compass_round_trip(rng):
    worst = 0.0
    for _ in range(10000):
        roll, pitch, heading = random_euler(rng)
        incl = rng.uniform(-math.radians(80.0), math.radians(80.0))
        ref = np.array(field_from_inclination(incl, rng.uniform(0.2, 2.0)))
        b_body = rotmat_from_euler((roll, pitch, heading)).T @ ref
        psi = compass_heading(b_body, roll, pitch)
        worst = max(worst, abs(wrap_angle(psi - heading)))
        psi_d = compass_heading(b_body, roll, pitch, 0.1)
        assert psi_d == pytest.approx(wrap_angle(psi + 0.1), abs=1e-15)
    assert worst <= 1e-9


def test_compass_eq_components():
    # B_N and B_E written out longhand
    roll, pitch = 0.2, -0.3
    b = np.array([0.4, -0.2, 0.7])
    bn = b[0] * math.cos(pitch) + b[1] * math.sin(pitch) * math.sin(roll) + b[2] * math.cos(roll) * math.sin(pitch)
    be = b[1] * math.cos(roll) - b[2] * math.sin(roll)
    assert compass_heading(b, roll, pitch) == pytest.approx(math.atan2(be, bn), abs=1e-15)


def test_compass_vertical_field():
    with pytest.raises(UndefinedHeadingError):
        compass_heading((0.0, 0.0, 1.0), 0.0, 0.0)


def test_compass_error_meas():
    m = compass_error_meas(0.3, 0.3, 0.01)
    assert m.innovation == 0.0 and m.source is HeadingSource.COMPASS and m.var == 0.01
    assert compass_error_meas(0.2, 0.1, 0.01).innovation == pytest.approx(0.1)
    assert compass_error_meas(-3.1, 3.1, 0.01).innovation == pytest.approx(2 * math.pi - 6.2)


def test_circular_mean_across_seam():
    assert abs(wrap_angle(circular_mean([math.pi - 0.01, -math.pi + 0.01]) - math.pi)) < 1e-12
    vals = [0.1, 0.2, 0.3]
    assert circular_mean(vals) == pytest.approx(0.2, abs=1e-12)


def test_hdr_warmup():
    st0 = HdrState(n=3)
    m, st1 = hdr_update(st0, 0.1)
    assert m.source is HeadingSource.NONE and st1.history == (0.1,)


def test_hdr_examples():
    xi = math.radians(2.0)
    hist = HdrState(n=4, xi=xi, history=(0.0, 0.0, 0.0, 0.0))
    m = hdr_measure(hist, 0.0)
    assert m.innovation == 0.0 and m.source is HeadingSource.HDR
    m = hdr_measure(HdrState(n=4, xi=0.035, history=(0.0,) * 4), 0.01)
    assert m.innovation == pytest.approx(0.01)
    m = hdr_measure(hist, 0.5)
    assert m.innovation == 0.0 and m.source is HeadingSource.HDR and m.var == hist.var
    m = hdr_measure(HdrState(history=(0.0,) * 4, skip_curve=True), 0.5)
    assert m is NO_HEADING


def test_hdr_history_bounded():
    s = HdrState(n=3)
    for k in range(10):
        _, s = hdr_update(s, 0.01 * k)
    assert len(s.history) == 3 and s.history[-1] == pytest.approx(0.09)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(-10, 10))
def test_hdr_never_exceeds_xi(history, psi):
    s = HdrState(n=4, history=tuple(wrap_angle(h) for h in history))
    m = hdr_measure(s, psi)
    assert abs(m.innovation) <= s.xi
    assert -math.pi < m.innovation <= math.pi


def test_select_heading():
    c = HeadingMeasurement(0.1, 0.01, HeadingSource.COMPASS)
    h = HeadingMeasurement(0.02, 0.001, HeadingSource.HDR)
    assert select_heading(1, c, h) is c
    assert select_heading(0, c, h) is h
    assert select_heading(0, c, NO_HEADING) is None
    assert select_heading(1, None, h) is None


def test_measurement_requires_variance():
    with pytest.raises(ValueError):
        HeadingMeasurement(0.0, 0.0, HeadingSource.HDR)
