import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from footnav import _kernels, ekf
from footnav.errors import NoMeasurementError, NumericalError
from footnav.heading import HeadingMeasurement, HeadingSource
from footnav.ins import NavState, propagate
from footnav.mathcore import (
    EulerAngles,
    euler_error_jacobian,
    euler_from_quat,
    euler_from_rotmat,
    quat_from_euler,
    quat_to_rotmat,
    rodrigues,
    rotmat_to_quat,
    rotvec_from_quat,
    skew3,
)

from .conftest import random_quat

G = 9.81
LEVEL = EulerAngles(0.0, 0.0, 0.0)


def random_psd(rng, n=15, scale=1.0):
    A = rng.normal(size=(n, n)) * scale
    return A @ A.T + 1e-6 * np.eye(n)


def perturbed(state: NavState, dx) -> NavState:
    """The estimate whose error relative to ``state`` is ``dx``."""
    C = rodrigues(dx[ekf.ATT]) @ quat_to_rotmat(state.q)
    return NavState(
        rotmat_to_quat(C),
        state.v + dx[ekf.VEL],
        state.r + dx[ekf.POS],
        state.bg - dx[ekf.BG],
        state.ba - dx[ekf.BA],
        state.t,
    )


def error_between(est: NavState, truth: NavState) -> np.ndarray:
    dx = np.zeros(15)
    C_err = quat_to_rotmat(est.q) @ quat_to_rotmat(truth.q).T
    dx[ekf.ATT] = rotvec_from_quat(rotmat_to_quat(C_err))
    dx[ekf.VEL] = est.v - truth.v
    dx[ekf.POS] = est.r - truth.r
    dx[ekf.BG] = truth.bg - est.bg
    dx[ekf.BA] = truth.ba - est.ba
    return dx


# --- transition -------------------------------------------------------------


def test_phi_dt_zero_is_identity(rng):
    st_ = NavState(q=random_quat(rng))
    assert np.array_equal(ekf.build_phi(st_, rng.normal(size=3), 0.0), np.eye(15))


def test_phi_gravity_block():
    phi = ekf.build_phi(NavState(), np.array([0.0, 0.0, G]), 0.01)
    np.testing.assert_allclose(phi[ekf.VEL, ekf.ATT], -0.01 * skew3((0, 0, G)), atol=1e-15)
    np.testing.assert_allclose(phi[ekf.POS, ekf.VEL], 0.01 * np.eye(3), atol=0)
    np.testing.assert_allclose(phi[ekf.ATT, ekf.BG], 0.01 * np.eye(3), atol=0)
    np.testing.assert_allclose(phi[ekf.VEL, ekf.BA], 0.01 * np.eye(3), atol=0)


def test_phi_finite_difference(rng):
    """One step of the linear error model against two nonlinear propagations."""
    dt = 0.01
    for _ in range(50):
        truth = NavState(
            q=random_quat(rng),
            v=rng.normal(size=3),
            r=rng.normal(size=3),
            bg=rng.normal(size=3) * 0.01,
            ba=rng.normal(size=3) * 0.1,
        )
        acc_raw = rng.normal(size=3) * 3 + [0, 0, G]
        gyro_raw = rng.normal(size=3)
        dx = rng.normal(size=15) * 1e-5
        est = perturbed(truth, dx)
        t1 = propagate(truth, acc_raw - truth.ba, gyro_raw - truth.bg, dt)
        e1 = propagate(est, acc_raw - est.ba, gyro_raw - est.bg, dt)
        acc_n = quat_to_rotmat(e1.q) @ (acc_raw - est.ba)
        phi = ekf.build_phi(e1, acc_n, dt)
        predicted = phi @ dx
        actual = error_between(e1, t1)
        # the model is first order in dx and in dt
        tol = 1e-9 + 5 * dt * dt * np.abs(dx).max() * 10
        np.testing.assert_allclose(predicted[ekf.ATT], actual[ekf.ATT], atol=tol)
        np.testing.assert_allclose(predicted[ekf.VEL], actual[ekf.VEL], atol=tol * 10)
        np.testing.assert_allclose(predicted[ekf.BG], actual[ekf.BG], atol=1e-15)
        np.testing.assert_allclose(predicted[ekf.BA], actual[ekf.BA], atol=1e-15)
        # position integrates the new velocity, so dr picks up dt * dv'
        np.testing.assert_allclose(actual[ekf.POS], dx[ekf.POS] + dt * actual[ekf.VEL], atol=1e-12)


def test_yaw_column_equals_plain_without_corrections(rng):
    dt = 0.01
    st_ = NavState(q=random_quat(rng), v=rng.normal(size=3))
    acc = rng.normal(size=3) + [0, 0, G]
    nxt = propagate(st_, acc, np.zeros(3), dt)
    acc_n = quat_to_rotmat(nxt.q) @ acc
    plain = ekf.build_phi(nxt, acc_n, dt)
    oc = ekf.build_phi(nxt, acc_n, dt, yaw_col=ekf.yaw_column(st_.v, nxt.v))
    np.testing.assert_allclose(oc, plain, atol=1e-14)


def test_yaw_column_maps_null_direction(rng):
    dt = 0.01
    v0, v1 = rng.normal(size=3), rng.normal(size=3)
    phi = ekf.build_phi(NavState(v=v1), rng.normal(size=3), dt, yaw_col=ekf.yaw_column(v0, v1))
    n0, n1 = ekf.yaw_direction(v0), ekf.yaw_direction(v1)
    mapped = phi @ n0
    # attitude and velocity parts of the heading direction carry over exactly
    np.testing.assert_allclose(mapped[ekf.ATT], n1[ekf.ATT], atol=1e-15)
    np.testing.assert_allclose(mapped[ekf.VEL], n1[ekf.VEL], atol=1e-14)


# --- predict ----------------------------------------------------------------


def test_predict_trivial(rng):
    P = random_psd(rng)
    np.testing.assert_allclose(ekf.predict(P, np.eye(15), np.zeros((15, 15))), P, atol=0)
    np.testing.assert_allclose(ekf.predict(np.zeros((15, 15)), np.eye(15), 0.3 * np.eye(15)), 0.3 * np.eye(15), atol=0)


def test_predict_symmetric(rng):
    for _ in range(100):
        P = random_psd(rng)
        phi = np.eye(15) + 0.05 * rng.normal(size=(15, 15))
        Pn = ekf.predict(P, phi, np.diag(rng.uniform(0, 1, 15)))
        assert np.linalg.norm(Pn - Pn.T) <= 1e-12


def test_predict_kernel_matches_numpy(rng):
    dt = 0.01
    q_diag = np.diag(ekf.build_q(ekf.NoiseConfig(), dt)).copy()
    for _ in range(50):
        P = random_psd(rng, scale=0.1)
        C = quat_to_rotmat(random_quat(rng))
        acc_n = rng.normal(size=3) + [0, 0, G]
        yaw = rng.normal(size=3) * 0.01
        phi = ekf.build_phi(NavState(), acc_n, dt, C=C, yaw_col=yaw)
        ref = ekf.predict(P, phi, np.diag(q_diag))
        got = _kernels.predict_covariance(P, C, acc_n, dt, q_diag, yaw)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-14)


def test_build_q_and_initial_covariance():
    n = ekf.NoiseConfig()
    Q = ekf.build_q(n, 0.01)
    assert np.count_nonzero(Q - np.diag(np.diag(Q))) == 0
    assert np.all(np.diag(Q)[ekf.POS] == 0)
    assert Q[0, 0] == pytest.approx(n.gyro_noise_density**2 * 0.01)
    P0 = ekf.initial_covariance(n)
    assert P0[2, 2] == pytest.approx(math.radians(5.0) ** 2)
    assert P0[0, 0] == pytest.approx(math.radians(1.0) ** 2)


# --- measurement and update ----------------------------------------------------


def test_build_measurement_full_and_reduced():
    noise = ekf.NoiseConfig()
    heading = HeadingMeasurement(0.05, noise.compass_var, HeadingSource.COMPASS)
    z, H, R = ekf.build_measurement((0.01, -0.02), heading, np.array([0.1, 0.2, 0.3]), noise, LEVEL)
    assert H.shape == (6, 15) and z.shape == (6,)
    np.testing.assert_allclose(z, [0.01, -0.02, 0.05, 0.1, 0.2, 0.3])
    np.testing.assert_allclose(H[:3, ekf.ATT], np.diag([1.0, 1.0, -1.0]))
    np.testing.assert_allclose(H[3:, ekf.VEL], np.eye(3))
    np.testing.assert_allclose(np.diag(R), [noise.roll_var, noise.pitch_var, noise.compass_var] + [noise.vel_var] * 3)
    z, H, R = ekf.build_measurement((0.01, -0.02), None, np.zeros(3), noise, LEVEL)
    assert H.shape == (5, 15) and len(z) == 5 and R.shape == (5, 5)
    with pytest.raises(NoMeasurementError):
        ekf.build_measurement(None, None, None, noise, LEVEL)


def test_zero_innovation_zero_correction(rng):
    noise = ekf.NoiseConfig()
    P = random_psd(rng, scale=0.01)
    z, H, R = ekf.build_measurement((0.0, 0.0), None, np.zeros(3), noise, LEVEL)
    dx, _ = ekf.update(P, z, H, R)
    assert np.all(dx.vector() == 0.0)


def test_scalar_kalman():
    # a 15-state filter with only the first state measured behaves like the 1-state filter
    P = np.eye(15)
    H = np.zeros((1, 15))
    H[0, 0] = 1.0
    dx, Pn = ekf.update(P, [1.0], H, np.eye(1))
    assert dx.vector()[0] == pytest.approx(0.5) and Pn[0, 0] == pytest.approx(0.5)
    dxk, Pk, ok = _kernels.joseph_update(P, np.array([1.0]), H, np.ones(1))
    assert ok and dxk[0] == pytest.approx(0.5) and Pk[0, 0] == pytest.approx(0.5)


def test_update_contracts_measured_variances(rng):
    noise = ekf.NoiseConfig()
    for _ in range(100):
        P = random_psd(rng, scale=0.05)
        z, H, R = ekf.build_measurement((0.0, 0.0), HeadingMeasurement(0.0, 0.01, HeadingSource.HDR), np.zeros(3), noise, LEVEL)
        _, Pn = ekf.update(P, z + rng.normal(size=len(z)), H, R)
        assert np.all(np.diag(Pn) <= np.diag(P) + 1e-15)
        assert np.linalg.norm(Pn - Pn.T) <= 1e-12


def test_joseph_kernel_matches_numpy(rng):
    noise = ekf.NoiseConfig()
    for _ in range(50):
        P = random_psd(rng, scale=0.05)
        e = EulerAngles(*rng.uniform(-1, 1, 3))
        z, H, R = ekf.build_measurement((0.01, 0.02), HeadingMeasurement(0.03, 0.01, HeadingSource.COMPASS), rng.normal(size=3), noise, e)
        dx, Pn = ekf.update(P, z, H, R)
        dxk, Pk, ok = _kernels.joseph_update(P, z, H, np.diag(R).copy())
        assert ok
        np.testing.assert_allclose(dxk, dx.vector(), rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(Pk, Pn, rtol=1e-10, atol=1e-14)


def test_singular_innovation():
    H = np.zeros((1, 15))
    with pytest.raises(NumericalError):
        ekf.update(np.zeros((15, 15)), [1.0], H, np.zeros((1, 1)))
    _, _, ok = _kernels.joseph_update(np.zeros((15, 15)), np.array([1.0]), H, np.zeros(1))
    assert not ok


# --- observability constraint -------------------------------------------------


@settings(max_examples=100)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.integers(0, 2**31))
def test_constrain_rows_removes_direction(v, seed):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(6, 15))
    d = ekf.yaw_direction(v)
    Hc = ekf.constrain_rows(H, slice(3, 6), d)
    np.testing.assert_allclose(Hc[3:] @ d, 0.0, atol=1e-12)
    assert np.array_equal(Hc[:3], H[:3])
    # the projection is idempotent
    np.testing.assert_allclose(ekf.constrain_rows(Hc, slice(3, 6), d), Hc, atol=1e-14)


def test_constrain_rows_noop_at_rest():
    _, H, _ = ekf.build_measurement((0.0, 0.0), None, np.zeros(3), ekf.NoiseConfig(), LEVEL)
    Hc = ekf.constrain_rows(H, slice(2, 5), ekf.yaw_direction(np.zeros(3)))
    np.testing.assert_array_equal(Hc, H)


# --- injection ----------------------------------------------------------------


def test_inject_zero_is_identity(rng):
    s = NavState(q=random_quat(rng), v=rng.normal(size=3), r=rng.normal(size=3))
    out = ekf.inject_errors(s, ekf.ErrorState.zero())
    assert np.array_equal(out.q, s.q) and np.array_equal(out.v, s.v) and np.array_equal(out.r, s.r)


def test_inject_signs():
    s = NavState()
    dx = np.zeros(15)
    dx[ekf.POS] = [1.0, 0.0, 0.0]
    dx[ekf.VEL] = [0.0, 2.0, 0.0]
    dx[ekf.BG] = [0.01, 0.0, 0.0]
    dx[ekf.BA] = [0.0, 0.0, 0.1]
    out = ekf.inject_errors(s, ekf.ErrorState.from_vector(dx))
    np.testing.assert_array_equal(out.r, [-1.0, 0.0, 0.0])
    np.testing.assert_array_equal(out.v, [0.0, -2.0, 0.0])
    np.testing.assert_array_equal(out.bg, [0.01, 0.0, 0.0])
    np.testing.assert_array_equal(out.ba, [0.0, 0.0, 0.1])


def test_inject_attitude_removes_error(rng):
    for _ in range(50):
        truth_q = random_quat(rng)
        dphi = rng.normal(size=3) * 0.01
        est = perturbed(NavState(q=truth_q), np.concatenate([dphi, np.zeros(12)]))
        out = ekf.inject_errors(est, ekf.ErrorState.from_vector(np.concatenate([dphi, np.zeros(12)])))
        resid = error_between(out, NavState(q=truth_q))[ekf.ATT]
        # what remains is the second-order Cayley residual
        assert np.linalg.norm(resid) < np.linalg.norm(dphi) ** 2


def test_inject_kernel_matches_numpy(rng):
    for _ in range(100):
        q = random_quat(rng)
        dphi = rng.normal(size=3) * 0.05
        C = quat_to_rotmat(q)
        qk, Ck = _kernels.inject_attitude(C, dphi)
        ref = ekf.inject_errors(NavState(q=q), ekf.ErrorState.from_vector(np.concatenate([dphi, np.zeros(12)])))
        # the kernel returns w >= 0, the numpy path keeps the sign of the input
        np.testing.assert_allclose(qk * np.sign(qk @ ref.q), ref.q, atol=1e-14)
        assert qk[0] >= 0.0
        np.testing.assert_allclose(Ck, quat_to_rotmat(qk), atol=1e-14)


def test_large_correction_warns(caplog):
    dx = np.zeros(15)
    dx[0] = 0.4
    with caplog.at_level(logging.WARNING, logger="footnav.ekf"):
        ekf.inject_errors(NavState(), ekf.ErrorState.from_vector(dx))
    assert "small-angle" in caplog.text


def test_closed_loop_attitude_recovery():
    """Perfect roll, pitch and heading measurements pull a tilted estimate back."""
    noise = ekf.NoiseConfig(roll_var=1e-10, pitch_var=1e-10, compass_var=1e-10)
    true_e = (0.05, -0.1, 0.7)
    truth = NavState(q=quat_from_euler(true_e))
    dphi = np.array([0.02, -0.015, 0.03])
    est = perturbed(truth, np.concatenate([dphi, np.zeros(12)]))
    e_pred = euler_from_quat(est.q)
    roll_pitch = (e_pred.roll - true_e[0], e_pred.pitch - true_e[1])
    heading = HeadingMeasurement(e_pred.heading - true_e[2], noise.compass_var, HeadingSource.COMPASS)
    z, H, R = ekf.build_measurement(roll_pitch, heading, np.zeros(3), noise, e_pred)
    dx, _ = ekf.update(ekf.initial_covariance(noise), z, H, R)
    out = ekf.inject_errors(est, dx)
    got = euler_from_rotmat(quat_to_rotmat(out.q))
    np.testing.assert_allclose(got, true_e, atol=1e-3)
    assert np.linalg.norm(error_between(out, truth)[ekf.ATT]) < 1e-3


def test_error_state_roundtrip(rng):
    x = rng.normal(size=15)
    assert np.array_equal(ekf.ErrorState.from_vector(x).vector(), x)


def test_noise_validation():
    with pytest.raises(ValueError):
        ekf.NoiseConfig(vel_var=0.0)
    with pytest.raises(ValueError):
        ekf.NoiseConfig(gyro_bias_rw=-1.0)


@pytest.mark.parametrize("with_heading", [True, False])
@pytest.mark.parametrize("constrain", [True, False])
def test_stance_kernel_matches_numpy(rng, with_heading, constrain):
    noise = ekf.NoiseConfig()
    for _ in range(30):
        P = random_psd(rng, scale=0.02)
        s = NavState(q=random_quat(rng), v=rng.normal(size=3) * 0.05, r=rng.normal(size=3), bg=rng.normal(size=3) * 1e-3, ba=rng.normal(size=3) * 0.01)
        C = quat_to_rotmat(s.q)
        e = euler_from_rotmat(C)
        rp = (0.01, -0.02)
        heading = HeadingMeasurement(0.03, noise.compass_var, HeadingSource.COMPASS) if with_heading else None
        z, H, R = ekf.build_measurement(rp, heading, s.v, noise, e)
        if constrain:
            H = ekf.constrain_rows(H, slice(len(z) - 3, len(z)), ekf.yaw_direction(s.v))
        dx, Pn = ekf.update(P, z, H, R)
        ref = ekf.inject_errors(s, dx)
        rows = [0, 1, 2] if with_heading else [0, 1]
        J = np.ascontiguousarray(euler_error_jacobian(e)[rows])
        ok, angle, Pk, qk, Ck, vk, rk, bgk, bak = _kernels.stance_update(P, C, s.q, s.v, s.r, s.bg, s.ba, z, J, np.diag(R).copy(), constrain)
        assert ok and angle == pytest.approx(np.linalg.norm(dx.dphi))
        np.testing.assert_allclose(Pk, Pn, rtol=1e-9, atol=1e-14)
        np.testing.assert_allclose(qk, ref.q, atol=1e-12)
        np.testing.assert_allclose(Ck, quat_to_rotmat(qk), atol=1e-12)
        for a, b in ((vk, ref.v), (rk, ref.r), (bgk, ref.bg), (bak, ref.ba)):
            np.testing.assert_allclose(a, b, atol=1e-12)
