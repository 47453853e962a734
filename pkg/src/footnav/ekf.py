"""
15-state error-state EKF.

Error vector layout (radians, rad/s, m, m/s, m/s^2)::

    [ dphi(0:3) | dgyro_bias(3:6) | dr(6:9) | dv(9:12) | dacc_bias(12:15) ]

Sign conventions: ``dphi``, ``dr`` and ``dv`` are estimate minus truth
(``C_est = exp([dphi x]) C_true``); the two bias errors are truth minus
estimate, so injection subtracts the former and adds the latter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NoMeasurementError, NumericalError
from .heading import HeadingMeasurement
from .ins import NavState
from .mathcore import (
    EulerAngles,
    euler_error_jacobian,
    pade_attitude_correct,
    quat_to_rotmat,
    rotmat_to_quat,
    skew3,
)

log = logging.getLogger(__name__)

ATT = slice(0, 3)
BG = slice(3, 6)
POS = slice(6, 9)
VEL = slice(9, 12)
BA = slice(12, 15)
N_STATES = 15

SMALL_ANGLE_LIMIT = 0.3


@dataclass(frozen=True)
class ErrorState:
    dphi: np.ndarray
    dgyro_bias: np.ndarray
    dr: np.ndarray
    dv: np.ndarray
    dacc_bias: np.ndarray

    @classmethod
    def zero(cls) -> "ErrorState":
        return cls.from_vector(np.zeros(N_STATES))

    @classmethod
    def from_vector(cls, x) -> "ErrorState":
        x = np.asarray(x, dtype=float)
        return cls(x[ATT].copy(), x[BG].copy(), x[POS].copy(), x[VEL].copy(), x[BA].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.dphi, self.dgyro_bias, self.dr, self.dv, self.dacc_bias])


@dataclass
class NoiseConfig:
    """
    Process and measurement noise.

    Process noise is white: densities are per sqrt(Hz) for the sensor
    noise and per sqrt(s) for bias random walks. Measurement entries are
    variances of single stance-sample measurements.
    """

    gyro_noise_density: float = 2e-4
    acc_noise_density: float = 2e-3
    gyro_bias_rw: float = 1e-5
    acc_bias_rw: float = 1e-4
    roll_var: float = math.radians(1.0) ** 2
    pitch_var: float = math.radians(1.0) ** 2
    compass_var: float = math.radians(5.0) ** 2
    hdr_var: float = math.radians(2.0) ** 2
    vel_var: float = 0.01**2
    # initial 1-sigma uncertainties
    init_att: float = math.radians(1.0)
    init_heading: float = math.radians(5.0)
    init_gyro_bias: float = math.radians(0.2)
    init_acc_bias: float = 0.05
    init_pos: float = 1e-3
    init_vel: float = 1e-3

    def __post_init__(self):
        for name in ("roll_var", "pitch_var", "compass_var", "hdr_var", "vel_var"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("gyro_noise_density", "acc_noise_density", "gyro_bias_rw", "acc_bias_rw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def build_q(noise: NoiseConfig, dt: float) -> np.ndarray:
    d = np.zeros(N_STATES)
    d[ATT] = noise.gyro_noise_density**2 * dt
    d[BG] = noise.gyro_bias_rw**2 * dt
    d[VEL] = noise.acc_noise_density**2 * dt
    d[BA] = noise.acc_bias_rw**2 * dt
    return np.diag(d)


def initial_covariance(noise: NoiseConfig) -> np.ndarray:
    d = np.zeros(N_STATES)
    d[0:2] = noise.init_att**2
    d[2] = noise.init_heading**2
    d[BG] = noise.init_gyro_bias**2
    d[POS] = noise.init_pos**2
    d[VEL] = noise.init_vel**2
    d[BA] = noise.init_acc_bias**2
    return np.diag(d)


def build_phi(state: NavState, acc_n, dt: float, C: np.ndarray | None = None, yaw_col=None) -> np.ndarray:
    """Discrete error-state transition for one sample.

    ``acc_n`` is the bias-compensated specific force rotated into the n frame;
    ``C`` may be passed when the caller already holds ``C_b^n(state.q)``.
    ``yaw_col`` optionally overrides ``phi[VEL, 2]``, the velocity response
    to a heading error (see :func:`yaw_column`).
    """
    if C is None:
        C = quat_to_rotmat(state.q)
    phi = np.eye(N_STATES)
    phi[ATT, BG] = dt * C
    phi[POS, VEL] = dt * np.eye(3)
    phi[VEL, ATT] = -dt * skew3(acc_n)
    phi[VEL, BA] = dt * C
    if yaw_col is not None:
        phi[VEL, 2] = yaw_col
    return phi


def yaw_column(v_lin, v_next) -> np.ndarray:
    """
    Observability-constrained heading column of the velocity-attitude block.

    ``v_lin`` is the velocity at which the previous step was linearized
    (before any correction) and ``v_next`` the newly propagated one. The
    column ``e_z x (v_next - v_lin)`` maps :func:`yaw_direction` at
    ``v_lin`` onto :func:`yaw_direction` at ``v_next``. Between
    corrections ``v_next - v_lin = dt * acc_n`` horizontally and the column
    equals the plain ``-dt [acc_n x] e_z``.
    """
    d = np.asarray(v_next, dtype=float) - np.asarray(v_lin, dtype=float)
    return np.array([-d[1], d[0], 0.0])


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(P: np.ndarray, phi: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return symmetrize(phi @ P @ phi.T + Q)


def build_measurement(
    roll_pitch: tuple[float, float] | None,
    heading: HeadingMeasurement | None,
    dv,
    noise: NoiseConfig,
    euler: EulerAngles,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Assemble the stance-phase measurement ``(z, H, R)``.

    Rows, in order and each optional: roll error, pitch error, heading
    error, three ZUPT velocity rows. The attitude rows of ``H`` are the
    rows of the Euler-error Jacobian at the predicted attitude ``euler``,
    which reduce to a plain selection of the attitude block (heading
    sign flipped) at level, north-facing attitude.
    """
    J = euler_error_jacobian(euler)
    att_rows: list[int] = []
    z: list[float] = []
    r: list[float] = []
    if roll_pitch is not None:
        att_rows += [0, 1]
        z += [roll_pitch[0], roll_pitch[1]]
        r += [noise.roll_var, noise.pitch_var]
    if heading is not None:
        att_rows.append(2)
        z.append(heading.innovation)
        r.append(heading.var)
    n_att = len(att_rows)
    m = n_att + (3 if dv is not None else 0)
    if m == 0:
        raise NoMeasurementError("no measurement rows")
    H = np.zeros((m, N_STATES))
    H[:n_att, ATT] = J[att_rows]
    if dv is not None:
        H[n_att:, VEL] = np.eye(3)
        z += [float(dv[0]), float(dv[1]), float(dv[2])]
        r += [noise.vel_var] * 3
    return np.array(z), H, np.diag(r)


def yaw_direction(v) -> np.ndarray:
    """
    Error-space direction of a small rotation of the navigation solution
    about the vertical through the current position: ``dphi = e_z`` with
    the velocity error it induces, ``e_z x v``.

    Zero-velocity and tilt measurements cannot see along this direction
    when the foot is truly at rest.
    """
    n = np.zeros(N_STATES)
    n[2] = 1.0
    n[9] = -float(v[1])
    n[10] = float(v[0])
    return n


def constrain_rows(H: np.ndarray, rows, direction) -> np.ndarray:
    """
    Project ``H[rows]`` so those rows carry no information along ``direction``.

    This is the observability-constrained Jacobian: the smallest change
    (Frobenius norm) to the rows that makes ``H[rows] @ direction == 0``.
    Without it the ZUPT rows observe heading through the residual landing
    velocity of the INS, which the true system does not allow.
    """
    H = np.array(H, dtype=float)
    d = np.asarray(direction, dtype=float)
    Hr = H[rows]
    H[rows] = Hr - np.outer(Hr @ d, d) / (d @ d)
    return H


def update(P: np.ndarray, z, H: np.ndarray, R: np.ndarray) -> tuple[ErrorState, np.ndarray]:
    """Kalman gain, error estimate and Joseph-form covariance update."""
    z = np.asarray(z, dtype=float)
    PHt = P @ H.T
    S = H @ PHt + R
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"innovation covariance is singular: {exc}") from exc
    dx = K @ z
    A = np.eye(N_STATES) - K @ H
    P_new = symmetrize(A @ P @ A.T + K @ R @ K.T)
    if not np.all(np.isfinite(P_new)) or not np.all(np.isfinite(dx)):
        raise NumericalError("non-finite filter update")
    return ErrorState.from_vector(dx), P_new


def inject_errors(state: NavState, dx: ErrorState, C: np.ndarray | None = None) -> NavState:
    """Fold an error estimate back into the navigation state.

    ``C`` optionally supplies ``C_b^n(state.q)``.
    """
    angle = float(np.linalg.norm(dx.dphi))
    if angle >= SMALL_ANGLE_LIMIT:
        log.warning("attitude correction %.3f rad exceeds small-angle validity", angle)
    q = state.q
    if angle > 0.0:
        if C is None:
            C = quat_to_rotmat(state.q)
        q = rotmat_to_quat(pade_attitude_correct(C, dx.dphi))
        if q @ state.q < 0.0:
            q = -q
    return replace(
        state,
        q=q,
        v=state.v - dx.dv,
        r=state.r - dx.dr,
        bg=state.bg + dx.dgyro_bias,
        ba=state.ba + dx.dacc_bias,
    )
