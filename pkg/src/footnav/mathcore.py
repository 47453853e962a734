"""
Rotation primitives for the foot-mounted navigation engine.

Frames
------
n frame : x North, y West, z Up (right handed). A level, stationary
    accelerometer reads (0, 0, +g).
b frame : sensor frame, x forward, y left, z up.

Attitude is a Hamilton, scalar-first unit quaternion ``q = (w, x, y, z)``
mapping b-frame vectors into the n frame, ``v_n = C(q) v_b``.

Euler angles are (roll, pitch, heading) with

    C_b^n = Rz(-heading) @ Ry(pitch) @ Rx(roll)

so heading is measured clockwise from North (towards East) when viewed
from above, and ``atan2(B_E, B_N)`` of the tilt-compensated field returns
it directly.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import DegenerateAttitudeError

_GIMBAL_MARGIN = 1e-6


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    heading: float


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; angles already in range are returned unchanged."""
    if -math.pi < a <= math.pi:
        return a
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def skew3(v) -> np.ndarray:
    """Cross-product matrix: ``skew3(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def small_angle_skew(dphi) -> np.ndarray:
    """
    Skew matrix of small attitude errors with the sign used by the Padé
    attitude correction. This is ``-skew3(dphi)``.
    """
    x, y, z = dphi
    return np.array([[0.0, z, -y], [-z, 0.0, x], [y, -x, 0.0]])


def omega4(w) -> np.ndarray:
    """4x4 rate matrix such that ``omega4(w) @ q == q ⊗ (0, w)``."""
    x, y, z = w
    return np.array(
        [
            [0.0, -x, -y, -z],
            [x, 0.0, z, -y],
            [y, -z, 0.0, x],
            [z, y, -x, 0.0],
        ]
    )


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def quat_multiply(p, q) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(phi) -> np.ndarray:
    """Quaternion of a rotation by ``|phi|`` about ``phi / |phi|``."""
    phi = np.asarray(phi, dtype=float)
    angle = math.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    half = 0.5 * angle
    # sin(half)/angle, series below 1e-8 keeps it exact to double precision
    k = 0.5 - angle * angle / 48.0 if angle < 1e-8 else math.sin(half) / angle
    return np.array([math.cos(half), k * phi[0], k * phi[1], k * phi[2]])


def rotvec_from_quat(q) -> np.ndarray:
    """Inverse of :func:`quat_from_rotvec` (shortest rotation)."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    s = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if s < 1e-12:
        return 2.0 * q[1:] / q[0]
    angle = 2.0 * math.atan2(s, q[0])
    return angle / s * q[1:]


def quat_propagate(q, w, dt: float) -> np.ndarray:
    """
    Closed-form quaternion update ``exp(0.5 * Omega(w) * dt) @ q``.

    Because ``Omega(w)^2 = -|w|^2 I`` the exponential is
    ``cos(h) I + sin(h)/|w| Omega(w)`` with ``h = |w| dt / 2``.
    """
    wx, wy, wz = w
    n = math.sqrt(wx * wx + wy * wy + wz * wz)
    if n == 0.0:
        return np.array(q, dtype=float)
    h = 0.5 * n * dt
    c = math.cos(h)
    s = math.sin(h) / n
    qw, qx, qy, qz = q
    out = np.array(
        [
            c * qw + s * (-wx * qx - wy * qy - wz * qz),
            c * qx + s * (wx * qw + wz * qy - wy * qz),
            c * qy + s * (wy * qw - wz * qx + wx * qz),
            c * qz + s * (wz * qw + wy * qx - wx * qy),
        ]
    )
    return out / math.sqrt(out @ out)


def quat_to_rotmat(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )


def rotmat_to_quat(C) -> np.ndarray:
    """Shepperd's method; returns the representative with ``w >= 0``."""
    C = np.asarray(C, dtype=float)
    tr = C[0, 0] + C[1, 1] + C[2, 2]
    cands = (tr, C[0, 0], C[1, 1], C[2, 2])
    i = max(range(4), key=cands.__getitem__)
    if i == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (C[2, 1] - C[1, 2]) / s, (C[0, 2] - C[2, 0]) / s, (C[1, 0] - C[0, 1]) / s]
    elif i == 1:
        s = 2.0 * math.sqrt(1.0 + C[0, 0] - C[1, 1] - C[2, 2])
        q = [(C[2, 1] - C[1, 2]) / s, 0.25 * s, (C[0, 1] + C[1, 0]) / s, (C[0, 2] + C[2, 0]) / s]
    elif i == 2:
        s = 2.0 * math.sqrt(1.0 + C[1, 1] - C[0, 0] - C[2, 2])
        q = [(C[0, 2] - C[2, 0]) / s, (C[0, 1] + C[1, 0]) / s, 0.25 * s, (C[1, 2] + C[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + C[2, 2] - C[0, 0] - C[1, 1])
        q = [(C[1, 0] - C[0, 1]) / s, (C[0, 2] + C[2, 0]) / s, (C[1, 2] + C[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def rodrigues(phi) -> np.ndarray:
    """Exact rotation matrix ``exp(skew3(phi))``."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    if angle == 0.0:
        return np.eye(3)
    K = skew3(phi / angle)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def pade_attitude_correct(C, dphi) -> np.ndarray:
    """
    Apply an attitude error estimate to a b->n rotation matrix.

    Returns ``(2I + dTheta) (2I - dTheta)^-1 C`` with
    ``dTheta = small_angle_skew(dphi)``. The Cayley factor is exactly
    orthogonal and approximates ``exp(-skew3(dphi))``, i.e. it removes an
    n-frame attitude error ``dphi`` where ``C_est = exp(skew3(dphi)) C_true``.
    Intended for ``|dphi| < 0.3`` rad.
    """
    # 2I - dTheta = 2 (I - skew(u)) with u = -dphi/2, whose inverse is
    # (I + skew(u) + u u^T) / (1 + |u|^2); eigenvalues 2, 2 +/- i|dphi| keep it regular
    u = -0.5 * np.asarray(dphi, dtype=float)
    su = skew3(u)
    inv = (np.eye(3) + su + np.outer(u, u)) / (2.0 * (1.0 + u @ u))
    cayley = (2.0 * np.eye(3) + small_angle_skew(dphi)) @ inv
    return cayley @ np.asarray(C, dtype=float)


def rotmat_from_euler(e) -> np.ndarray:
    """``C_b^n = Rz(-heading) Ry(pitch) Rx(roll)``."""
    roll, pitch, heading = e
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    ch, sh = math.cos(heading), math.sin(heading)
    # tilt = Ry(pitch) Rx(roll); its rows match the tilt-compensation matrix
    tilt = np.array(
        [
            [cp, sr * sp, cr * sp],
            [0.0, cr, -sr],
            [-sp, sr * cp, cr * cp],
        ]
    )
    rz = np.array([[ch, sh, 0.0], [-sh, ch, 0.0], [0.0, 0.0, 1.0]])
    return rz @ tilt


def euler_from_rotmat(C) -> EulerAngles:
    """Inverse of :func:`rotmat_from_euler`.

    Raises
    ------
    DegenerateAttitudeError
        If pitch is within 1e-6 rad of +/- pi/2.
    """
    C = np.asarray(C, dtype=float)
    pitch = math.atan2(-C[2, 0], math.hypot(C[2, 1], C[2, 2]))
    if abs(pitch) > 0.5 * math.pi - _GIMBAL_MARGIN:
        raise DegenerateAttitudeError(f"pitch {pitch:.9f} rad is at gimbal lock")
    roll = math.atan2(C[2, 1], C[2, 2])
    heading = math.atan2(-C[1, 0], C[0, 0])
    return EulerAngles(wrap_angle(roll), pitch, wrap_angle(heading))


def euler_from_quat(q) -> EulerAngles:
    return euler_from_rotmat(quat_to_rotmat(q))


def quat_from_euler(e) -> np.ndarray:
    return rotmat_to_quat(rotmat_from_euler(e))


def euler_error_jacobian(e) -> np.ndarray:
    """
    Linear map from an n-frame attitude error ``dphi`` to the induced
    (roll, pitch, heading) error, where ``C_est = exp(skew3(dphi)) C_true``.

    At level attitude and zero heading this is ``diag(1, 1, -1)``; the
    heading row is negative because heading turns clockwise about +z.
    """
    roll, pitch, heading = e
    cp, sp = math.cos(pitch), math.sin(pitch)
    ch, sh = math.cos(heading), math.sin(heading)
    if abs(cp) < _GIMBAL_MARGIN:
        raise DegenerateAttitudeError("pitch at gimbal lock")
    tp = sp / cp
    return np.array(
        [
            [ch / cp, -sh / cp, 0.0],
            [sh, ch, 0.0],
            [-ch * tp, sh * tp, -1.0],
        ]
    )
