"""
Compiled inner loops for the filter. Each kernel mirrors a public numpy
function in :mod:`footnav.ekf` and is tested against it.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def predict_covariance(P, C, acc_n, dt, q_diag, yaw_col):
    """``Phi P Phi^T + Q`` for the sparse block transition, symmetrized.

    ``yaw_col`` replaces the heading column of the velocity-attitude block
    (see :func:`footnav.ekf.build_phi`).
    """
    n = 15
    # Phi = I + E, E nonzero only in blocks (0:3,3:6), (6:9,9:12), (9:12,0:3), (9:12,12:15)
    E = np.zeros((n, n))
    ax, ay, az = acc_n[0], acc_n[1], acc_n[2]
    for i in range(3):
        for j in range(3):
            E[i, 3 + j] = dt * C[i, j]
            E[9 + i, 12 + j] = dt * C[i, j]
        E[6 + i, 9 + i] = dt
    # -dt * skew(acc_n)
    E[9, 1] = dt * az
    E[9, 2] = -dt * ay
    E[10, 0] = -dt * az
    E[10, 2] = dt * ax
    E[11, 0] = dt * ay
    E[11, 1] = -dt * ax
    E[9, 2] = yaw_col[0]
    E[10, 2] = yaw_col[1]
    E[11, 2] = yaw_col[2]
    EP = E @ P
    out = P + EP + EP.T + EP @ E.T
    for i in range(n):
        out[i, i] += q_diag[i]
        for j in range(i + 1, n):
            s = 0.5 * (out[i, j] + out[j, i])
            out[i, j] = s
            out[j, i] = s
    return out


@njit(cache=True)
def joseph_update(P, z, H, r_diag):
    """Gain, correction and Joseph-form covariance; returns ``(dx, P_new, ok)``."""
    n = P.shape[0]
    m = H.shape[0]
    PHt = P @ H.T
    S = H @ PHt
    for i in range(m):
        S[i, i] += r_diag[i]
    ok = True
    K = np.zeros((n, m))
    # Cholesky of S; failure means it is not positive definite
    L = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    ok = False
                    return np.zeros(n), P, ok
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    # K^T = S^-1 (P H^T)^T via two triangular solves
    B = PHt.T.copy()
    for c in range(n):
        for i in range(m):
            s = B[i, c]
            for k in range(i):
                s -= L[i, k] * B[k, c]
            B[i, c] = s / L[i, i]
        for i in range(m - 1, -1, -1):
            s = B[i, c]
            for k in range(i + 1, m):
                s -= L[k, i] * B[k, c]
            B[i, c] = s / L[i, i]
    K = B.T.copy()
    dx = K @ z
    A = np.eye(n) - K @ H
    KR = K.copy()
    for j in range(m):
        for i in range(n):
            KR[i, j] *= r_diag[j]
    Pn = A @ P @ A.T + KR @ K.T
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.5 * (Pn[i, j] + Pn[j, i])
            Pn[i, j] = s
            Pn[j, i] = s
    return dx, Pn, ok


@njit(cache=True)
def mechanize(q, v, r, acc_b, gyro_b, dt, g):
    """One strapdown step; mirrors :func:`footnav.ins.propagate`.

    Returns ``(q, v, r, C, acc_n)`` where ``acc_n`` is the rotated specific
    force before gravity removal.
    """
    wx, wy, wz = gyro_b[0], gyro_b[1], gyro_b[2]
    nrm = np.sqrt(wx * wx + wy * wy + wz * wz)
    qn = q.copy()
    if nrm > 0.0:
        h = 0.5 * nrm * dt
        c = np.cos(h)
        s = np.sin(h) / nrm
        qw, qx, qy, qz = q[0], q[1], q[2], q[3]
        qn[0] = c * qw + s * (-wx * qx - wy * qy - wz * qz)
        qn[1] = c * qx + s * (wx * qw + wz * qy - wy * qz)
        qn[2] = c * qy + s * (wy * qw - wz * qx + wx * qz)
        qn[3] = c * qz + s * (wz * qw + wy * qx - wx * qy)
        qn /= np.sqrt(qn[0] * qn[0] + qn[1] * qn[1] + qn[2] * qn[2] + qn[3] * qn[3])
    w, x, y, z = qn[0], qn[1], qn[2], qn[3]
    C = np.empty((3, 3))
    C[0, 0] = w * w + x * x - y * y - z * z
    C[0, 1] = 2 * (x * y - w * z)
    C[0, 2] = 2 * (x * z + w * y)
    C[1, 0] = 2 * (x * y + w * z)
    C[1, 1] = w * w - x * x + y * y - z * z
    C[1, 2] = 2 * (y * z - w * x)
    C[2, 0] = 2 * (x * z - w * y)
    C[2, 1] = 2 * (y * z + w * x)
    C[2, 2] = w * w - x * x - y * y + z * z
    acc_n = C @ acc_b
    vn = v.copy()
    vn[0] += acc_n[0] * dt
    vn[1] += acc_n[1] * dt
    vn[2] += (acc_n[2] - g) * dt
    rn = r + vn * dt
    return qn, vn, rn, C, acc_n


@njit(cache=True)
def shoe_push(acc_buf, gyro_buf, count, acc, gyro, g, acc_var, gyro_var):
    """Ring-buffer SHOE; mirrors :class:`footnav.detectors.ShoeWindow`.

    Returns the statistic, or -1.0 while the window is filling.
    """
    w = acc_buf.shape[0]
    i = count % w
    for j in range(3):
        acc_buf[i, j] = acc[j]
        gyro_buf[i, j] = gyro[j]
    if count + 1 < w:
        return -1.0
    mx = 0.0
    my = 0.0
    mz = 0.0
    for k in range(w):
        mx += acc_buf[k, 0]
        my += acc_buf[k, 1]
        mz += acc_buf[k, 2]
    mx /= w
    my /= w
    mz /= w
    nrm = np.sqrt(mx * mx + my * my + mz * mz)
    if nrm == 0.0:
        return np.inf
    ux = g * mx / nrm
    uy = g * my / nrm
    uz = g * mz / nrm
    sa = 0.0
    sg = 0.0
    for k in range(w):
        dx = acc_buf[k, 0] - ux
        dy = acc_buf[k, 1] - uy
        dz = acc_buf[k, 2] - uz
        sa += dx * dx + dy * dy + dz * dz
        sg += gyro_buf[k, 0] ** 2 + gyro_buf[k, 1] ** 2 + gyro_buf[k, 2] ** 2
    return (sa / acc_var + sg / gyro_var) / w


@njit(cache=True)
def inject_attitude(C, dphi):
    """Padé correction of ``C`` followed by quaternion extraction.

    Mirrors :func:`footnav.mathcore.pade_attitude_correct` and
    :func:`footnav.mathcore.rotmat_to_quat`; returns ``(q, C_new)``.
    """
    ux = -0.5 * dphi[0]
    uy = -0.5 * dphi[1]
    uz = -0.5 * dphi[2]
    den = 2.0 * (1.0 + ux * ux + uy * uy + uz * uz)
    inv = np.empty((3, 3))
    inv[0, 0] = (1.0 + ux * ux) / den
    inv[0, 1] = (-uz + ux * uy) / den
    inv[0, 2] = (uy + ux * uz) / den
    inv[1, 0] = (uz + uy * ux) / den
    inv[1, 1] = (1.0 + uy * uy) / den
    inv[1, 2] = (-ux + uy * uz) / den
    inv[2, 0] = (-uy + uz * ux) / den
    inv[2, 1] = (ux + uz * uy) / den
    inv[2, 2] = (1.0 + uz * uz) / den
    num = np.empty((3, 3))
    # 2I + small_angle_skew(dphi)
    num[0, 0] = 2.0
    num[0, 1] = dphi[2]
    num[0, 2] = -dphi[1]
    num[1, 0] = -dphi[2]
    num[1, 1] = 2.0
    num[1, 2] = dphi[0]
    num[2, 0] = dphi[1]
    num[2, 1] = -dphi[0]
    num[2, 2] = 2.0
    Cn = num @ inv @ C
    tr = Cn[0, 0] + Cn[1, 1] + Cn[2, 2]
    q = np.empty(4)
    best = tr
    i = 0
    for k in range(3):
        if Cn[k, k] > best:
            best = Cn[k, k]
            i = k + 1
    if i == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q[0] = 0.25 * s
        q[1] = (Cn[2, 1] - Cn[1, 2]) / s
        q[2] = (Cn[0, 2] - Cn[2, 0]) / s
        q[3] = (Cn[1, 0] - Cn[0, 1]) / s
    elif i == 1:
        s = 2.0 * np.sqrt(1.0 + Cn[0, 0] - Cn[1, 1] - Cn[2, 2])
        q[0] = (Cn[2, 1] - Cn[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (Cn[0, 1] + Cn[1, 0]) / s
        q[3] = (Cn[0, 2] + Cn[2, 0]) / s
    elif i == 2:
        s = 2.0 * np.sqrt(1.0 + Cn[1, 1] - Cn[0, 0] - Cn[2, 2])
        q[0] = (Cn[0, 2] - Cn[2, 0]) / s
        q[1] = (Cn[0, 1] + Cn[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (Cn[1, 2] + Cn[2, 1]) / s
    else:
        s = 2.0 * np.sqrt(1.0 + Cn[2, 2] - Cn[0, 0] - Cn[1, 1])
        q[0] = (Cn[1, 0] - Cn[0, 1]) / s
        q[1] = (Cn[0, 2] + Cn[2, 0]) / s
        q[2] = (Cn[1, 2] + Cn[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q = -q
    q /= np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q, Cn


@njit(cache=True)
def stance_update(P, C, q, v, r, bg, ba, z, J_att, r_diag, constrain):
    """Stance measurement update and injection in one pass.

    Mirrors :func:`footnav.ekf.build_measurement` (with ``J_att`` holding
    the attitude rows of the Euler-error Jacobian and the last three
    entries of ``z`` the ZUPT velocity), :func:`footnav.ekf.constrain_rows`
    when ``constrain`` is set, :func:`joseph_update` and
    :func:`footnav.ekf.inject_errors`.

    Returns ``(ok, angle, P, q, C, v, r, bg, ba)`` where ``angle`` is the
    norm of the applied attitude correction.
    """
    k = J_att.shape[0]
    m = k + 3
    H = np.zeros((m, 15))
    for i in range(k):
        for j in range(3):
            H[i, j] = J_att[i, j]
    for i in range(3):
        H[k + i, 9 + i] = 1.0
    if constrain:
        # yaw direction: dphi_z = 1 with velocity part e_z x v
        d2 = 1.0
        d9 = -v[1]
        d10 = v[0]
        nn = d2 * d2 + d9 * d9 + d10 * d10
        for i in range(k, m):
            s = (H[i, 2] * d2 + H[i, 9] * d9 + H[i, 10] * d10) / nn
            H[i, 2] -= s * d2
            H[i, 9] -= s * d9
            H[i, 10] -= s * d10
    dx, Pn, ok = joseph_update(P, z, H, r_diag)
    for i in range(15):
        if not np.isfinite(dx[i]):
            ok = False
    if not ok:
        return ok, 0.0, P, q, C, v, r, bg, ba
    dphi = dx[0:3].copy()
    angle = np.sqrt(dphi[0] * dphi[0] + dphi[1] * dphi[1] + dphi[2] * dphi[2])
    qn = q
    Cn = C
    if angle > 0.0:
        qn, Cn = inject_attitude(C, dphi)
        if qn[0] * q[0] + qn[1] * q[1] + qn[2] * q[2] + qn[3] * q[3] < 0.0:
            qn = -qn
    return ok, angle, Pn, qn, Cn, v - dx[9:12], r - dx[6:9], bg + dx[3:6], ba + dx[12:15]
