"""
Synthetic foot-mounted walks with exact ground truth.

The truth generator emits positions sample by sample. Velocities are the
backward differences of those positions and :func:`ideal_imu` inverts the
semi-implicit mechanization of :mod:`footnav.ins`, so the ideal IMU stream
reproduces the truth to rounding error.

A stride (one swing of the instrumented foot) moves the foot along a
quintic profile with zero velocity and acceleration at both ends, lifts it
by a C2 bump and pitches it by another. Turns are pivots: the foot lifts
and rotates in place over one to three strides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError
from .ins import GRAVITY, ImuStream
from .mathcore import quat_to_rotmat, rotmat_from_euler, rotmat_to_quat

MAX_TURN_PER_STRIDE = math.pi / 4


@dataclass
class GaitSpec:
    step_length: float = 1.4
    step_duration: float = 1.0
    stance_fraction: float = 0.55
    swing_peak_height: float = 0.10
    swing_pitch: float = 0.3
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.step_length > 0 and self.step_duration > 0 and self.swing_peak_height > 0):
            raise ConfigError("gait lengths and durations must be positive")
        if not 0.2 < self.stance_fraction < 0.8:
            raise ConfigError("stance_fraction must lie in (0.2, 0.8)")
        if not 0 <= self.jitter < 0.5:
            raise ConfigError("jitter must lie in [0, 0.5)")


@dataclass
class Segment:
    kind: Literal["straight", "turn"]
    value: float  # metres for straight, radians (clockwise positive) for turn


@dataclass
class PathSpec:
    segments: list[Segment]
    closed: bool = False
    start_rest: float = 2.0
    end_rest: float = 1.0

    def __post_init__(self):
        self.segments = [s if isinstance(s, Segment) else Segment(**s) for s in self.segments]
        for s in self.segments:
            if s.kind not in ("straight", "turn"):
                raise ConfigError(f"unknown segment kind {s.kind!r}")
            if s.kind == "straight" and not s.value > 0:
                raise ConfigError("straight segments need a positive length")
        if self.total_length() <= 0:
            raise ConfigError("path has zero total length")
        if self.closed:
            end = self.endpoint()
            if np.hypot(end[0], end[1]) > 1e-9:
                raise ConfigError(f"path marked closed ends at {end} instead of the origin")

    def total_length(self) -> float:
        return float(sum(s.value for s in self.segments if s.kind == "straight"))

    def endpoint(self) -> np.ndarray:
        pos = np.zeros(2)
        psi = 0.0
        for s in self.segments:
            if s.kind == "turn":
                psi += s.value
            else:
                pos = pos + s.value * np.array([math.cos(psi), -math.sin(psi)])
        return pos


def straight_path(length: float, **kw) -> PathSpec:
    return PathSpec([Segment("straight", length)], **kw)


def loop_path(width: float, height: float, laps: int = 1, **kw) -> PathSpec:
    """Rectangle walked clockwise (right turns), starting North."""
    segs: list[Segment] = []
    for _ in range(laps):
        for length in (width, height, width, height):
            segs += [Segment("straight", length), Segment("turn", math.pi / 2)]
    segs.pop()
    return PathSpec(segs, closed=True, **kw)


@dataclass
class SensorErrorSpec:
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    acc_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gyro_noise: float = 0.0
    acc_noise: float = 0.0
    mag_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.gyro_noise, self.acc_noise, self.mag_noise) < 0:
            raise ConfigError("noise sigmas must be >= 0")


@dataclass
class Disturbance:
    start: float  # path distance, m
    end: float
    kind: Literal["hard_offset", "gradient"]
    vector: tuple[float, float, float]

    def __post_init__(self):
        if self.kind not in ("hard_offset", "gradient"):
            raise ConfigError(f"unknown disturbance kind {self.kind!r}")
        if not self.end > self.start:
            raise ConfigError("disturbance interval must have end > start")


def field_from_inclination(inclination: float, magnitude: float = 1.0) -> tuple[float, float, float]:
    """Reference field pointing North and dipping by ``inclination`` below the horizon."""
    return (magnitude * math.cos(inclination), 0.0, -magnitude * math.sin(inclination))


@dataclass
class MagEnvSpec:
    field_ref: tuple[float, float, float] = field_from_inclination(math.radians(60.0))
    disturbances: list[Disturbance] = field(default_factory=list)

    def __post_init__(self):
        self.disturbances = [d if isinstance(d, Disturbance) else Disturbance(**d) for d in self.disturbances]
        b = np.asarray(self.field_ref, dtype=float)
        if np.linalg.norm(b) == 0 or np.hypot(b[0], b[1]) < 1e-9:
            raise ConfigError("reference field must be nonzero and non-vertical")

    def field_at(self, distance) -> np.ndarray:
        """n-frame field at each path distance."""
        d = np.atleast_1d(np.asarray(distance, dtype=float))
        out = np.tile(np.asarray(self.field_ref, dtype=float), (len(d), 1))
        for dist in self.disturbances:
            inside = (d >= dist.start) & (d < dist.end)
            vec = np.asarray(dist.vector, dtype=float)
            if dist.kind == "hard_offset":
                out[inside] += vec
            else:
                out[inside] += (d[inside] - dist.start)[:, None] * vec
        return out

    def disturbed(self, distance) -> np.ndarray:
        d = np.atleast_1d(np.asarray(distance, dtype=float))
        mask = np.zeros(len(d), dtype=bool)
        for dist in self.disturbances:
            mask |= (d >= dist.start) & (d < dist.end)
        return mask


@dataclass
class Truth:
    """Ground truth per sample. ``stance`` marks samples at rest over the whole preceding interval."""

    t: np.ndarray
    r: np.ndarray
    v: np.ndarray
    q: np.ndarray
    stance: np.ndarray
    distance: np.ndarray  # cumulative horizontal path length, m
    rate: float

    def __len__(self) -> int:
        return len(self.t)

    @property
    def total_distance(self) -> float:
        return float(self.distance[-1])

    def euler(self) -> np.ndarray:
        from .mathcore import euler_from_quat

        return np.array([euler_from_quat(q) for q in self.q])


def _quintic(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _bump(s):
    # peak 1 at s=0.5, zero value/slope/curvature at both ends
    return 64.0 * (s * (1.0 - s)) ** 3


def _strides(path: PathSpec, gait: GaitSpec):
    """Yield (dx, dy, dpsi) for every stride."""
    psi = 0.0
    for seg in path.segments:
        if seg.kind == "straight":
            count = max(1, round(seg.value / gait.step_length))
            step = seg.value / count
            for _ in range(count):
                yield step * math.cos(psi), -step * math.sin(psi), 0.0, psi
        else:
            count = min(3, max(1, math.ceil(abs(seg.value) / MAX_TURN_PER_STRIDE - 1e-12)))
            for _ in range(count):
                yield 0.0, 0.0, seg.value / count, psi
                psi += seg.value / count


def generate_truth(path: PathSpec, gait: GaitSpec, rate: float = 100.0) -> Truth:
    if not rate > 0:
        raise ConfigError("rate must be positive")
    rng = np.random.default_rng(gait.seed)
    pos_chunks: list[np.ndarray] = []
    att_chunks: list[np.ndarray] = []  # (pitch, heading) per sample
    still_chunks: list[np.ndarray] = []

    pos = np.zeros(3)
    psi = 0.0

    def rest(n: int):
        pos_chunks.append(np.tile(pos, (n, 1)))
        att_chunks.append(np.tile([0.0, psi], (n, 1)))
        still_chunks.append(np.ones(n, dtype=bool))

    rest(max(1, round(path.start_rest * rate)))
    strides = list(_strides(path, gait))
    for i, (dx, dy, dpsi, _) in enumerate(strides):
        duration = gait.step_duration
        if gait.jitter > 0:
            duration *= 1.0 + gait.jitter * rng.uniform(-1.0, 1.0)
        total = max(4, round(duration * rate))
        n_stance = max(2, round(gait.stance_fraction * total))
        m = total - n_stance
        s = np.arange(1, m + 1) / m
        h = _quintic(s)
        chunk = np.empty((m, 3))
        chunk[:, 0] = pos[0] + dx * h
        chunk[:, 1] = pos[1] + dy * h
        chunk[:, 2] = pos[2] + gait.swing_peak_height * _bump(s)
        pos_chunks.append(chunk)
        att = np.empty((m, 2))
        att[:, 0] = gait.swing_pitch * _bump(s)
        att[:, 1] = psi + dpsi * h
        att_chunks.append(att)
        still_chunks.append(np.zeros(m, dtype=bool))
        pos = chunk[-1].copy()
        psi = att[-1, 1]
        if i == len(strides) - 1:
            n_stance += round(path.end_rest * rate)
        rest(n_stance)

    r = np.concatenate(pos_chunks)
    att = np.concatenate(att_chunks)
    n = len(r)
    t = np.arange(n) / rate
    v = np.zeros_like(r)
    v[1:] = (r[1:] - r[:-1]) * rate
    zero_v = np.all(v == 0.0, axis=1)
    stance = zero_v.copy()
    stance[1:] &= zero_v[:-1]
    q = np.array([rotmat_to_quat(rotmat_from_euler((0.0, p, h))) for p, h in att])
    # keep quaternion sign continuous
    for k in range(1, n):
        if q[k] @ q[k - 1] < 0:
            q[k] = -q[k]
    step = np.zeros(n)
    step[1:] = np.hypot(r[1:, 0] - r[:-1, 0], r[1:, 1] - r[:-1, 1])
    return Truth(t, r, v, q, stance, np.cumsum(step), rate)


def _quat_mul_batch(p, q):
    pw, px, py, pz = p.T
    qw, qx, qy, qz = q.T
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=1,
    )


def _rotvec_batch(q):
    q = np.where(q[:, :1] < 0, -q, q)
    s = np.linalg.norm(q[:, 1:], axis=1)
    angle = 2.0 * np.arctan2(s, q[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(s > 1e-12, angle / np.where(s > 0, s, 1.0), 2.0 / q[:, 0])
    return k[:, None] * q[:, 1:]


def ideal_imu(truth: Truth, g: float = GRAVITY) -> ImuStream:
    """Noise-free specific force and angular rate consistent with the truth."""
    n = len(truth)
    dt = 1.0 / truth.rate
    gyro = np.zeros((n, 3))
    conj = truth.q[:-1] * np.array([1.0, -1.0, -1.0, -1.0])
    gyro[1:] = _rotvec_batch(_quat_mul_batch(conj, truth.q[1:])) / dt
    acc_n = np.zeros((n, 3))
    acc_n[1:] = (truth.v[1:] - truth.v[:-1]) / dt
    acc_n[:, 2] += g
    C = np.array([quat_to_rotmat(q) for q in truth.q])
    acc = np.einsum("kji,kj->ki", C, acc_n)
    return ImuStream(truth.t.copy(), acc, gyro)


def corrupt(ideal: ImuStream, err: SensorErrorSpec, mag_env: MagEnvSpec | None, truth: Truth) -> ImuStream:
    """Add biases, white noise and (optionally) the magnetometer channel."""
    rng = np.random.default_rng(err.seed)
    n = len(ideal)
    acc = ideal.acc + np.asarray(err.acc_bias, dtype=float)
    gyro = ideal.gyro + np.asarray(err.gyro_bias, dtype=float)
    if err.acc_noise > 0:
        acc = acc + rng.normal(0.0, err.acc_noise, (n, 3))
    if err.gyro_noise > 0:
        gyro = gyro + rng.normal(0.0, err.gyro_noise, (n, 3))
    mag = None
    if mag_env is not None:
        field_n = mag_env.field_at(truth.distance)
        C = np.array([quat_to_rotmat(q) for q in truth.q])
        mag = np.einsum("kji,kj->ki", C, field_n)
        if err.mag_noise > 0:
            mag = mag + rng.normal(0.0, err.mag_noise, (n, 3))
    elif ideal.mag is not None:
        mag = ideal.mag.copy()
    return ImuStream(ideal.t.copy(), acc, gyro, mag)


@dataclass
class Scenario:
    path: PathSpec
    gait: GaitSpec = field(default_factory=GaitSpec)
    errors: SensorErrorSpec = field(default_factory=SensorErrorSpec)
    mag_env: MagEnvSpec | None = field(default_factory=MagEnvSpec)
    rate: float = 100.0
    g: float = GRAVITY


def simulate(sc: Scenario) -> tuple[Truth, ImuStream]:
    truth = generate_truth(sc.path, sc.gait, sc.rate)
    return truth, corrupt(ideal_imu(truth, sc.g), sc.errors, sc.mag_env, truth)
