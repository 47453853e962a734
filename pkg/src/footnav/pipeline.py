"""
Per-sample estimator loop.

Every sample is mechanized and the covariance predicted. When the trailing
SHOE window reports stance, the filter is updated with roll/pitch from the
accelerometer, an optional heading row and the zero-velocity rows, and
the estimate is injected back into the navigation state.

Heading row per variant:

* ``IEZ``: none; the magnetometer is never read.
* ``IEZ_CQMD``: compass when the classical magnitude-variance detector
  reports a steady field, otherwise none.
* ``AIEZ``: compass when the proposed detector reports a clean field,
  otherwise HDR.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, ekf
from .detectors import DetectorConfig, FieldNormWindow, QmdWindow, is_stance, qmd_decide
from .errors import DataError, DegenerateWindowError, LowGravityError, NumericalError, UndefinedHeadingError
from .heading import (
    HdrState,
    HeadingMeasurement,
    HeadingSource,
    attitude_error_meas,
    circular_mean,
    compass_error_meas,
    compass_heading,
    hdr_measure,
    roll_pitch_from_accel,
    select_heading,
)
from .ins import GRAVITY, ImuSample, ImuStream, NavState, compensate
from .mathcore import EulerAngles, euler_error_jacobian, euler_from_rotmat, quat_from_euler, quat_to_rotmat


class Variant(str, enum.Enum):
    IEZ = "iez"
    IEZ_CQMD = "iez-cqmd"
    AIEZ = "aiez"

    @property
    def uses_mag(self) -> bool:
        return self is not Variant.IEZ


@dataclass
class VariantConfig:
    variant: Variant = Variant.AIEZ
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    noise: ekf.NoiseConfig = field(default_factory=ekf.NoiseConfig)
    hdr_n: int = 4
    hdr_xi: float = math.radians(2.0)
    hdr_per_sample: bool = False
    hdr_skip_curve: bool = False
    declination: float = 0.0
    g: float = GRAVITY
    mag_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mag_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    initial_heading: float | None = None
    constrain_yaw: bool = True

    def __post_init__(self):
        self.variant = Variant(self.variant)


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    r: np.ndarray
    v: np.ndarray
    euler: EulerAngles
    stance: bool
    qmd: int | None
    heading_source: HeadingSource


@dataclass(frozen=True)
class DetectorRecord:
    t: float
    shoe_T: float
    stance: bool
    qmd_T: float
    qmd_flag: int | None
    classical_flag: int | None
    ins_heading: float
    compass_heading: float
    heading_source: HeadingSource


@dataclass
class Trajectory:
    points: list[TrajectoryPoint] = field(default_factory=list)
    detector_log: list[DetectorRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.r for p in self.points])

    @property
    def times(self) -> np.ndarray:
        return np.array([p.t for p in self.points])


@dataclass(frozen=True)
class RunMetrics:
    final_position_error: float
    vertical_error: float
    total_distance: float
    ttd_error_pct: float


class Pipeline:
    """One estimator instance over one sample stream.

    With ``full_log`` the magnetometer-based variants evaluate both field
    detectors at every stance sample for the detector log, whichever one
    gates the heading row.
    """

    def __init__(self, cfg: VariantConfig, full_log: bool = False):
        self.cfg = cfg
        self.full_log = full_log
        self.state: NavState | None = None
        self.P: np.ndarray | None = None
        w = cfg.detector.shoe_window
        self._shoe_acc = np.zeros((w, 3))
        self._shoe_gyro = np.zeros((w, 3))
        self._shoe_count = 0
        self._qmd = QmdWindow(cfg.detector)
        self._norms = FieldNormWindow(cfg.detector)
        self._hdr = HdrState(cfg.hdr_n, cfg.hdr_xi, cfg.noise.hdr_var, skip_curve=cfg.hdr_skip_curve)
        self._stance_headings: list[float] = []
        # every entry of Q is proportional to dt
        self._q_rate = np.diag(ekf.build_q(cfg.noise, 1.0)).copy()
        self._mag_offset = np.asarray(cfg.mag_offset, dtype=float)
        self._mag_scale = np.asarray(cfg.mag_scale, dtype=float)
        self._C: np.ndarray | None = None
        self.updates = 0

    # -- helpers ----------------------------------------------------------

    def _mag(self, sample: ImuSample) -> np.ndarray | None:
        if not self.cfg.variant.uses_mag:
            return None
        if sample.mag is None:
            raise DataError(f"variant {self.cfg.variant.value} needs magnetometer data")
        return (sample.mag - self._mag_offset) * self._mag_scale

    def _process_noise(self, dt: float) -> np.ndarray:
        """Diagonal of Q for this sample interval."""
        return self._q_rate * dt

    def _initialize(self, sample: ImuSample, mag) -> None:
        try:
            roll, pitch = roll_pitch_from_accel(sample.acc, self.cfg.g)
        except LowGravityError:
            roll = pitch = 0.0
        heading = self.cfg.initial_heading
        if heading is None:
            heading = 0.0
            if mag is not None:
                try:
                    heading = compass_heading(mag, roll, pitch, self.cfg.declination)
                except UndefinedHeadingError:
                    pass
        self.state = NavState(q=quat_from_euler((roll, pitch, heading)), t=sample.t)
        self._C = quat_to_rotmat(self.state.q)
        self._v_lin = self.state.v
        self.P = ekf.initial_covariance(self.cfg.noise)

    def _point(self, stance: bool, qmd: int | None, source: HeadingSource, euler: EulerAngles | None = None) -> TrajectoryPoint:
        s = self.state
        if euler is None:
            euler = euler_from_rotmat(self._C)
        return TrajectoryPoint(s.t, s.r.copy(), s.v.copy(), euler, stance, qmd, source)

    def _flush_stance(self) -> None:
        if self._stance_headings:
            self._hdr = self._hdr.pushed(circular_mean(self._stance_headings))
            self._stance_headings = []

    # -- main step -------------------------------------------------------

    def step(self, sample: ImuSample) -> tuple[TrajectoryPoint, DetectorRecord]:
        mag = self._mag(sample)
        mag_norm = math.sqrt(float(mag @ mag)) if mag is not None else math.nan
        if self.state is None:
            self._initialize(sample, mag)
            acc_c, gyro_c = compensate(sample, self.state)
            T = self._push_shoe(acc_c, gyro_c)
            if mag is not None:
                self._norms.push(mag_norm)
            e = euler_from_rotmat(self._C)
            rec = DetectorRecord(sample.t, _nan(T), False, math.nan, None, None, e.heading, math.nan, HeadingSource.NONE)
            return self._point(False, None, HeadingSource.NONE), rec

        s = self.state
        dt = sample.t - s.t
        if not dt > 0:
            raise DataError(f"timestamps not strictly increasing at t={sample.t}")
        acc_c = sample.acc - s.ba
        gyro_c = sample.gyro - s.bg
        T = self._push_shoe(acc_c, gyro_c)
        stance = T is not None and is_stance(T, self.cfg.detector)

        q, v, r, C, acc_n = _kernels.mechanize(s.q, s.v, s.r, acc_c, gyro_c, dt, self.cfg.g)
        s = self.state = NavState(q, v, r, s.bg, s.ba, sample.t)
        self._C = C
        if self.cfg.constrain_yaw:
            # ekf.yaw_column, inlined
            v_lin = self._v_lin
            yaw_col = np.array((v_lin[1] - v[1], v[0] - v_lin[0], 0.0))
        else:
            yaw_col = np.array([-dt * acc_n[1], dt * acc_n[0], 0.0])
        self._v_lin = v
        self.P = _kernels.predict_covariance(self.P, C, acc_n, dt, self._process_noise(dt), yaw_col)

        if mag is not None:
            self._norms.push(mag_norm)

        e_pred = euler_from_rotmat(C)
        qmd_T = math.nan
        qmd_flag = classical_flag = None
        psi_c = math.nan
        source = HeadingSource.NONE

        if not stance:
            self._flush_stance()
            rec = DetectorRecord(sample.t, _nan(T), False, qmd_T, None, None, e_pred.heading, psi_c, source)
            return TrajectoryPoint(s.t, r, v, e_pred, False, None, source), rec

        try:
            roll_acc, pitch_acc = roll_pitch_from_accel(acc_c, self.cfg.g)
            rp = attitude_error_meas(e_pred.roll, e_pred.pitch, roll_acc, pitch_acc)
        except LowGravityError:
            roll_acc, pitch_acc = e_pred.roll, e_pred.pitch
            rp = None

        heading: HeadingMeasurement | None = None
        if mag is not None:
            compass = None
            try:
                psi_c = compass_heading(mag, roll_acc, pitch_acc, self.cfg.declination)
                compass = compass_error_meas(e_pred.heading, psi_c, self.cfg.noise.compass_var)
            except UndefinedHeadingError:
                pass
            if self.cfg.variant is Variant.IEZ_CQMD or self.full_log:
                classical_flag = self._norms.decide()
            if compass is not None and (self.cfg.variant is Variant.AIEZ or self.full_log):
                qmd_T = self._qmd.push(e_pred.heading, psi_c, mag_norm)
                qmd_flag = qmd_decide(qmd_T, self.cfg.detector)
            if self.cfg.variant is Variant.AIEZ:
                hdr = hdr_measure(self._hdr, e_pred.heading)
                heading = select_heading(qmd_flag if qmd_flag is not None else 0, compass, hdr)
                if self.cfg.hdr_per_sample:
                    self._hdr = self._hdr.pushed(e_pred.heading)
            else:
                heading = select_heading(classical_flag, compass, None)
        if heading is not None:
            source = heading.source

        z, J_att, r_diag = self._measurement(rp, heading, v, e_pred)
        ok, angle, P_new, q, C, v, r, bg, ba = _kernels.stance_update(
            self.P, C, s.q, v, r, s.bg, s.ba, z, J_att, r_diag, self.cfg.constrain_yaw
        )
        if not ok:
            raise NumericalError(f"filter update failed at t={sample.t}")
        if angle >= ekf.SMALL_ANGLE_LIMIT:
            ekf.log.warning("attitude correction %.3f rad exceeds small-angle validity", angle)
        self.P = P_new
        self._C = C
        self.state = NavState(q, v, r, bg, ba, s.t)
        e_post = euler_from_rotmat(self._C)
        self.updates += 1
        if self.cfg.variant is Variant.AIEZ and not self.cfg.hdr_per_sample:
            self._stance_headings.append(e_post.heading)

        flag = qmd_flag if self.cfg.variant is Variant.AIEZ else classical_flag
        rec = DetectorRecord(sample.t, T, True, qmd_T, qmd_flag, classical_flag, e_pred.heading, psi_c, source)
        return TrajectoryPoint(s.t, self.state.r, self.state.v, e_post, True, flag, source), rec

    def _push_shoe(self, acc_c, gyro_c) -> float | None:
        d = self.cfg.detector
        T = _kernels.shoe_push(self._shoe_acc, self._shoe_gyro, self._shoe_count, acc_c, gyro_c, self.cfg.g, d.acc_var, d.gyro_var)
        self._shoe_count += 1
        if T < 0.0:
            return None
        if math.isinf(T):
            raise DegenerateWindowError("mean specific force is zero")
        return T

    def _measurement(self, rp, heading: HeadingMeasurement | None, v, e_pred: EulerAngles):
        """Stance rows in the layout of :func:`footnav.ekf.build_measurement`, split for the kernel."""
        noise = self.cfg.noise
        rows: list[int] = []
        z: list[float] = []
        r_diag: list[float] = []
        if rp is not None:
            rows += [0, 1]
            z += [rp[0], rp[1]]
            r_diag += [noise.roll_var, noise.pitch_var]
        if heading is not None:
            rows.append(2)
            z.append(heading.innovation)
            r_diag.append(heading.var)
        z += [v[0], v[1], v[2]]
        r_diag += [noise.vel_var] * 3
        J = euler_error_jacobian(e_pred)[rows] if rows else np.zeros((0, 3))
        return np.array(z), J, np.array(r_diag)


def _nan(x: float | None) -> float:
    return math.nan if x is None else float(x)


def check_stream(stream: ImuStream) -> None:
    if len(stream) == 0:
        raise DataError("empty sample stream")
    if len(stream) > 1 and not np.all(np.diff(stream.t) > 0):
        k = int(np.argmin(np.diff(stream.t) > 0)) + 1
        raise DataError(f"timestamps not strictly increasing at sample {k}")
    if not (np.all(np.isfinite(stream.acc)) and np.all(np.isfinite(stream.gyro))):
        raise DataError("non-finite IMU values")


def run(stream: ImuStream, cfg: VariantConfig, full_log: bool = False) -> Trajectory:
    check_stream(stream)
    if cfg.variant.uses_mag and not stream.has_mag:
        raise DataError(f"variant {cfg.variant.value} needs magnetometer data")
    pipe = Pipeline(cfg, full_log)
    traj = Trajectory()
    for sample in stream:
        point, rec = pipe.step(sample)
        traj.points.append(point)
        traj.detector_log.append(rec)
    return traj


def metrics(traj: Trajectory, total_distance: float, origin=(0.0, 0.0, 0.0)) -> RunMetrics:
    """Horizontal loop-closure error and its share of the travelled distance."""
    if not total_distance > 0:
        raise ValueError("total_distance must be positive")
    gap = np.asarray(traj.points[-1].r, dtype=float) - np.asarray(origin, dtype=float)
    err = float(math.hypot(gap[0], gap[1]))
    return RunMetrics(err, float(gap[2]), float(total_distance), 100.0 * err / total_distance)
