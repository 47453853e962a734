"""
Stance-phase attitude corrections: roll and pitch from gravity, the
tilt-compensated electronic compass, and heuristic heading drift reduction
(HDR), plus the detector-gated choice between compass and HDR.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

from .errors import LowGravityError, UndefinedHeadingError
from .mathcore import wrap_angle


class HeadingSource(str, enum.Enum):
    COMPASS = "compass"
    HDR = "hdr"
    NONE = "none"


@dataclass(frozen=True)
class HeadingMeasurement:
    innovation: float
    var: float
    source: HeadingSource

    def __post_init__(self):
        if self.source is not HeadingSource.NONE and not self.var > 0:
            raise ValueError("heading variance must be > 0")


NO_HEADING = HeadingMeasurement(0.0, 0.0, HeadingSource.NONE)


def roll_pitch_from_accel(acc, g: float = 9.81) -> tuple[float, float]:
    """Roll and pitch of a static sensor from its specific force."""
    ax, ay, az = (float(c) for c in acc)
    if math.sqrt(ax * ax + ay * ay + az * az) <= 0.5 * g:
        raise LowGravityError("specific force below half of gravity")
    roll = math.atan2(ay, az)
    pitch = -math.atan2(ax, math.sqrt(ay * ay + az * az))
    return roll, pitch


def attitude_error_meas(roll_pred: float, pitch_pred: float, roll_acc: float, pitch_acc: float) -> tuple[float, float]:
    return wrap_angle(roll_pred - roll_acc), pitch_pred - pitch_acc


def compass_heading(mag, roll: float, pitch: float, declination: float = 0.0) -> float:
    """
    Tilt-compensated magnetic heading, clockwise from North, in (-pi, pi].

    Raises
    ------
    UndefinedHeadingError
        If the levelled horizontal field is (numerically) zero.
    """
    bx, by, bz = (float(c) for c in mag)
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    b_north = bx * cp + by * sp * sr + bz * cr * sp
    b_east = by * cr - bz * sr
    if abs(b_north) < 1e-12 and abs(b_east) < 1e-12:
        raise UndefinedHeadingError("horizontal field component is zero")
    return wrap_angle(math.atan2(b_east, b_north) + declination)


def compass_error_meas(psi_pred: float, psi_compass: float, var: float) -> HeadingMeasurement:
    return HeadingMeasurement(wrap_angle(psi_pred - psi_compass), var, HeadingSource.COMPASS)


def circular_mean(angles) -> float:
    s = sum(math.sin(a) for a in angles)
    c = sum(math.cos(a) for a in angles)
    return math.atan2(s, c)


@dataclass(frozen=True)
class HdrState:
    """
    Heading history for HDR.

    ``skip_curve`` drops the heading row on curved paths instead of feeding
    a zero innovation.
    """

    n: int = 4
    xi: float = math.radians(2.0)
    var: float = math.radians(2.0) ** 2
    history: tuple[float, ...] = field(default_factory=tuple)
    skip_curve: bool = False

    def __post_init__(self):
        if self.n < 1 or not self.xi > 0 or not self.var > 0:
            raise ValueError("invalid HDR parameters")

    @property
    def ready(self) -> bool:
        return len(self.history) >= self.n

    @functools.cached_property
    def mean(self) -> float:
        return circular_mean(self.history)

    def pushed(self, psi: float) -> "HdrState":
        hist = (self.history + (wrap_angle(psi),))[-self.n :]
        return HdrState(self.n, self.xi, self.var, hist, self.skip_curve)


def hdr_measure(state: HdrState, psi: float) -> HeadingMeasurement:
    """HDR heading innovation of ``psi`` against the stored history (history unchanged)."""
    if not state.ready:
        return NO_HEADING
    dpsi = wrap_angle(psi - state.mean)
    if abs(dpsi) <= state.xi:
        return HeadingMeasurement(dpsi, state.var, HeadingSource.HDR)
    if state.skip_curve:
        return NO_HEADING
    return HeadingMeasurement(0.0, state.var, HeadingSource.HDR)


def hdr_update(state: HdrState, psi: float) -> tuple[HeadingMeasurement, HdrState]:
    """Measure ``psi`` against the history, then append it."""
    return hdr_measure(state, psi), state.pushed(psi)


def select_heading(qmd: int, compass: HeadingMeasurement | None, hdr: HeadingMeasurement | None) -> HeadingMeasurement | None:
    """Pass the compass through on a clean field and HDR otherwise."""
    chosen = compass if qmd == 1 else hdr
    if chosen is None or chosen.source is HeadingSource.NONE:
        return None
    return chosen
