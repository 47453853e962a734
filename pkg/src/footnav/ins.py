"""Strapdown mechanization (no Earth rate, no transport rate)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .mathcore import quat_propagate, quat_to_rotmat

GRAVITY = 9.81


def _zeros3() -> np.ndarray:
    return np.zeros(3)


@dataclass(frozen=True)
class ImuSample:
    """One timestamped reading. ``mag`` is None when the log has no magnetometer."""

    t: float
    acc: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray | None = None


@dataclass
class ImuStream:
    """Column-oriented sample stream; iterating yields :class:`ImuSample`."""

    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float).reshape(-1, 3)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(-1, 3)
        if self.mag is not None:
            self.mag = np.asarray(self.mag, dtype=float).reshape(-1, 3)
        n = len(self.t)
        if len(self.acc) != n or len(self.gyro) != n or (self.mag is not None and len(self.mag) != n):
            raise ValueError("stream columns have different lengths")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ImuSample:
        mag = None if self.mag is None else self.mag[i]
        return ImuSample(float(self.t[i]), self.acc[i], self.gyro[i], mag)

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def has_mag(self) -> bool:
        return self.mag is not None

    def with_mag(self, mag: np.ndarray | None) -> "ImuStream":
        return ImuStream(self.t.copy(), self.acc.copy(), self.gyro.copy(), None if mag is None else np.array(mag))


@dataclass
class NavState:
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    v: np.ndarray = field(default_factory=_zeros3)
    r: np.ndarray = field(default_factory=_zeros3)
    bg: np.ndarray = field(default_factory=_zeros3)
    ba: np.ndarray = field(default_factory=_zeros3)
    t: float = 0.0

    def copy(self) -> "NavState":
        return NavState(self.q.copy(), self.v.copy(), self.r.copy(), self.bg.copy(), self.ba.copy(), self.t)


def compensate(sample: ImuSample, state: NavState) -> tuple[np.ndarray, np.ndarray]:
    """Remove the current bias estimates from a raw sample."""
    return sample.acc - state.ba, sample.gyro - state.bg


def propagate(state: NavState, acc_b, gyro_b, dt: float, g: float = GRAVITY) -> NavState:
    """
    Advance the navigation state by one sample.

    Attitude is updated first, then velocity with the new attitude, then
    position with the new velocity (semi-implicit Euler).
    """
    q = quat_propagate(state.q, gyro_b, dt)
    acc_n = quat_to_rotmat(q) @ acc_b
    acc_n[2] -= g
    v = state.v + acc_n * dt
    r = state.r + v * dt
    return replace(state, q=q, v=v, r=r, t=state.t + dt)
