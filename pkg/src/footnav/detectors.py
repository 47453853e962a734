"""
Windowed hypothesis tests.

* SHOE stance detector: accelerometer deviation from a gravity vector of
  fixed length plus gyroscope energy.
* Proposed quasi-static field detector (QMD): heading disagreement between
  the INS and the compass together with the deviation of the field
  magnitude from its calibrated reference value.
* Classical QMD baseline: magnitude-variance test, blind to constant offsets.

Thresholds use a strict ``<``; ties reject the still / clean hypothesis.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import chi2

from .errors import DegenerateWindowError
from .mathcore import wrap_angle

DEFAULT_FALSE_ALARM = 0.01


def chi2_threshold(dof: int, scale: float, false_alarm: float = DEFAULT_FALSE_ALARM) -> float:
    """``scale * chi2.ppf(1 - false_alarm, dof) / dof``."""
    return float(scale * chi2.ppf(1.0 - false_alarm, dof) / dof)


@dataclass
class DetectorConfig:
    """
    Detector tuning.

    ``window`` is the QMD window length N; SHOE has its own, much shorter
    ``shoe_window``. When ``qmd_threshold`` or ``classical_threshold`` is
    None it is derived from the chi-square distribution of the statistic
    under the clean-field hypothesis at ``false_alarm`` rejection rate.
    """

    window: int = 50
    shoe_window: int = 5
    acc_var: float = 0.02**2
    gyro_var: float = 0.002**2
    shoe_threshold: float = 30.0
    heading_var: float = math.radians(5.0) ** 2
    field_var: float = 0.05**2
    field_ref: float = 1.0
    qmd_threshold: float | None = None
    classical_threshold: float | None = None
    false_alarm: float = DEFAULT_FALSE_ALARM

    def __post_init__(self):
        if self.window < 1 or self.shoe_window < 1:
            raise ValueError("window lengths must be >= 1")
        for name in ("acc_var", "gyro_var", "heading_var", "field_var", "shoe_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.qmd_threshold is None:
            # N*T ~ chi2(2N) under the clean hypothesis
            self.qmd_threshold = chi2_threshold(2 * self.window, 2.0, self.false_alarm)
        if self.classical_threshold is None:
            dof = max(self.window - 1, 1)
            self.classical_threshold = chi2_threshold(dof, self.field_var, self.false_alarm)
        if not (self.qmd_threshold > 0 and self.classical_threshold > 0):
            raise ValueError("thresholds must be > 0")


# --- SHOE -----------------------------------------------------------------


def shoe_statistic(acc, gyro, cfg: DetectorConfig, g: float = 9.81) -> float:
    """SHOE test statistic of one window of ``(N, 3)`` acc/gyro samples."""
    acc = np.asarray(acc, dtype=float)
    gyro = np.asarray(gyro, dtype=float)
    mean = acc.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateWindowError("mean specific force is zero")
    dev = acc - g * mean / norm
    n = len(acc)
    return float((np.sum(dev * dev) / cfg.acc_var + np.sum(gyro * gyro) / cfg.gyro_var) / n)


def shoe_statistics(acc, gyro, cfg: DetectorConfig, g: float = 9.81) -> np.ndarray:
    """
    SHOE statistic for every full window of a stream, stride 1.

    Entry ``k`` covers samples ``k .. k + shoe_window - 1``.
    """
    w = cfg.shoe_window
    A = sliding_window_view(np.asarray(acc, dtype=float), (w, 3))[:, 0]
    G = sliding_window_view(np.asarray(gyro, dtype=float), (w, 3))[:, 0]
    mean = A.mean(axis=1)
    norm = np.linalg.norm(mean, axis=1)
    if np.any(norm == 0.0):
        raise DegenerateWindowError("mean specific force is zero")
    dev = A - (g * mean / norm[:, None])[:, None, :]
    return (np.sum(dev * dev, axis=(1, 2)) / cfg.acc_var + np.sum(G * G, axis=(1, 2)) / cfg.gyro_var) / w


def is_stance(T: float, cfg: DetectorConfig) -> bool:
    return T < cfg.shoe_threshold


def stance_labels(acc, gyro, cfg: DetectorConfig, g: float = 9.81) -> np.ndarray:
    """
    Offline per-sample stance flags: every sample of a window that passes
    the test is marked as stance.
    """
    T = shoe_statistics(acc, gyro, cfg, g)
    passed = T < cfg.shoe_threshold
    out = np.zeros(len(acc), dtype=bool)
    for j in range(cfg.shoe_window):
        out[j : j + len(passed)] |= passed
    return out


class ShoeWindow:
    """Trailing-window SHOE evaluator for streaming use (single owner).

    Keeps the last ``shoe_window`` samples and evaluates the same statistic
    as :func:`shoe_statistic` using scalar arithmetic, which is much
    cheaper than numpy for a handful of samples.
    """

    def __init__(self, cfg: DetectorConfig, g: float = 9.81):
        self.cfg = cfg
        self.g = g
        self._acc: deque[tuple[float, float, float]] = deque(maxlen=cfg.shoe_window)
        self._gyro_energy: deque[float] = deque(maxlen=cfg.shoe_window)

    def push(self, acc, gyro) -> float | None:
        """Add a sample; return the statistic once the window is full."""
        ax, ay, az = (float(c) for c in acc)
        gx, gy, gz = (float(c) for c in gyro)
        self._acc.append((ax, ay, az))
        self._gyro_energy.append(gx * gx + gy * gy + gz * gz)
        n = self.cfg.shoe_window
        if len(self._acc) < n:
            return None
        mx = sum(a[0] for a in self._acc) / n
        my = sum(a[1] for a in self._acc) / n
        mz = sum(a[2] for a in self._acc) / n
        norm = math.sqrt(mx * mx + my * my + mz * mz)
        if norm == 0.0:
            raise DegenerateWindowError("mean specific force is zero")
        k = self.g / norm
        ux, uy, uz = k * mx, k * my, k * mz
        acc_term = sum((a[0] - ux) ** 2 + (a[1] - uy) ** 2 + (a[2] - uz) ** 2 for a in self._acc)
        return (acc_term / self.cfg.acc_var + sum(self._gyro_energy) / self.cfg.gyro_var) / n


# --- QMD ------------------------------------------------------------------


def heading_disagreement(psi_ins: float, psi_compass: float) -> float:
    """``|psi_ins - psi_compass|`` folded to [0, pi]."""
    return abs(wrap_angle(psi_ins - psi_compass))


def qmd_statistic(dpsi, field_dev, cfg: DetectorConfig) -> float:
    """Mean normalized energy of heading disagreement and field-magnitude deviation."""
    dpsi = np.asarray(dpsi, dtype=float)
    field_dev = np.asarray(field_dev, dtype=float)
    return float(np.mean(dpsi * dpsi / cfg.heading_var + field_dev * field_dev / cfg.field_var))


def qmd_decide(T: float, cfg: DetectorConfig) -> int:
    """1 for a clean (quasi-static) field, 0 for a disturbance."""
    return 1 if T < cfg.qmd_threshold else 0


def classical_qmd(field_norms, cfg: DetectorConfig) -> int:
    """1 when the field magnitude is steady over the window, else 0."""
    x = np.asarray(field_norms, dtype=float)
    var = float(np.var(x, ddof=1)) if len(x) > 1 else 0.0
    return 1 if var < cfg.classical_threshold else 0


class QmdWindow:
    """Sliding window of QMD observations (heading disagreement, field deviation).

    The statistic is kept as a running sum of nonnegative terms and is
    recomputed exactly once per window length to bound rounding drift.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self._terms: deque[float] = deque(maxlen=cfg.window)
        self._sum = 0.0
        self._since_refresh = 0

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def full(self) -> bool:
        return len(self._terms) == self.cfg.window

    def push(self, psi_ins: float, psi_compass: float, field_norm: float) -> float:
        """Add one observation and return the statistic over the current contents."""
        dpsi = heading_disagreement(psi_ins, psi_compass)
        dev = field_norm - self.cfg.field_ref
        term = dpsi * dpsi / self.cfg.heading_var + dev * dev / self.cfg.field_var
        if self.full:
            self._sum -= self._terms[0]
        self._terms.append(term)
        self._sum += term
        self._since_refresh += 1
        if self._since_refresh >= self.cfg.window:
            self._sum = math.fsum(self._terms)
            self._since_refresh = 0
        return max(self._sum, 0.0) / len(self._terms)


class FieldNormWindow:
    """Sliding window of field magnitudes for the classical detector.

    Keeps running sums of deviations from ``field_ref`` (which avoids
    cancellation in the variance) and recomputes them once per window.
    """

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self._dev: deque[float] = deque(maxlen=cfg.window)
        self._s1 = 0.0
        self._s2 = 0.0
        self._since_refresh = 0

    @property
    def full(self) -> bool:
        return len(self._dev) == self.cfg.window

    def push(self, field_norm: float) -> None:
        d = field_norm - self.cfg.field_ref
        if self.full:
            old = self._dev[0]
            self._s1 -= old
            self._s2 -= old * old
        self._dev.append(d)
        self._s1 += d
        self._s2 += d * d
        self._since_refresh += 1
        if self._since_refresh >= self.cfg.window:
            self._s1 = math.fsum(self._dev)
            self._s2 = math.fsum(x * x for x in self._dev)
            self._since_refresh = 0

    def __len__(self) -> int:
        return len(self._dev)

    def variance(self) -> float:
        """Sample variance (``ddof=1``) of the window; 0 for fewer than two samples."""
        n = len(self._dev)
        if n < 2:
            return 0.0
        return max(self._s2 - self._s1 * self._s1 / n, 0.0) / (n - 1)

    def decide(self) -> int:
        """Same decision as :func:`classical_qmd` on the window contents."""
        return 1 if self.variance() < self.cfg.classical_threshold else 0
