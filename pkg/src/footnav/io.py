"""
CSV ingestion and output writers.

Every file starts with a ``# units:`` comment line followed by a header
row. Floats are written with ``repr`` so that a file read back yields the
exact values that were written. Angles in output files are degrees.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IngestError
from .ins import ImuStream
from .pipeline import DetectorRecord, RunMetrics, Trajectory
from .synth import Truth

log = logging.getLogger(__name__)

IMU_COLUMNS = ("t_s", "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z", "mag_x", "mag_y", "mag_z")
IMU_UNITS = "t_s=s acc=m/s^2 gyr=rad/s mag=normalized"

TRUTH_COLUMNS = (
    "t_s", "r_n_m", "r_w_m", "r_u_m", "v_n_mps", "v_w_mps", "v_u_mps",
    "roll_deg", "pitch_deg", "heading_deg", "stance", "distance_m",
)  # fmt: skip
TRAJECTORY_COLUMNS = (
    "t_s", "r_n_m", "r_w_m", "r_u_m", "v_n_mps", "v_w_mps", "v_u_mps",
    "roll_deg", "pitch_deg", "heading_deg", "stance", "qmd", "heading_source",
)  # fmt: skip
DETECTOR_COLUMNS = ("t_s", "shoe_T", "stance", "qmd_T", "qmd_flag", "heading_source")
DETECT_COLUMNS = (
    "t_s", "shoe_T", "stance", "qmd_T", "qmd_flag", "classical_flag",
    "ins_heading_deg", "compass_heading_deg", "heading_source",
)  # fmt: skip
METRICS_COLUMNS = ("variant", "position_error_m", "ttd_error_pct")

GAP_FACTOR = 2.0


# --- formatting -------------------------------------------------------------


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal form; ``nan`` for missing values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x + 0.0)  # folds -0.0


def _fmt_flag(x) -> str:
    return "" if x is None else str(int(x))


def _deg(x: float) -> str:
    return fmt_float(math.degrees(x))


def write_csv(path, columns: Sequence[str], units: str, rows: Iterable[Sequence[str]]) -> None:
    """Write a units comment, a header and pre-formatted rows (LF line endings).

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_csv(path, columns, units, rows)
        return
    with open(path, "w", newline="", encoding="ascii") as fh:
        _write_csv(fh, columns, units, rows)


def _write_csv(fh, columns, units, rows) -> None:
    fh.write(f"# units: {units}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)


def read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and ``(line_number, fields)`` rows of a file, comments skipped."""
    header: list[str] | None = None
    rows: list[tuple[int, list[str]]] = []
    with open(path, newline="", encoding="ascii") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or fields[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [f.strip() for f in fields]
            else:
                rows.append((lineno, fields))
    if header is None:
        raise IngestError("file has no header row", line=None)
    return header, rows


# --- IMU --------------------------------------------------------------------


def ingest(path) -> ImuStream:
    """
    Read an IMU log.

    The header must be ``IMU_COLUMNS`` or its first seven columns (no
    magnetometer). Gaps longer than twice the median sample period are
    logged as warnings; see :func:`find_gaps`.

    Raises
    ------
    IngestError
        For a missing file, wrong header, wrong column count, a field that
        is not a finite number, or non-increasing time. The message names
        the offending line.
    """
    try:
        header, rows = read_rows(path)
    except FileNotFoundError as exc:
        raise IngestError(f"no such file: {path}", line=None) from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable file {path}: {exc}", line=None) from exc
    if tuple(header) == IMU_COLUMNS:
        has_mag = True
    elif tuple(header) == IMU_COLUMNS[:7]:
        has_mag = False
    else:
        raise IngestError(f"unexpected header {','.join(header)}", line=None)
    ncol = len(header)
    data = np.empty((len(rows), ncol))
    for i, (lineno, fields) in enumerate(rows):
        if len(fields) != ncol:
            raise IngestError(f"expected {ncol} columns, got {len(fields)}", line=lineno)
        for j, f in enumerate(fields):
            try:
                x = float(f)
            except ValueError:
                raise IngestError(f"column {header[j]} is not a number: {f!r}", line=lineno) from None
            if not math.isfinite(x):
                raise IngestError(f"column {header[j]} is not finite", line=lineno)
            data[i, j] = x
        if i > 0 and not data[i, 0] > data[i - 1, 0]:
            raise IngestError("time does not increase", line=lineno)
    if len(rows) == 0:
        raise IngestError("file has no samples", line=None)
    stream = ImuStream(data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:10] if has_mag else None)
    for k in find_gaps(stream.t):
        log.warning("sample gap of %.4f s before t=%s", stream.t[k] - stream.t[k - 1], fmt_float(stream.t[k]))
    return stream


def find_gaps(t, factor: float = GAP_FACTOR) -> np.ndarray:
    """Indices ``k`` where ``t[k] - t[k-1]`` exceeds ``factor`` nominal periods.

    The nominal period is the median interval.
    """
    t = np.asarray(t, dtype=float)
    if len(t) < 3:
        return np.zeros(0, dtype=int)
    d = np.diff(t)
    return np.flatnonzero(d > factor * np.median(d)) + 1


def write_imu(path, stream: ImuStream) -> None:
    cols = IMU_COLUMNS if stream.has_mag else IMU_COLUMNS[:7]

    def rows():
        for i in range(len(stream)):
            vals = [stream.t[i], *stream.acc[i], *stream.gyro[i]]
            if stream.has_mag:
                vals += list(stream.mag[i])
            yield [fmt_float(v) for v in vals]

    write_csv(path, cols, IMU_UNITS, rows())


# --- truth and results ------------------------------------------------------


def write_truth(path, truth: Truth) -> None:
    e = truth.euler()

    def rows():
        for i in range(len(truth)):
            yield [
                fmt_float(truth.t[i]),
                *(fmt_float(x) for x in truth.r[i]),
                *(fmt_float(x) for x in truth.v[i]),
                *(_deg(x) for x in e[i]),
                str(int(truth.stance[i])),
                fmt_float(truth.distance[i]),
            ]

    write_csv(path, TRUTH_COLUMNS, "t_s=s r=m v=m/s angles=deg frame=north-west-up", rows())


def write_trajectory(path, traj: Trajectory) -> None:
    def rows():
        for p in traj.points:
            yield [
                fmt_float(p.t),
                *(fmt_float(x) for x in p.r),
                *(fmt_float(x) for x in p.v),
                *(_deg(x) for x in p.euler),
                str(int(p.stance)),
                _fmt_flag(p.qmd),
                p.heading_source.value,
            ]

    write_csv(path, TRAJECTORY_COLUMNS, "t_s=s r=m v=m/s angles=deg frame=north-west-up", rows())


def write_detector_log(path, records: Sequence[DetectorRecord]) -> None:
    """The run log: SHOE and QMD statistics with the chosen heading source."""

    def rows():
        for r in records:
            yield [fmt_float(r.t), fmt_float(r.shoe_T), str(int(r.stance)), fmt_float(r.qmd_T), _fmt_flag(r.qmd_flag), r.heading_source.value]

    write_csv(path, DETECTOR_COLUMNS, "t_s=s shoe_T=1 qmd_T=1", rows())


def write_detect_log(path, records: Sequence[DetectorRecord]) -> None:
    """The extended log: both field detectors plus INS and compass headings."""

    def rows():
        for r in records:
            yield [
                fmt_float(r.t),
                fmt_float(r.shoe_T),
                str(int(r.stance)),
                fmt_float(r.qmd_T),
                _fmt_flag(r.qmd_flag),
                _fmt_flag(r.classical_flag),
                _deg(r.ins_heading),
                _deg(r.compass_heading),
                r.heading_source.value,
            ]

    write_csv(path, DETECT_COLUMNS, "t_s=s shoe_T=1 qmd_T=1 headings=deg", rows())


@dataclass(frozen=True)
class MetricsRow:
    variant: str
    metrics: RunMetrics


def write_metrics(path, rows: Sequence[MetricsRow]) -> None:
    """Metrics table; the travelled distance used for the percentage goes in the units line."""
    dists = sorted({fmt_float(r.metrics.total_distance) for r in rows})
    units = f"position_error_m=m ttd_error_pct=% total_distance_m={'/'.join(dists)}"
    out = ([r.variant, fmt_float(r.metrics.final_position_error), fmt_float(r.metrics.ttd_error_pct)] for r in rows)
    write_csv(path, METRICS_COLUMNS, units, out)


def read_trajectory_positions(path) -> np.ndarray:
    """``(N, 3)`` positions from a trajectory CSV."""
    header, rows = read_rows(path)
    idx = [header.index(c) for c in ("r_n_m", "r_w_m", "r_u_m")]
    return np.array([[float(f[i]) for i in idx] for _, f in rows])


def path_length(positions) -> float:
    """Horizontal length of a polyline."""
    p = np.asarray(positions, dtype=float)
    if len(p) < 2:
        return 0.0
    d = np.diff(p[:, :2], axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
