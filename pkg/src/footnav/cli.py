"""
Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, FootnavError, NumericalError
from .ins import ImuStream
from .pipeline import Trajectory, Variant, metrics, run
from .synth import simulate

log = logging.getLogger("footnav")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="footnav", description="Foot-mounted inertial navigation with magnetically gated heading aiding.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic walk (truth and IMU CSV)")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)

    r = sub.add_parser("run", help="run one estimator variant on an IMU log")
    r.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    r.add_argument("--config", type=Path)
    r.add_argument("--input", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("compare", help="run all variants and tabulate their errors")
    c.add_argument("--config", type=Path)
    c.add_argument("--input", required=True, type=Path)
    c.add_argument("--out", required=True, type=Path)

    d = sub.add_parser("detect", help="write stance and field-detector logs")
    d.add_argument("--config", type=Path)
    d.add_argument("--input", required=True, type=Path)
    d.add_argument("--out", type=Path, help="directory for the log; stdout when omitted")
    return p


def _config(path: Path | None) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


def _out_dir(path: Path) -> Path:
    try:
        return io.ensure_dir(path)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc


def _total_distance(cfg: RunConfig, traj: Trajectory) -> float:
    if cfg.total_distance is not None:
        return cfg.total_distance
    if cfg.scenario is not None:
        return cfg.scenario.path.build().total_length()
    d = io.path_length(traj.positions)
    if not d > 0:
        raise DataError("trajectory has zero length; set total_distance in the config")
    return d


def _run_variant(stream: ImuStream, cfg: RunConfig, variant: Variant, full_log: bool = False):
    traj = run(stream, cfg.variant_config(variant), full_log=full_log)
    m = metrics(traj, _total_distance(cfg, traj), origin=traj.points[0].r)
    return traj, m


def _print_metrics(rows) -> None:
    print(f"{'variant':<10} {'position_error_m':>17} {'ttd_error_pct':>14}")
    for row in rows:
        m = row.metrics
        print(f"{row.variant:<10} {m.final_position_error:>17.3f} {m.ttd_error_pct:>14.3f}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args.out)
    truth, imu = simulate(cfg.build_scenario())
    io.write_truth(out / cfg.outputs.truth, truth)
    io.write_imu(out / cfg.outputs.imu, imu)
    print(f"{len(truth)} samples, {truth.total_distance:.3f} m -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args.config)
    stream = io.ingest(args.input)
    out = _out_dir(args.out)
    variant = Variant(args.variant)
    traj, m = _run_variant(stream, cfg, variant)
    io.write_trajectory(out / cfg.outputs.trajectory, traj)
    io.write_detector_log(out / cfg.outputs.detector_log, traj.detector_log)
    rows = [io.MetricsRow(variant.value, m)]
    io.write_metrics(out / cfg.outputs.metrics, rows)
    _print_metrics(rows)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args.config)
    stream = io.ingest(args.input)
    out = _out_dir(args.out)
    rows = []
    for variant in Variant:
        if variant.uses_mag and not stream.has_mag:
            log.warning("skipping %s: input has no magnetometer columns", variant.value)
            continue
        log.info("running %s", variant.value)
        traj, m = _run_variant(stream, cfg, variant)
        stem = Path(cfg.outputs.trajectory)
        io.write_trajectory(out / f"{stem.stem}_{variant.value}{stem.suffix}", traj)
        stem = Path(cfg.outputs.detector_log)
        io.write_detector_log(out / f"{stem.stem}_{variant.value}{stem.suffix}", traj.detector_log)
        rows.append(io.MetricsRow(variant.value, m))
    io.write_metrics(out / cfg.outputs.metrics, rows)
    _print_metrics(rows)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args.config)
    stream = io.ingest(args.input)
    if not stream.has_mag:
        raise DataError("detect needs magnetometer columns")
    traj = run(stream, cfg.variant_config(Variant.AIEZ), full_log=True)
    if args.out is None:
        io.write_detect_log(sys.stdout, traj.detector_log)
    else:
        out = _out_dir(args.out)
        io.write_detect_log(out / cfg.outputs.detect_log, traj.detector_log)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "run": cmd_run, "compare": cmd_compare, "detect": cmd_detect}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FootnavError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
