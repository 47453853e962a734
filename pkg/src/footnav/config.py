"""
Run configuration file (YAML), validated before anything runs.

All quantities are SI with angles in radians, matching the library
dataclasses field for field. Unknown keys are rejected at every level.

Example::

    variant:
      hdr_n: 4
      detector: {window: 50}
    scenario:
      path: {loop: {width: 75.0, height: 50.0, laps: 2}}
      errors: {gyro_bias: [0.002, -0.0015, 0.002], gyro_noise: 0.002}
      mag_env:
        disturbances:
          - {start: 60.0, end: 100.0, kind: hard_offset, vector: [0.1, 0.3, -0.2]}
    seed: 3
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import ekf
from .detectors import DetectorConfig
from .errors import ConfigError
from .pipeline import Variant, VariantConfig
from .synth import (
    Disturbance,
    GaitSpec,
    MagEnvSpec,
    PathSpec,
    Scenario,
    Segment,
    SensorErrorSpec,
    field_from_inclination,
    loop_path,
)

Vec3 = tuple[float, float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DetectorModel(_Strict):
    window: int = Field(50, ge=1)
    shoe_window: int = Field(5, ge=1)
    acc_var: float = Field(0.02**2, gt=0)
    gyro_var: float = Field(0.002**2, gt=0)
    shoe_threshold: float = Field(30.0, gt=0)
    heading_var: float = Field(math.radians(5.0) ** 2, gt=0)
    field_var: float = Field(0.05**2, gt=0)
    field_ref: float = Field(1.0, gt=0)
    qmd_threshold: Optional[float] = Field(None, gt=0)
    classical_threshold: Optional[float] = Field(None, gt=0)
    false_alarm: float = Field(0.01, gt=0, lt=1)


class NoiseModel(_Strict):
    gyro_noise_density: float = Field(2e-4, ge=0)
    acc_noise_density: float = Field(2e-3, ge=0)
    gyro_bias_rw: float = Field(1e-5, ge=0)
    acc_bias_rw: float = Field(1e-4, ge=0)
    roll_var: float = Field(math.radians(1.0) ** 2, gt=0)
    pitch_var: float = Field(math.radians(1.0) ** 2, gt=0)
    compass_var: float = Field(math.radians(5.0) ** 2, gt=0)
    hdr_var: float = Field(math.radians(2.0) ** 2, gt=0)
    vel_var: float = Field(0.01**2, gt=0)
    init_att: float = Field(math.radians(1.0), gt=0)
    init_heading: float = Field(math.radians(5.0), gt=0)
    init_gyro_bias: float = Field(math.radians(0.2), gt=0)
    init_acc_bias: float = Field(0.05, gt=0)
    init_pos: float = Field(1e-3, gt=0)
    init_vel: float = Field(1e-3, gt=0)


class VariantModel(_Strict):
    detector: DetectorModel = DetectorModel()
    noise: NoiseModel = NoiseModel()
    hdr_n: int = Field(4, ge=1)
    hdr_xi: float = Field(math.radians(2.0), gt=0)
    hdr_per_sample: bool = False
    hdr_skip_curve: bool = False
    declination: float = 0.0
    g: float = Field(9.81, gt=0)
    mag_offset: Vec3 = (0.0, 0.0, 0.0)
    mag_scale: Vec3 = (1.0, 1.0, 1.0)
    initial_heading: Optional[float] = None
    constrain_yaw: bool = True

    def build(self, variant: Variant) -> VariantConfig:
        d = self.model_dump()
        det = DetectorConfig(**d.pop("detector"))
        noise = ekf.NoiseConfig(**d.pop("noise"))
        return VariantConfig(variant=variant, detector=det, noise=noise, **d)


class SegmentModel(_Strict):
    kind: Literal["straight", "turn"]
    value: float


class LoopModel(_Strict):
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    laps: int = Field(1, ge=1)


class PathModel(_Strict):
    """Either ``loop`` (clockwise rectangle) or an explicit ``segments`` list."""

    loop: Optional[LoopModel] = None
    segments: Optional[list[SegmentModel]] = None
    closed: bool = False
    start_rest: float = Field(2.0, ge=0)
    end_rest: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.loop is None) == (self.segments is None):
            raise ValueError("path needs exactly one of 'loop' or 'segments'")
        return self

    def build(self) -> PathSpec:
        if self.loop is not None:
            return loop_path(self.loop.width, self.loop.height, self.loop.laps, start_rest=self.start_rest, end_rest=self.end_rest)
        segs = [Segment(s.kind, s.value) for s in self.segments]
        return PathSpec(segs, self.closed, self.start_rest, self.end_rest)


class GaitModel(_Strict):
    step_length: float = Field(1.4, gt=0)
    step_duration: float = Field(1.0, gt=0)
    stance_fraction: float = Field(0.55, gt=0.2, lt=0.8)
    swing_peak_height: float = Field(0.10, gt=0)
    swing_pitch: float = Field(0.3, ge=0)
    jitter: float = Field(0.0, ge=0)


class SensorErrorModel(_Strict):
    gyro_bias: Vec3 = (0.0, 0.0, 0.0)
    acc_bias: Vec3 = (0.0, 0.0, 0.0)
    gyro_noise: float = Field(0.0, ge=0)
    acc_noise: float = Field(0.0, ge=0)
    mag_noise: float = Field(0.0, ge=0)


class DisturbanceModel(_Strict):
    start: float = Field(ge=0)
    end: float
    kind: Literal["hard_offset", "gradient"]
    vector: Vec3


class MagEnvModel(_Strict):
    """``field_ref`` wins over ``inclination`` when both are given."""

    field_ref: Optional[Vec3] = None
    inclination: float = math.radians(60.0)
    disturbances: list[DisturbanceModel] = []

    def build(self) -> MagEnvSpec:
        ref = self.field_ref if self.field_ref is not None else field_from_inclination(self.inclination)
        dist = [Disturbance(d.start, d.end, d.kind, d.vector) for d in self.disturbances]
        return MagEnvSpec(ref, dist)


class ScenarioModel(_Strict):
    path: PathModel
    gait: GaitModel = GaitModel()
    errors: SensorErrorModel = SensorErrorModel()
    mag_env: Optional[MagEnvModel] = MagEnvModel()
    rate: float = Field(100.0, gt=0)

    def build(self, seed: int, g: float) -> Scenario:
        return Scenario(
            path=self.path.build(),
            gait=GaitSpec(**self.gait.model_dump(), seed=seed),
            errors=SensorErrorSpec(**self.errors.model_dump(), seed=seed),
            mag_env=None if self.mag_env is None else self.mag_env.build(),
            rate=self.rate,
            g=g,
        )


class OutputsModel(_Strict):
    """File names inside the ``--out`` directory."""

    truth: str = "truth.csv"
    imu: str = "imu.csv"
    trajectory: str = "trajectory.csv"
    detector_log: str = "detector_log.csv"
    metrics: str = "metrics.csv"
    detect_log: str = "detect_log.csv"


class RunConfig(_Strict):
    """
    Whole configuration document.

    ``total_distance`` sets the denominator of the TTD error. When absent
    the scenario path length is used, and failing that the horizontal
    length of the estimated trajectory.
    """

    variant: VariantModel = VariantModel()
    scenario: Optional[ScenarioModel] = None
    seed: int = Field(0, ge=0)
    total_distance: Optional[float] = Field(None, gt=0)
    outputs: OutputsModel = OutputsModel()

    def variant_config(self, variant: Variant | str) -> VariantConfig:
        return self.variant.build(Variant(variant))

    def build_scenario(self) -> Scenario:
        if self.scenario is None:
            raise ConfigError("configuration has no 'scenario' section")
        try:
            return self.scenario.build(self.seed, self.variant.g)
        except ValueError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc


def parse_config(data) -> RunConfig:
    """Validate an already-loaded mapping (``None`` means all defaults)."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        cfg = RunConfig.model_validate(data)
        # surface dataclass-level checks (e.g. derived thresholds) now
        cfg.variant_config(Variant.AIEZ)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(data)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "invalid configuration: " + "; ".join(parts)
