"""Foot-mounted pedestrian dead reckoning with magnetically gated heading aiding."""

from .errors import ConfigError, DataError, FootnavError, NumericalError
from .ins import ImuSample, ImuStream, NavState
from .pipeline import Pipeline, RunMetrics, Trajectory, Variant, VariantConfig, metrics, run

__all__ = [
    "ConfigError",
    "DataError",
    "FootnavError",
    "ImuSample",
    "ImuStream",
    "NavState",
    "NumericalError",
    "Pipeline",
    "RunMetrics",
    "Trajectory",
    "Variant",
    "VariantConfig",
    "metrics",
    "run",
]

__version__ = "0.1.0"
