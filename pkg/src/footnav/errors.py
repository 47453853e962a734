"""Exception hierarchy. CLI exit codes hang off the three top-level groups."""


class FootnavError(Exception):
    """Base class for all package errors."""


class ConfigError(FootnavError):
    """Invalid configuration (exit code 1)."""


class DataError(FootnavError):
    """Unusable input data (exit code 2)."""


class NumericalError(FootnavError):
    """Numerical failure inside estimation (exit code 3)."""


class IngestError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateAttitudeError(NumericalError):
    pass


class DegenerateWindowError(NumericalError):
    pass


class LowGravityError(DataError):
    """Accelerometer norm too small to infer roll and pitch."""


class UndefinedHeadingError(DataError):
    """Horizontal magnetic field vanishes; heading is undefined."""


class NoMeasurementError(FootnavError):
    """A measurement update was requested with no rows."""
