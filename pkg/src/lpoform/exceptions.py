"""Exception types shared across the library."""


class LpoformError(Exception):
    """Base class for library errors."""


class ConfigError(LpoformError):
    """Invalid or inconsistent configuration."""


class UnknownBodyError(ConfigError):
    """Ephemeris queried for a body it does not carry."""


class TimeRangeError(LpoformError):
    """Query time outside the validity interval of a data product."""


class SingularFrameError(LpoformError):
    """Rotating frame undefined (degenerate Earth-Moon geometry)."""


class SingularSeparationError(LpoformError):
    """A gravitating body or constraint pair at zero separation."""


class DegenerateOrbitError(LpoformError):
    """Orbit geometry does not admit the requested quantity."""


class DegenerateScheduleError(LpoformError):
    """Node schedule with zero-length horizon or unusable spacing."""


class ShapeError(LpoformError):
    """Array dimensions inconsistent with the declared vehicle count."""


class PropagationError(LpoformError):
    """Numerical integration failed before reaching the target time."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class CorrectionError(LpoformError):
    """Multiple-shooting correction did not converge."""

    def __init__(self, message, final_defect=None):
        super().__init__(message)
        self.final_defect = final_defect


class BackendError(LpoformError):
    """Conic backend failed; carries backend diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class EvaluationError(LpoformError):
    """Nonlinear candidate could not be evaluated (treated as rejected)."""
