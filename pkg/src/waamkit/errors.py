"""Exception types shared across the toolkit."""


class WaamError(Exception):
    """Base class for all toolkit errors."""


class MeshError(WaamError):
    """Raised for unreadable, malformed, or degenerate meshes."""


class PlaneFitError(WaamError):
    """Raised when a plane cannot be fit to a point set."""


class HullError(WaamError):
    """Raised for degenerate convex hull input."""


class SliceError(WaamError):
    """Raised when slicing cannot proceed or fails to terminate."""


class PositionerError(WaamError):
    """Raised for joint limit violations and invalid positioner input."""


class PlanError(WaamError):
    """Raised when motion planning fails."""


class ParseError(WaamError):
    """Script syntax or structure error with source location."""

    def __init__(self, message, line=0, column=0, expected=None):
        loc = f"line {line}, column {column}: {message}"
        if expected:
            loc += f" (expected {expected})"
        super().__init__(loc)
        self.line = line
        self.column = column
        self.expected = expected


class EmitError(WaamError):
    """Raised for unsupported primitive or dialect combinations."""


class MonitorError(WaamError):
    """Base class for monitoring failures."""


class TorchNotFound(MonitorError):
    """Template match score below the acceptance floor."""


class FlameNotFound(MonitorError):
    """No flame component of sufficient area."""


class PlanExhausted(MonitorError):
    """Measured height is beyond the top of the slice plan."""


class MetrologyError(WaamError):
    """Base class for metrology failures."""


class InsufficientCoverage(MetrologyError):
    """Too many width samples skipped to report statistics."""


class EmptySide(MetrologyError):
    """Edge splitting left one side with no points."""


class ConfigError(WaamError):
    """Invalid or missing configuration values."""
