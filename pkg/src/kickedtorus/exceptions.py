"""Error types shared across the library."""


class KickedTorusError(Exception):
    """Base class for all library errors."""


class ConfigError(KickedTorusError):
    """Invalid configuration document, parameter value, or argument shape."""


class UnsupportedVariantError(KickedTorusError):
    """Operation not defined for the given family or noise variant."""


class DegenerateSubspaceError(KickedTorusError):
    """Input columns do not span a subspace of the requested dimension."""


class NotAGraphError(KickedTorusError):
    """Subspace is not a graph over the requested coordinate block."""


class ConeDegeneracyError(KickedTorusError):
    """Graph transform undefined because dxf - G is numerically singular."""


class WindowTooLongError(KickedTorusError):
    """Requested window exceeds the dynamic range of direct assembly."""


class InfeasibleConditioningError(KickedTorusError):
    """Rejection sampling of the conditioned set keeps failing."""


class InvariantViolationError(KickedTorusError):
    """A volume-preservation or orthonormality invariant failed mid-run."""
