"""Exception types shared across the beamtrack package."""


class BeamtrackError(Exception):
    """Base class for all beamtrack errors."""


class ConfigError(BeamtrackError):
    """Invalid configuration value or unknown config key."""


class DomainError(BeamtrackError, ValueError):
    """Argument outside its mathematical domain (angle, temperature, ...)."""


class ShapeError(BeamtrackError, ValueError):
    """Mismatched array shapes or sequence lengths."""


class AlignmentError(BeamtrackError):
    """Per-slot data streams disagree on length or slot indexing."""


class WindowingError(BeamtrackError):
    """Not enough consecutive frames to form a sliding window."""


class StoreError(BeamtrackError):
    """Persistence failure: missing artifact, bad magic/version, CRC mismatch."""


class TrainingDivergedError(BeamtrackError):
    """Training aborted on a non-finite loss."""
