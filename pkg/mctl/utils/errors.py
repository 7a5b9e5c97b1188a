"""Exception hierarchy for mctl."""

from typing import Optional


class MocapError(Exception):
    """Base class for all mctl errors."""


class DomainError(MocapError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(MocapError):
    """Configuration file or values are invalid."""


class CalibrationError(MocapError):
    """Base class for calibration failures."""


class WandNotFound(CalibrationError):
    """No wand pixels survived segmentation."""


class WandTooSmall(CalibrationError):
    """The wand bounding box is degenerate."""


class CalibrationFrameRejected(CalibrationError):
    """Too few consistent wand samples in a calibration frame."""


class TrajectoryTooShort(CalibrationError):
    """The two wand placements are too close to define an axis."""


class OcclusionError(MocapError):
    """Base class for occlusion failures."""


class NotCrossingError(OcclusionError):
    """Crossing depths were requested for segments that do not cross."""


class JointUnavailable(OcclusionError):
    """No sensor observed the joint in this frame."""


class TrilaterationError(MocapError):
    """Base class for solver failures."""


class SingularPointError(TrilaterationError):
    """The evaluation point coincides with a sensor position."""


class SingularMatrixError(TrilaterationError):
    """The normal matrix determinant is below the singularity threshold."""


class UnderdeterminedError(TrilaterationError):
    """Fewer range constraints than the solver requires."""


class SyncError(MocapError):
    """Base class for clock synchronization failures."""


class CorruptExchangeError(SyncError):
    """A sync exchange produced a negative delay."""


class SyncNotInitializedError(SyncError):
    """No exchange has been accepted for this client yet."""


class ProtocolError(MocapError):
    """Malformed or unsupported wire data."""


class NeedMoreBytes(MocapError):
    """The buffer holds an incomplete message."""

    def __init__(self, required: int, message: Optional[str] = None) -> None:
        self.required = required
        super().__init__(message or f"need {required} more bytes")


class SimulationError(MocapError):
    """A simulated run could not reach or complete its tracking phase."""
