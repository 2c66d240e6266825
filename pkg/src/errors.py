"""Exception hierarchy for motionstitch.

Library code raises these; the CLI maps ``exit_code`` to the process status.
"""

from typing import Optional, Tuple


class MotionStitchError(Exception):
    """Base error. Unclassified failures are internal (exit 4)."""

    exit_code = 4


class InputError(MotionStitchError):
    """Bad input: missing/corrupt files, invalid config or spec."""

    exit_code = 2


class ConfigError(InputError):
    """Unknown config key or unparsable value."""


class FormatError(InputError):
    """A data file does not parse."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class InfeasibleSpecError(InputError):
    """Synthetic scene spec cannot be realized."""


class ShapeMismatchError(InputError, ValueError):
    """Sequences or keypoint sets that must agree in size do not."""


class NotARotationError(InputError, ValueError):
    """Matrix is not orthonormal with determinant +1."""


class EstimationError(MotionStitchError):
    """A solver could not produce an estimate (exit 3)."""

    exit_code = 3


class InsufficientDataError(EstimationError):
    """Too few usable observations."""


class DegenerateConfigurationError(EstimationError):
    """Observations are in a configuration the estimator cannot resolve."""


class CheiralityError(EstimationError):
    """No essential-matrix decomposition puts the points in front of both views."""


class BehindCameraError(EstimationError, ValueError):
    """Point has non-positive depth in the camera frame."""


class UnderConstrainedError(EstimationError):
    """Bundle adjustment window lacks constraints."""

    def __init__(self, message: str, frame_range: Optional[Tuple[int, int]] = None):
        if frame_range is not None:
            message = f"{message} (frames {frame_range[0]}-{frame_range[1]})"
        super().__init__(message)
        self.frame_range = frame_range


class InvariantViolation(MotionStitchError):
    """An internal post-condition failed."""

    exit_code = 4
