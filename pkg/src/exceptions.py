"""
Error types raised across the pipeline
"""
from typing import Optional


class CameraError(Exception):
    """Base class for every pipeline error"""


class DimensionError(CameraError, ValueError):
    """Tensor shapes do not fit the operation"""


class InputError(CameraError, ValueError):
    """Input values outside the operation's domain"""


class ConfigError(CameraError, ValueError):
    """Invalid configuration value or file"""


class ParseError(CameraError, ValueError):
    """Malformed binary file"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class VersionError(CameraError, ValueError):
    """Wrong magic number or unsupported format version"""


class UndefinedMetricError(CameraError, ValueError):
    """Metric is undefined for the given inputs"""


class GradientCheckError(CameraError):
    """Finite-difference check could not be evaluated"""

    def __init__(self, message: str, parameter: Optional[str] = None, index: Optional[int] = None):
        location = f" [{parameter}" + (f"[{index}]" if index is not None else "") + "]" if parameter else ""
        super().__init__(f"{message}{location}")
        self.parameter = parameter
        self.index = index


class NonFiniteGradientError(CameraError):
    """A gradient contains NaN or Inf"""

    def __init__(self, parameter: str):
        super().__init__(f"Non-finite gradient for parameter {parameter}")
        self.parameter = parameter


class TrainingDiverged(CameraError):
    """Loss became non-finite; carries the last good model state"""

    def __init__(self, message: str, last_good_state=None, epoch: int = 0):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.epoch = epoch
