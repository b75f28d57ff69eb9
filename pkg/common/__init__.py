# Shared plumbing for edgecascade

from .logger import logger
from .errors import (
    EdgeCascadeError, InvalidInput, ShapeError, FormatError,
    TrainingDiverged, ConfigError, VerificationFailed
)

__version__ = "1.0.0"
__all__ = [
    "logger", "EdgeCascadeError", "InvalidInput", "ShapeError", "FormatError",
    "TrainingDiverged", "ConfigError", "VerificationFailed", "__version__"
]
