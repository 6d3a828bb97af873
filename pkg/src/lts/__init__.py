"""Locate-then-segment referring image segmentation."""

from lts.errors import ConfigError, DataError, LTSError, ShapeError, TrainingDivergedError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "LTSError",
    "ShapeError",
    "TrainingDivergedError",
]
