"""Synthetic clothed-body video data and recurrent mesh recovery at toy scale."""
import logging
import os

from .errors import (DatasetError, DegeneracyError, DimensionError, InstabilityError, MeshforgeError,
                     NumericError, SolverError, TemplateParseError, TrainingError, ValidationError)

__version__ = "0.1.0"

_level = os.environ.get("MESHFORGE_LOG")
if _level:
    logging.getLogger(__name__).setLevel(_level.upper())

__all__ = [
    "DatasetError", "DegeneracyError", "DimensionError", "InstabilityError", "MeshforgeError",
    "NumericError", "SolverError", "TemplateParseError", "TrainingError", "ValidationError",
    "__version__",
]
