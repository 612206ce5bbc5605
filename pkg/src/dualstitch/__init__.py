"""Dual-fisheye 360x180 panorama and video stitching."""

from dualstitch.errors import (
    CalibrationError,
    CoverageError,
    DeformationDegenerateError,
    EstimationDegenerateError,
    MatchUndefinedError,
    ReportUndefinedError,
    SequenceGapError,
    StitchError,
)
from dualstitch.images import EquirectImage, FisheyeImage

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CoverageError",
    "DeformationDegenerateError",
    "EquirectImage",
    "EstimationDegenerateError",
    "FisheyeImage",
    "MatchUndefinedError",
    "ReportUndefinedError",
    "SequenceGapError",
    "StitchError",
]
