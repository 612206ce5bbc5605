"""Calibration JSON: both lenses, the panorama width the control points refer to,
the MLS weight exponent and the control points as [px, py, qx, qy] rows."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dualstitch.errors import CalibrationError
from dualstitch.lens import LensCalibration, Role
from dualstitch.mls import ControlPointSet


@dataclass(frozen=True, eq=False)
class StitchCalibration:
    left: LensCalibration
    right: LensCalibration
    panorama_width: int = 2048
    alpha: float = 1.0
    control_points: Optional[ControlPointSet] = None

    def __post_init__(self):
        if self.left.role is not Role.LEFT or self.right.role is not Role.RIGHT:
            raise CalibrationError("lens roles must be left/right")
        if self.panorama_width <= 0 or self.panorama_width % 2:
            raise CalibrationError(f"panorama_width must be positive and even, got {self.panorama_width}")
        if not self.alpha > 0:
            raise CalibrationError(f"alpha must be positive, got {self.alpha}")

    def to_dict(self) -> dict:
        data = {
            "panorama_width": self.panorama_width,
            "alpha": self.alpha,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }
        if self.control_points is not None:
            data["control_points"] = self.control_points.to_rows()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "StitchCalibration":
        try:
            left = LensCalibration.from_dict(data["left"], role=Role.LEFT)
            right = LensCalibration.from_dict(data["right"], role=Role.RIGHT)
            alpha = float(data.get("alpha", 1.0))
            rows = data.get("control_points")
            cps = ControlPointSet.from_rows(rows, alpha) if rows else None
            return cls(left, right, int(data.get("panorama_width", 2048)), alpha, cps)
        except CalibrationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"invalid calibration: {exc}") from exc


def load_calibration(path) -> StitchCalibration:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CalibrationError(f"cannot read calibration {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CalibrationError(f"{path}: calibration must be a JSON object")
    return StitchCalibration.from_dict(data)


def save_calibration(path, calib: StitchCalibration) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(calib.to_dict(), indent=2) + "\n")
