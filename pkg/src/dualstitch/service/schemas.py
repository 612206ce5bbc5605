"""Request and response models for the HTTP service.

Images and grids are exchanged as paths on the server's filesystem, the
same files the CLI reads and writes.
"""

from typing import List, Optional

from pydantic import BaseModel, Field

from dualstitch.mls import DEFAULT_SPACING, Variant


class Thresholds(BaseModel):
    ncc: float = 0.85
    dy_margin: float = Field(10.0, ge=0)
    dx_drift: float = Field(0.10, ge=0)
    dx_floor: float = Field(1.0, gt=0)
    gate: bool = True


class HealthResponse(BaseModel):
    status: str
    version: str


class GridRequest(BaseModel):
    calibration_path: str
    output_path: str
    spacing: int = Field(DEFAULT_SPACING, ge=1)
    alpha: Optional[float] = Field(None, gt=0)
    variant: Variant = Variant.RIGID
    width: Optional[int] = Field(None, gt=0)


class GridResponse(BaseModel):
    output_path: str
    width: int
    height: int
    spacing: int
    node_rows: int
    node_cols: int


class UnwarpRequest(BaseModel):
    fisheye_path: str
    calibration_path: str
    output_path: str
    lens: str = Field("right", pattern="^(left|right)$")
    width: Optional[int] = Field(None, gt=0)


class UnwarpResponse(BaseModel):
    output_path: str
    width: int
    height: int
    valid_fraction: float


class FrameDecisionModel(BaseModel):
    warp_enabled: bool
    reason: str
    affine: Optional[List[List[float]]] = None


class StitchRequest(BaseModel):
    left_path: str
    right_path: str
    calibration_path: str
    grid_path: str
    output_path: str
    refine: bool = True
    blend: bool = True


class StitchResponse(BaseModel):
    output_path: str
    diagnostics: str
    decision: Optional[FrameDecisionModel] = None


class VideoRequest(BaseModel):
    input_dir: str
    output_dir: str
    calibration_path: str
    grid_path: str
    diag_path: Optional[str] = None
    thresholds: Thresholds = Thresholds()
    refine: bool = True
    blend: bool = True


class VideoResponse(BaseModel):
    frames: int
    diagnostics: List[str]


class SessionRequest(BaseModel):
    calibration_path: str
    grid_path: str
    thresholds: Thresholds = Thresholds()
    refine: bool = True
    blend: bool = True


class SessionResponse(BaseModel):
    session_id: str
    frames: int = 0


class SessionFrameRequest(BaseModel):
    frame_path: str
    output_path: str


class SessionFrameResponse(StitchResponse):
    index: int


class ErrorResponse(BaseModel):
    error: str
    detail: str
    exit_code: int
