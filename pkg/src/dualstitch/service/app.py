"""FastAPI app around the stitching pipeline.

Video sessions keep their temporal state server side, so a client can push
frames one at a time and still get the gate's frame-to-frame behaviour.
"""

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from dualstitch import __version__
from dualstitch.calibration import load_calibration
from dualstitch.errors import CalibrationError, CoverageError, SequenceGapError, StitchError
from dualstitch.images import read_fisheye, read_image, write_image
from dualstitch.lens import compensate_falloff, unwarp_fisheye
from dualstitch.mls import DeformationGrid, load_grid, save_grid
from dualstitch.pipeline import (
    FrameResult,
    StitchConfig,
    build_grid,
    split_side_by_side,
    stitch_frame,
    stitch_sequence,
)
from dualstitch.service import schemas
from dualstitch.temporal import GateThresholds, TemporalState

app = FastAPI(title="dualstitch", version=__version__)

_STATUS = {CalibrationError: 422, CoverageError: 422, SequenceGapError: 422}


@app.exception_handler(StitchError)
def _stitch_error(request, exc: StitchError):
    status = next((code for cls, code in _STATUS.items() if isinstance(exc, cls)), 400)
    body = schemas.ErrorResponse(error=type(exc).__name__, detail=str(exc), exit_code=exc.exit_code)
    return JSONResponse(status_code=status, content=body.model_dump())


@app.exception_handler(FileNotFoundError)
def _missing(request, exc: FileNotFoundError):
    body = schemas.ErrorResponse(error="FileNotFoundError", detail=str(exc), exit_code=1)
    return JSONResponse(status_code=404, content=body.model_dump())


def _thresholds(t: schemas.Thresholds) -> GateThresholds:
    if not t.gate:
        return GateThresholds.disabled()
    return GateThresholds(t.ncc, t.dy_margin, t.dx_drift, t.dx_floor)


def _config(calibration_path, grid_path, **extra):
    grid = load_grid(grid_path)
    return StitchConfig(load_calibration(calibration_path), width=grid.width, **extra), grid


def _decision(res: FrameResult):
    d = res.decision
    if d is None:
        return None
    affine = d.affine.matrix.tolist() if d.affine is not None else None
    return schemas.FrameDecisionModel(warp_enabled=d.warp_enabled, reason=d.reason.value, affine=affine)


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/grids", response_model=schemas.GridResponse)
def make_grid(req: schemas.GridRequest):
    config = StitchConfig(
        load_calibration(req.calibration_path),
        width=req.width,
        variant=req.variant,
        alpha=req.alpha,
        spacing=req.spacing,
    )
    grid = build_grid(config)
    save_grid(req.output_path, grid)
    rows, cols = grid.nodes.shape[:2]
    return schemas.GridResponse(
        output_path=req.output_path, width=grid.width, height=grid.height, spacing=grid.spacing,
        node_rows=rows, node_cols=cols,
    )


@app.post("/unwarp", response_model=schemas.UnwarpResponse)
def unwarp(req: schemas.UnwarpRequest):
    calib = load_calibration(req.calibration_path)
    lens = calib.right if req.lens == "right" else calib.left
    img = unwarp_fisheye(compensate_falloff(read_fisheye(req.fisheye_path), lens), lens, req.width or calib.panorama_width)
    write_image(req.output_path, img.pixels)
    return schemas.UnwarpResponse(
        output_path=req.output_path, width=img.width, height=img.height, valid_fraction=float(img.valid.mean())
    )


@app.post("/stitch", response_model=schemas.StitchResponse)
def stitch(req: schemas.StitchRequest):
    config, grid = _config(req.calibration_path, req.grid_path, refine=req.refine, blend=req.blend)
    res = stitch_frame(read_fisheye(req.left_path), read_fisheye(req.right_path), config, grid)
    write_image(req.output_path, res.panorama.pixels)
    return schemas.StitchResponse(output_path=req.output_path, diagnostics=res.diag_line(0), decision=_decision(res))


@app.post("/stitch-video", response_model=schemas.VideoResponse)
def stitch_video(req: schemas.VideoRequest):
    config, grid = _config(
        req.calibration_path, req.grid_path, thresholds=_thresholds(req.thresholds), refine=req.refine, blend=req.blend
    )
    out = stitch_sequence(req.input_dir, req.output_dir, config, grid, diag_path=req.diag_path)
    return schemas.VideoResponse(frames=len(out.lines), diagnostics=out.lines)


@dataclass
class _Session:
    config: StitchConfig
    grid: DeformationGrid
    state: TemporalState = TemporalState()
    frames: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


_sessions = {}
_sessions_lock = threading.Lock()


def _session(session_id: str) -> _Session:
    with _sessions_lock:
        sess = _sessions.get(session_id)
    if sess is None:
        raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
    return sess


@app.post("/sessions", response_model=schemas.SessionResponse, status_code=201)
def open_session(req: schemas.SessionRequest):
    config, grid = _config(
        req.calibration_path, req.grid_path, thresholds=_thresholds(req.thresholds), refine=req.refine, blend=req.blend
    )
    sid = uuid.uuid4().hex
    with _sessions_lock:
        _sessions[sid] = _Session(config, grid)
    return schemas.SessionResponse(session_id=sid)


@app.post("/sessions/{session_id}/frames", response_model=schemas.SessionFrameResponse)
def push_frame(session_id: str, req: schemas.SessionFrameRequest):
    sess = _session(session_id)
    left, right = split_side_by_side(read_image(req.frame_path))
    # frames of one session commit in arrival order
    with sess.lock:
        res = stitch_frame(left, right, sess.config, sess.grid, sess.state)
        sess.state = res.state
        sess.frames += 1
        index = sess.frames
    write_image(req.output_path, res.panorama.pixels)
    return schemas.SessionFrameResponse(
        output_path=req.output_path, diagnostics=res.diag_line(index), decision=_decision(res), index=index
    )


@app.get("/sessions/{session_id}", response_model=schemas.SessionResponse)
def session_info(session_id: str):
    return schemas.SessionResponse(session_id=session_id, frames=_session(session_id).frames)


@app.delete("/sessions/{session_id}", status_code=204)
def close_session(session_id: str):
    with _sessions_lock:
        if _sessions.pop(session_id, None) is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
