"""End-to-end stitching: compensate, unwarp, deform, refine, gate, blend."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from dualstitch.calibration import StitchCalibration, load_calibration
from dualstitch.errors import CalibrationError, CoverageError, EstimationDegenerateError, SequenceGapError
from dualstitch.images import EquirectImage, FisheyeImage, read_image, write_image
from dualstitch.layout import SeamLayout
from dualstitch.lens import compensate_falloff, unwarp_fisheye
from dualstitch.mls import DEFAULT_SPACING, ControlPointSet, DeformationGrid, Variant, apply_grid, build_backward_grid
from dualstitch.refine import BoundaryMatchSet, MatchParams, collect_boundary_matches, estimate_affine, warp_affine
from dualstitch.temporal import (
    FrameDecision,
    GateThresholds,
    TemporalState,
    aggregate_boundary,
    boundaries_good,
    decide_frame,
)

log = logging.getLogger(__name__)

FRAME_RE = re.compile(r"^frame_(\d{6})\.(png|ppm|pgm)$", re.IGNORECASE)


@dataclass(frozen=True, eq=False)
class StitchConfig:
    calibration: StitchCalibration
    width: Optional[int] = None
    variant: Variant = Variant.RIGID
    alpha: Optional[float] = None
    spacing: int = DEFAULT_SPACING
    thresholds: GateThresholds = GateThresholds()
    refine: bool = True
    blend: bool = True
    match: MatchParams = MatchParams()

    def __post_init__(self):
        width = self.calibration.panorama_width if self.width is None else int(self.width)
        if width <= 0 or width % 2:
            raise CalibrationError(f"panorama width must be positive and even, got {width}")
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "variant", Variant(self.variant))
        alpha = self.calibration.alpha if self.alpha is None else float(self.alpha)
        if not alpha > 0:
            raise CalibrationError(f"alpha must be positive, got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        if self.spacing < 1:
            raise CalibrationError("grid spacing must be >= 1")
        try:
            self.layout
        except ValueError as exc:
            raise CalibrationError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, **overrides) -> "StitchConfig":
        return cls(load_calibration(path), **overrides)

    @property
    def height(self) -> int:
        return self.width // 2

    @property
    def layout(self) -> SeamLayout:
        fov = min(self.calibration.left.fov_deg, self.calibration.right.fov_deg)
        return SeamLayout.for_fov(self.width, fov)

    def control_points(self) -> ControlPointSet:
        """Calibration control points rescaled to this config's panorama width."""
        cps = self.calibration.control_points
        if cps is None:
            raise CalibrationError("calibration has no control points")
        s = self.width / self.calibration.panorama_width
        return ControlPointSet(cps.p * s, cps.q * s, self.alpha)


def build_grid(config: StitchConfig) -> DeformationGrid:
    return build_backward_grid(
        config.control_points(), config.width, config.height, config.spacing, config.variant
    )


def _hole_bbox(holes: np.ndarray):
    ys, xs = np.nonzero(holes)
    return xs.min(), ys.min(), xs.max(), ys.max()


def blend(left: EquirectImage, right: EquirectImage, layout: SeamLayout, ramp: bool = True) -> EquirectImage:
    """Combine the two lens images with a linear ramp across each overlap band.

    Where only one image is valid it passes through unchanged. With
    ``ramp=False`` each band is cut hard at its centre instead.
    """
    if left.pixels.shape != right.pixels.shape or (left.width, left.height) != (layout.width, layout.height):
        raise ValueError("blend inputs and layout must share dimensions")
    holes = ~(left.valid | right.valid)
    if holes.any():
        raise CoverageError(_hole_bbox(holes))
    w = layout.right_weight().astype(np.float32)
    if not ramp:
        w = (w >= 0.5).astype(np.float32)
    w = np.broadcast_to(w, left.valid.shape)
    w = np.where(right.valid, np.where(left.valid, w, np.float32(1.0)), np.float32(0.0))
    w = w[:, :, None]
    out = right.pixels * w + left.pixels * (np.float32(1.0) - w)
    return EquirectImage(out, np.ones_like(left.valid))


@dataclass(frozen=True, eq=False)
class FrameResult:
    panorama: EquirectImage
    state: TemporalState
    decision: Optional[FrameDecision]
    matches: Optional[BoundaryMatchSet]
    left: EquirectImage
    right: EquirectImage

    def diag_line(self, index: int) -> str:
        """index, warpEn, reason, 8 scores, 8 dx:dy displacements (tab separated)."""
        if self.matches is None:
            scores = disps = "-"
        else:
            scores = ",".join(f"{m.score:.6f}" for m in self.matches.matches)
            disps = ",".join(f"{m.dx}:{m.dy}" for m in self.matches.matches)
        if self.decision is None:
            warp, reason = 0, "NoRefine"
        else:
            warp, reason = int(self.decision.warp_enabled), self.decision.reason.value
        return f"{index}\t{warp}\t{reason}\t{scores}\t{disps}"


def stitch_frame(
    left_fisheye: FisheyeImage,
    right_fisheye: FisheyeImage,
    config: StitchConfig,
    grid: Optional[DeformationGrid],
    state: TemporalState = TemporalState(),
) -> FrameResult:
    """Stitch one dual-fisheye frame and advance the temporal state.

    ``grid`` may be None to skip the MLS deformation.
    """
    calib = config.calibration
    left = unwarp_fisheye(compensate_falloff(left_fisheye, calib.left), calib.left, config.width)
    right = unwarp_fisheye(compensate_falloff(right_fisheye, calib.right), calib.right, config.width)
    if grid is not None:
        right = apply_grid(right, grid)

    layout = config.layout
    decision = matches = None
    if config.refine:
        matches = collect_boundary_matches(left, right, layout, config.match)
        bl = aggregate_boundary(matches.boundary(0))
        br = aggregate_boundary(matches.boundary(1))
        fresh = None
        if all(boundaries_good(bl, br, state, config.thresholds)):
            try:
                fresh = estimate_affine(matches.sources, matches.targets).transform
            except EstimationDegenerateError:
                fresh = None
            if fresh is None or not fresh.invertible:
                log.warning("affine estimate degenerate; treating frame as a bad match")
                fresh = None
                bl = replace(bl, score=float("-inf"))
        decision, state = decide_frame(bl, br, fresh, state, config.thresholds)
        if decision.warp_enabled:
            right = warp_affine(right, decision.affine)

    pano = blend(left, right, layout, ramp=config.blend)
    return FrameResult(pano, state, decision, matches, left, right)


def split_side_by_side(pixels: np.ndarray):
    """Split a dual-fisheye frame: left half is the left lens, right half the right lens."""
    w = pixels.shape[1]
    if w % 2:
        raise ValueError(f"side-by-side frame width must be even, got {w}")
    return FisheyeImage(pixels[:, : w // 2]), FisheyeImage(pixels[:, w // 2:])


def list_frames(input_dir) -> list:
    """Sorted (index, path) pairs; raises SequenceGapError on a missing index."""
    found = {}
    for path in Path(input_dir).iterdir():
        m = FRAME_RE.match(path.name)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise ValueError(f"frame index {idx} appears twice ({found[idx].name}, {path.name})")
        found[idx] = path
    if not found:
        raise FileNotFoundError(f"no frame_NNNNNN images in {input_dir}")
    indices = sorted(found)
    for expected, idx in zip(range(indices[0], indices[-1] + 1), indices):
        if idx != expected:
            raise SequenceGapError(expected)
    return [(i, found[i]) for i in indices]


@dataclass
class SequenceResult:
    lines: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    state: TemporalState = TemporalState()


def stitch_sequence(
    input_dir,
    output_dir,
    config: StitchConfig,
    grid: Optional[DeformationGrid],
    diag_path=None,
) -> SequenceResult:
    """Stitch numbered side-by-side frames in index order.

    Frame reads run one frame ahead on a worker thread; temporal decisions
    commit strictly in frame order. Writes ``frame_NNNNNN.png`` per frame and
    one diagnostics line per frame.
    """
    frames = list_frames(input_dir)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    diag_path = Path(diag_path) if diag_path else output_dir / "diagnostics.txt"
    result = SequenceResult()
    state = TemporalState()
    with ThreadPoolExecutor(max_workers=1) as pool:
        pending = pool.submit(read_image, frames[0][1])
        for k, (idx, _) in enumerate(frames):
            pixels = pending.result()
            if k + 1 < len(frames):
                pending = pool.submit(read_image, frames[k + 1][1])
            left_fe, right_fe = split_side_by_side(pixels)
            res = stitch_frame(left_fe, right_fe, config, grid, state)
            state = res.state
            write_image(output_dir / f"frame_{idx:06d}.png", res.panorama.pixels)
            result.lines.append(res.diag_line(idx))
            result.decisions.append(res.decision)
            log.info(result.lines[-1])
    result.state = state
    diag_path.parent.mkdir(parents=True, exist_ok=True)
    diag_path.write_text("".join(line + "\n" for line in result.lines))
    return result
