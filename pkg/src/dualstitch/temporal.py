"""Jitter control for video: gate the refined-alignment affine frame by frame.

A boundary is good when its NCC peak beats the score threshold, its
vertical displacement stays inside the margin, and its horizontal
displacement has not drifted from the last fresh estimate by more than the
allowed fraction. Both boundaries good gives a fresh matrix; otherwise the
previous matrix is reused once, and warping switches off if the failure
persists.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

from dualstitch.refine import AffineTransform


@dataclass(frozen=True)
class GateThresholds:
    ncc: float = 0.85
    dy_margin: float = 10.0
    dx_drift: float = 0.10
    dx_floor: float = 1.0

    @classmethod
    def disabled(cls) -> "GateThresholds":
        """Thresholds that accept every defined match (no jitter control)."""
        return cls(ncc=-1.0, dy_margin=math.inf, dx_drift=math.inf, dx_floor=1.0)


class Reason(str, enum.Enum):
    FRESH = "FreshEstimate"
    REUSED = "ReusedPrevious"
    DISABLED = "Disabled"


@dataclass(frozen=True)
class BoundaryScore:
    score: float
    dx: float
    dy: float


def aggregate_boundary(matches) -> BoundaryScore:
    """Worst score, mean dx, and the dy of largest magnitude (sign kept)."""
    matches = list(matches)
    if not matches:
        raise ValueError("no matches to aggregate")
    score = min(m.score for m in matches)
    dx = sum(m.dx for m in matches) / len(matches)
    dy = max((m.dy for m in matches), key=abs)
    return BoundaryScore(score, float(dx), float(dy))


def is_good(boundary: BoundaryScore, prev_dx: Optional[float], thresholds=GateThresholds()) -> bool:
    if not boundary.score > thresholds.ncc:
        return False
    if not -thresholds.dy_margin <= boundary.dy <= thresholds.dy_margin:
        return False
    if prev_dx is None:
        return True
    allowed = thresholds.dx_drift * max(abs(prev_dx), thresholds.dx_floor)
    return abs(boundary.dx - prev_dx) <= allowed


@dataclass(frozen=True)
class TemporalState:
    prev_affine: Optional[AffineTransform] = None
    prev_scores_good: bool = False
    prev_dx: Optional[tuple] = None


@dataclass(frozen=True)
class FrameDecision:
    warp_enabled: bool
    affine: Optional[AffineTransform]
    reason: Reason


def boundaries_good(left: BoundaryScore, right: BoundaryScore, state: TemporalState, thresholds=GateThresholds()):
    prev = state.prev_dx or (None, None)
    return is_good(left, prev[0], thresholds), is_good(right, prev[1], thresholds)


def decide_frame(
    left: BoundaryScore,
    right: BoundaryScore,
    fresh: Optional[AffineTransform],
    state: TemporalState,
    thresholds=GateThresholds(),
):
    """Return (FrameDecision, next TemporalState) for one frame.

    Callers estimate ``fresh`` only when both boundaries are good, so a
    missing matrix in that case is a programming error.
    """
    good_l, good_r = boundaries_good(left, right, state, thresholds)
    if good_l and good_r:
        if fresh is None:
            raise ValueError("both boundaries are good but no fresh affine was supplied")
        decision = FrameDecision(True, fresh, Reason.FRESH)
        return decision, TemporalState(fresh, True, (left.dx, right.dx))
    if state.prev_scores_good and state.prev_affine is not None:
        decision = FrameDecision(True, state.prev_affine, Reason.REUSED)
    else:
        decision = FrameDecision(False, None, Reason.DISABLED)
    return decision, replace(state, prev_scores_good=False)
