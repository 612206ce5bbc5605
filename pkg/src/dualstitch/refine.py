"""Scene-adaptive refined alignment.

NCC template matching on both stitching boundaries yields eight
correspondences, a least-squares 2x3 affine is fitted to them, and the
deformed right image is warped by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dualstitch.errors import EstimationDegenerateError, MatchUndefinedError
from dualstitch.images import EquirectImage
from dualstitch.layout import SeamLayout
from dualstitch.sampling import remap_affine

_VAR_EPS = 1e-12


@dataclass(frozen=True)
class MatchResult:
    score: float
    dx: int
    dy: int

    @property
    def defined(self) -> bool:
        return math.isfinite(self.score)


BAD_MATCH = MatchResult(-math.inf, 0, 0)


@dataclass(frozen=True)
class MatchParams:
    template: int = 32
    rows: tuple = (0.3, 0.45, 0.55, 0.7)
    search_x: int = 16
    search_y: int = 12


def _gray(patch) -> np.ndarray:
    a = np.asarray(patch, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    return a


def ncc_surface(template, search) -> np.ndarray:
    """Zero-mean normalised cross-correlation for every integer placement.

    Entry [i, j] scores the template with its top-left corner at row i,
    column j of the search region. Flat search windows score 0.
    """
    t = _gray(template)
    s = _gray(search)
    th, tw = t.shape
    if th > s.shape[0] or tw > s.shape[1]:
        raise ValueError("template must fit inside the search region")
    t = t - t.mean()
    tnorm = math.sqrt(float(np.sum(t * t)))
    if tnorm * tnorm <= _VAR_EPS * t.size:
        raise MatchUndefinedError("template has zero variance")
    win = sliding_window_view(s, (th, tw))
    wmean = win.mean(axis=(2, 3), keepdims=True)
    centred = win - wmean
    num = np.einsum("ijkl,kl->ij", centred, t)
    wnorm = np.sqrt(np.einsum("ijkl,ijkl->ij", centred, centred))
    flat = wnorm * wnorm <= _VAR_EPS * t.size
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(flat, 0.0, num / (wnorm * tnorm))
    return np.clip(score, -1.0, 1.0)


def ncc_match(template, search, origin=(0, 0)) -> MatchResult:
    """Exhaustive integer-pixel NCC peak.

    The displacement is reported relative to ``origin``, the top-left
    placement that counts as zero shift. Ties go to the first placement in
    raster order.
    """
    surf = ncc_surface(template, search)
    k = int(np.argmax(surf))
    i, j = divmod(k, surf.shape[1])
    return MatchResult(float(surf[i, j]), j - int(origin[0]), i - int(origin[1]))


@dataclass(frozen=True, eq=False)
class BoundaryMatchSet:
    """Four matches per boundary; boundary 0 (longitude -90) first."""

    matches: tuple
    sources: np.ndarray
    targets: np.ndarray

    def boundary(self, b: int) -> tuple:
        return self.matches[4 * b:4 * b + 4]

    @property
    def complete(self) -> bool:
        return len(self.matches) == 8 and all(m.defined for m in self.matches)


def template_centers(layout: SeamLayout, params: MatchParams = MatchParams()) -> list:
    """Integer (column, row) of each template centre, boundary-major order."""
    out = []
    for b in (0, 1):
        cx = int(round(layout.seam_column(b)))
        for frac in params.rows:
            out.append((cx, int(round(frac * layout.height))))
    return out


def _valid_column(left, right, layout, boundary, cx, cy, params) -> int:
    """Nearest column to ``cx`` inside the band where the template footprint
    holds only valid pixels in both images. After a strong correction one lens
    may stop short of the seam line while the band still overlaps."""
    half = params.template // 2
    ty0 = cy - half
    rows = slice(ty0, ty0 + params.template)
    lo, hi = layout.band_limits(boundary)
    first, last = math.ceil(lo) + half, math.floor(hi) - params.template + half + 1
    order = sorted(range(first, last + 1), key=lambda c: (abs(c - cx), c))
    for c in order:
        tx0 = c - half
        if tx0 - params.search_x < 0 or tx0 + params.template + params.search_x > layout.width:
            continue
        cols = slice(tx0, tx0 + params.template)
        if right.valid[rows, cols].all() and left.valid[rows, cols].all():
            return c
    return cx


def collect_boundary_matches(
    left: EquirectImage, right: EquirectImage, layout: SeamLayout, params: MatchParams = MatchParams()
) -> BoundaryMatchSet:
    """Match right-image templates into the left image along both seams.

    Correspondences map each template centre in the right image to the
    place its content was found in the left image.
    """
    if left.pixels.shape != right.pixels.shape:
        raise ValueError("left and right images must share dimensions")
    half = params.template // 2
    matches, sources, targets = [], [], []
    for k, (cx, cy) in enumerate(template_centers(layout, params)):
        cx = _valid_column(left, right, layout, k // len(params.rows), cx, cy, params)
        tx0, ty0 = cx - half, cy - half
        sx0, sy0 = tx0 - params.search_x, ty0 - params.search_y
        sx1 = tx0 + params.template + params.search_x
        sy1 = ty0 + params.template + params.search_y
        if sx0 < 0 or sy0 < 0 or sx1 > layout.width or sy1 > layout.height:
            raise ValueError("search window leaves the image; panorama too small")
        tmpl = right.pixels[ty0:ty0 + params.template, tx0:tx0 + params.template]
        search = left.pixels[sy0:sy1, sx0:sx1]
        try:
            m = ncc_match(tmpl, search, origin=(params.search_x, params.search_y))
        except MatchUndefinedError:
            m = BAD_MATCH
        matches.append(m)
        centre = (tx0 + (params.template - 1) / 2.0, ty0 + (params.template - 1) / 2.0)
        sources.append(centre)
        targets.append((centre[0] + m.dx, centre[1] + m.dy))
    return BoundaryMatchSet(tuple(matches), np.array(sources), np.array(targets))


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """3x3 affine matrix acting on column vectors [x, y, 1]."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape == (2, 3):
            m = np.vstack([m, [0.0, 0.0, 1.0]])
        if m.shape != (3, 3):
            raise ValueError(f"affine matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("affine matrix entries must be finite")
        m[2] = (0.0, 0.0, 1.0)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def translation(cls, tx, ty) -> "AffineTransform":
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty]])

    @property
    def det(self) -> float:
        m = self.matrix
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def invertible(self) -> bool:
        return abs(self.det) > 1e-9

    def inverse(self) -> "AffineTransform":
        if not self.invertible:
            raise EstimationDegenerateError("affine transform is not invertible")
        return AffineTransform(np.linalg.inv(self.matrix))

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return pts @ self.matrix[:2, :2].T + self.matrix[:2, 2]

    def __eq__(self, other):
        return isinstance(other, AffineTransform) and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True)
class AffineFit:
    transform: AffineTransform
    residual_rms: float


def estimate_affine(sources, targets) -> AffineFit:
    """Least-squares affine taking ``sources`` onto ``targets``."""
    src = np.asarray(sources, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("sources and targets must have equal length")
    if len(src) < 3:
        raise EstimationDegenerateError("need at least 3 correspondences")
    # centre for conditioning; reject near-collinear source sets
    mean = src.mean(axis=0)
    centred = src - mean
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= 1e-9 * sv[0]:
        raise EstimationDegenerateError("source points are collinear")
    design = np.hstack([centred, np.ones((len(src), 1))])
    sol, *_ = np.linalg.lstsq(design, dst, rcond=None)
    lin = sol[:2].T
    offset = sol[2] - lin @ mean
    m = np.eye(3)
    m[:2, :2] = lin
    m[:2, 2] = offset
    t = AffineTransform(m)
    resid = t.apply(src) - dst
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return AffineFit(t, rms)


def warp_affine(img: EquirectImage, transform: AffineTransform) -> EquirectImage:
    """Move image content by ``transform`` (backward gather through its inverse)."""
    if not transform.invertible:
        raise EstimationDegenerateError("cannot warp by a non-invertible affine transform")
    inv = transform.inverse()
    pixels, valid = remap_affine(img.pixels, img.valid, inv.matrix, (img.height, img.width), sphere=True)
    return EquirectImage(pixels, valid)
