"""Moving-least-squares deformation and precomputed backward grids.

Weights are w_i = 1 / |p_i - v|^(2 alpha). For every evaluation point the
weighted centroids p*, q* are formed and the best affine, similarity or
rigid map of the centred control points is applied to v - p*.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dualstitch.errors import DeformationDegenerateError
from dualstitch.images import EquirectImage
from dualstitch.sampling import interp_grid, remap_grid

EPS_CP = 1e-6
EPS_U = 1e-12
DEFAULT_SPACING = 8
_CHUNK = 1 << 16


class Variant(str, enum.Enum):
    AFFINE = "affine"
    SIMILARITY = "similarity"
    RIGID = "rigid"


@dataclass(frozen=True, eq=False)
class ControlPointSet:
    """Paired control points: MLS moves each p_i onto q_i."""

    p: np.ndarray
    q: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64).reshape(-1, 2)
        q = np.array(self.q, dtype=np.float64).reshape(-1, 2)
        if p.shape != q.shape or len(p) < 1:
            raise ValueError("need at least one (p, q) pair with matching shapes")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("control points must be finite")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if len(np.unique(p, axis=0)) != len(p):
            raise ValueError("source control points p_i must be distinct")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def from_rows(cls, rows, alpha: float = 1.0) -> "ControlPointSet":
        """Build from [px, py, qx, qy] rows as stored in calibration files."""
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        return cls(arr[:, :2], arr[:, 2:], alpha)

    def to_rows(self) -> list:
        return np.hstack([self.p, self.q]).tolist()

    def swapped(self) -> "ControlPointSet":
        return ControlPointSet(self.q, self.p, self.alpha)

    def __len__(self):
        return len(self.p)


def mls_points(v, cps: ControlPointSet, variant=Variant.RIGID) -> np.ndarray:
    """Evaluate the MLS deformation f at an (N, 2) array of points."""
    v = np.asarray(v, dtype=np.float64).reshape(-1, 2)
    variant = Variant(variant)
    out = np.empty_like(v)
    for start in range(0, len(v), _CHUNK):
        out[start:start + _CHUNK] = _mls_chunk(v[start:start + _CHUNK], cps, variant)
    return out


def mls_point(v, cps: ControlPointSet, variant=Variant.RIGID) -> np.ndarray:
    """Evaluate f(v) for a single point; returns a length-2 array."""
    return mls_points(np.asarray(v, dtype=np.float64).reshape(1, 2), cps, variant)[0]


def _mls_chunk(v, cps, variant):
    p, q = cps.p, cps.q
    diff = p[None, :, :] - v[:, None, :]
    d2 = np.einsum("nij,nij->ni", diff, diff)
    snapped = d2 < EPS_CP * EPS_CP
    hit = snapped.any(axis=1)
    d2 = np.where(snapped, 1.0, d2)
    w = 1.0 / d2 ** cps.alpha
    # rows with a snap are overwritten below; keep their weights harmless
    w[hit] = 1.0

    wsum = w.sum(axis=1, keepdims=True)
    p_star = (w @ p) / wsum
    q_star = (w @ q) / wsum
    ph = p[None, :, :] - p_star[:, None, :]
    qh = q[None, :, :] - q_star[:, None, :]
    dv = v - p_star
    live = ~hit

    if variant is Variant.AFFINE:
        res = _affine(w, ph, qh, dv, live)
    else:
        res = _similarity_or_rigid(w, ph, qh, dv, live, variant)
    res += q_star
    if hit.any():
        k = np.argmax(snapped[hit], axis=1)
        res[hit] = q[k]
    return res


def _affine(w, ph, qh, dv, live):
    a = np.einsum("ni,nij,nik->njk", w, ph, ph)
    b = np.einsum("ni,nij,nik->njk", w, ph, qh)
    det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    scale = (a[:, 0, 0] + a[:, 1, 1]) ** 2
    # a single distinct source point: translation, as in the other variants
    pure_shift = a[:, 0, 0] + a[:, 1, 1] <= EPS_CP * EPS_CP * np.einsum("ni->n", w)
    live = live & ~pure_shift
    degenerate = live & ~(np.abs(det) > 1e-12 * scale)
    if degenerate.any():
        raise DeformationDegenerateError(
            "affine MLS normal matrix is singular (control points collinear)"
        )
    det = np.where(live, det, 1.0)
    inv = np.empty_like(a)
    inv[:, 0, 0] = a[:, 1, 1] / det
    inv[:, 1, 1] = a[:, 0, 0] / det
    inv[:, 0, 1] = -a[:, 0, 1] / det
    inv[:, 1, 0] = -a[:, 1, 0] / det
    m = inv @ b
    m[pure_shift] = np.eye(2)
    return np.einsum("nj,njk->nk", dv, m)


def _similarity_or_rigid(w, ph, qh, dv, live, variant):
    # sum_i q_i A_i collapses to [[s1, s2], [-s2, s1]] applied to (v - p*)
    s1 = np.einsum("ni,ni->n", w, ph[..., 0] * qh[..., 0] + ph[..., 1] * qh[..., 1])
    s2 = np.einsum("ni,ni->n", w, qh[..., 0] * ph[..., 1] - qh[..., 1] * ph[..., 0])
    mu_s = np.einsum("ni,ni->n", w, ph[..., 0] ** 2 + ph[..., 1] ** 2)
    # all p_i coincide with p*: rotation is undetermined, fall back to translation
    pure_shift = mu_s <= EPS_CP * EPS_CP * np.einsum("ni->n", w)
    if variant is Variant.SIMILARITY:
        norm = np.where(pure_shift, 1.0, mu_s)
    else:
        norm = np.hypot(s1, s2)
        bad = live & ~pure_shift & (norm < EPS_U)
        if bad.any():
            raise DeformationDegenerateError("rigid MLS rotation is undefined (|u| below guard)")
        norm = np.where(norm < EPS_U, 1.0, norm)
    s1 = np.where(pure_shift, 1.0, s1 / norm)
    s2 = np.where(pure_shift, 0.0, s2 / norm)
    return np.stack([s1 * dv[:, 0] + s2 * dv[:, 1], -s2 * dv[:, 0] + s1 * dv[:, 1]], axis=1)


@dataclass(frozen=True, eq=False)
class DeformationGrid:
    """Backward map (output pixel -> source pixel) sampled every ``spacing`` pixels.

    ``nodes[i, j]`` holds the source (x, y) for output point (j*spacing, i*spacing).
    """

    width: int
    height: int
    spacing: int
    nodes: np.ndarray

    def __post_init__(self):
        if self.spacing < 1:
            raise ValueError("grid spacing must be >= 1")
        shape = grid_shape(self.width, self.height, self.spacing) + (2,)
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.shape != shape:
            raise ValueError(f"grid nodes must have shape {shape}, got {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def identity(cls, width, height, spacing=DEFAULT_SPACING) -> "DeformationGrid":
        return cls(width, height, spacing, node_positions(width, height, spacing))

    def lookup(self, xs, ys) -> np.ndarray:
        """Interpolated source coordinates at arbitrary output points, (N, 2)."""
        return interp_grid(self.nodes, self.spacing, xs, ys)


def grid_shape(width, height, spacing):
    return (math.ceil(height / spacing) + 1, math.ceil(width / spacing) + 1)


def node_positions(width, height, spacing) -> np.ndarray:
    gh, gw = grid_shape(width, height, spacing)
    ys, xs = np.mgrid[0:gh, 0:gw].astype(np.float64) * spacing
    return np.stack([xs, ys], axis=-1)


def build_backward_grid(
    cps: ControlPointSet, width, height, spacing=DEFAULT_SPACING, variant=Variant.RIGID
) -> DeformationGrid:
    """Precompute the gather grid for the deformation p_i -> q_i.

    Each node stores the MLS map of the swapped set (q_i -> p_i), which
    approximates the inverse deformation.
    """
    if spacing < 1:
        raise ValueError("grid spacing must be >= 1")
    pos = node_positions(width, height, spacing)
    src = mls_points(pos.reshape(-1, 2), cps.swapped(), variant)
    return DeformationGrid(int(width), int(height), int(spacing), src.reshape(pos.shape))


def apply_grid(img: EquirectImage, grid: DeformationGrid) -> EquirectImage:
    """Warp ``img`` by gathering each output pixel through the grid."""
    if (img.width, img.height) != (grid.width, grid.height):
        raise ValueError(
            f"grid is {grid.width}x{grid.height} but image is {img.width}x{img.height}"
        )
    pixels, valid = remap_grid(img.pixels, img.valid, grid.nodes, grid.spacing, (img.height, img.width), sphere=True)
    return EquirectImage(pixels, valid)


_HEADER = struct.Struct("<III")


def save_grid(path, grid: DeformationGrid) -> None:
    """Little-endian: u32 width, height, spacing, then float32 nodes row-major (x, y)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.width, grid.height, grid.spacing))
        fh.write(np.ascontiguousarray(grid.nodes, dtype="<f4").tobytes())


def load_grid(path) -> DeformationGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated grid header")
    width, height, spacing = _HEADER.unpack_from(data)
    if spacing < 1:
        raise ValueError(f"{path}: grid spacing must be >= 1")
    shape = grid_shape(width, height, spacing) + (2,)
    expected = _HEADER.size + 4 * int(np.prod(shape))
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    nodes = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(shape)
    return DeformationGrid(width, height, spacing, nodes.astype(np.float64))
