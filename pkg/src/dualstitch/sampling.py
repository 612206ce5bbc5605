"""Bilinear gather kernels shared by unwarping, grid deformation and affine warping.

A sample at (x, y) is valid only when every neighbour carrying nonzero
bilinear weight lies inside the source and is itself valid. Coordinates
exactly on the last row/column are therefore still valid.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# TBB in this image is too old; omp is thread-safe for concurrent callers
if numba.config.THREADING_LAYER == "default":
    numba.config.THREADING_LAYER = "omp"

_CACHE = True


@njit(inline="always")
def _sample(src, src_valid, x, y, out, oy, ox):
    h, w, c = src.shape
    if not (x >= 0.0 and y >= 0.0 and x <= w - 1 and y <= h - 1):
        return False
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    fx = x - x0
    fy = y - y0
    x1 = x0 + 1 if fx > 0.0 else x0
    y1 = y0 + 1 if fy > 0.0 else y0
    if x1 > w - 1 or y1 > h - 1:
        return False
    if not (src_valid[y0, x0] and src_valid[y0, x1] and src_valid[y1, x0] and src_valid[y1, x1]):
        return False
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    for k in range(c):
        out[oy, ox, k] = (
            w00 * src[y0, x0, k] + w01 * src[y0, x1, k] + w10 * src[y1, x0, k] + w11 * src[y1, x1, k]
        )
    return True


@njit(inline="always")
def _sample_sphere(src, src_valid, x, y, out, oy, ox):
    # equirect source: row 0 is the north pole and the south pole sits one row
    # past the last; crossing a pole continues half a turn away in longitude
    h, w, c = src.shape
    if not (math.isfinite(x) and math.isfinite(y)):
        return False
    if y < 0.0:
        y = -y
        x += 0.5 * w
    elif y > h:
        y = 2.0 * h - y
        x += 0.5 * w
    x = x % w
    x0 = int(math.floor(x))
    fx = x - x0
    x0 = x0 % w
    x1 = (x0 + 1) % w if fx > 0.0 else x0
    if y > h - 1:
        # between the last row and its mirror across the south pole
        y0 = y1 = h - 1
        fy = 0.5 * (y - (h - 1))
        xo = w // 2
        if w % 2:
            return False
        c0 = x0
        c1 = x1
        d0 = (x0 + xo) % w
        d1 = (x1 + xo) % w
    else:
        y0 = int(math.floor(y))
        fy = y - y0
        y1 = y0 + 1 if fy > 0.0 else y0
        c0 = d0 = x0
        c1 = d1 = x1
    if not (src_valid[y0, c0] and src_valid[y0, c1] and src_valid[y1, d0] and src_valid[y1, d1]):
        return False
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    for k in range(c):
        out[oy, ox, k] = (
            w00 * src[y0, c0, k] + w01 * src[y0, c1, k] + w10 * src[y1, d0, k] + w11 * src[y1, d1, k]
        )
    return True


@njit(parallel=True, cache=_CACHE)
def _remap_map(src, src_valid, map_x, map_y, pre_valid, out, out_valid):
    ho, wo = map_x.shape
    for i in prange(ho):
        for j in range(wo):
            if pre_valid[i, j]:
                out_valid[i, j] = _sample(src, src_valid, map_x[i, j], map_y[i, j], out, i, j)


@njit(parallel=True, cache=_CACHE)
def _remap_grid(src, src_valid, nodes, spacing, sphere, out, out_valid):
    ho, wo = out_valid.shape
    gh, gw = nodes.shape[0], nodes.shape[1]
    for i in prange(ho):
        gy = i / spacing
        r0 = min(int(math.floor(gy)), gh - 2)
        ty = gy - r0
        for j in range(wo):
            gx = j / spacing
            c0 = min(int(math.floor(gx)), gw - 2)
            tx = gx - c0
            a = (1.0 - tx) * (1.0 - ty)
            b = tx * (1.0 - ty)
            cc = (1.0 - tx) * ty
            d = tx * ty
            sx = a * nodes[r0, c0, 0] + b * nodes[r0, c0 + 1, 0] + cc * nodes[r0 + 1, c0, 0] + d * nodes[r0 + 1, c0 + 1, 0]
            sy = a * nodes[r0, c0, 1] + b * nodes[r0, c0 + 1, 1] + cc * nodes[r0 + 1, c0, 1] + d * nodes[r0 + 1, c0 + 1, 1]
            if sphere:
                out_valid[i, j] = _sample_sphere(src, src_valid, sx, sy, out, i, j)
            else:
                out_valid[i, j] = _sample(src, src_valid, sx, sy, out, i, j)


@njit(parallel=True, cache=_CACHE)
def _remap_affine(src, src_valid, m, sphere, out, out_valid):
    ho, wo = out_valid.shape
    for i in prange(ho):
        for j in range(wo):
            sx = m[0, 0] * j + m[0, 1] * i + m[0, 2]
            sy = m[1, 0] * j + m[1, 1] * i + m[1, 2]
            if sphere:
                out_valid[i, j] = _sample_sphere(src, src_valid, sx, sy, out, i, j)
            else:
                out_valid[i, j] = _sample(src, src_valid, sx, sy, out, i, j)


@njit(parallel=True, cache=_CACHE)
def _interp_grid_points(nodes, spacing, xs, ys, out):
    gh, gw = nodes.shape[0], nodes.shape[1]
    for n in prange(xs.shape[0]):
        gx = xs[n] / spacing
        gy = ys[n] / spacing
        c0 = min(max(int(math.floor(gx)), 0), gw - 2)
        r0 = min(max(int(math.floor(gy)), 0), gh - 2)
        tx = gx - c0
        ty = gy - r0
        for k in range(2):
            out[n, k] = (
                (1.0 - tx) * (1.0 - ty) * nodes[r0, c0, k]
                + tx * (1.0 - ty) * nodes[r0, c0 + 1, k]
                + (1.0 - tx) * ty * nodes[r0 + 1, c0, k]
                + tx * ty * nodes[r0 + 1, c0 + 1, k]
            )


def _prepare(src, src_valid):
    src = np.ascontiguousarray(src, dtype=np.float32)
    if src_valid is None:
        src_valid = np.ones(src.shape[:2], dtype=np.bool_)
    return src, np.ascontiguousarray(src_valid, dtype=np.bool_)


def remap(src, src_valid, map_x, map_y, pre_valid=None):
    """Gather ``src`` at per-pixel coordinates. Returns (pixels, valid)."""
    src, src_valid = _prepare(src, src_valid)
    map_x = np.ascontiguousarray(map_x, dtype=np.float64)
    map_y = np.ascontiguousarray(map_y, dtype=np.float64)
    if pre_valid is None:
        pre_valid = np.ones(map_x.shape, dtype=np.bool_)
    out = np.zeros(map_x.shape + (src.shape[2],), dtype=np.float32)
    out_valid = np.zeros(map_x.shape, dtype=np.bool_)
    _remap_map(src, src_valid, map_x, map_y, np.ascontiguousarray(pre_valid, dtype=np.bool_), out, out_valid)
    return out, out_valid


def remap_grid(src, src_valid, nodes, spacing, out_shape, sphere=False):
    """Gather through a coarse backward grid, interpolating node values per pixel.

    With ``sphere`` the source is treated as a full equirect panorama:
    longitude wraps and coordinates past a pole fold back over it.
    """
    src, src_valid = _prepare(src, src_valid)
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    out = np.zeros(tuple(out_shape) + (src.shape[2],), dtype=np.float32)
    out_valid = np.zeros(tuple(out_shape), dtype=np.bool_)
    _remap_grid(src, src_valid, nodes, float(spacing), bool(sphere), out, out_valid)
    return out, out_valid


def remap_affine(src, src_valid, backward, out_shape, sphere=False):
    """Gather with source = backward @ [x, y, 1] for each output pixel."""
    src, src_valid = _prepare(src, src_valid)
    m = np.ascontiguousarray(np.asarray(backward, dtype=np.float64)[:2, :3])
    out = np.zeros(tuple(out_shape) + (src.shape[2],), dtype=np.float32)
    out_valid = np.zeros(tuple(out_shape), dtype=np.bool_)
    _remap_affine(src, src_valid, m, bool(sphere), out, out_valid)
    return out, out_valid


def interp_grid(nodes, spacing, xs, ys):
    """Bilinear interpolation of node vectors at arbitrary points, shape (N, 2)."""
    xs = np.ascontiguousarray(np.ravel(xs), dtype=np.float64)
    ys = np.ascontiguousarray(np.ravel(ys), dtype=np.float64)
    out = np.empty((xs.shape[0], 2), dtype=np.float64)
    _interp_grid_points(np.ascontiguousarray(nodes, dtype=np.float64), float(spacing), xs, ys, out)
    return out
