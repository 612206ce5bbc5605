"""Equidistant fisheye lens model, light fall-off compensation and unwarping.

Panorama layout: longitude increases to the right, from -180 at column 0;
latitude is +90 on row 0. World axes are x = cos(lat) sin(lon), y = sin(lat),
z = cos(lat) cos(lon), so the right lens looks down +z (image centre) and
the left lens down -z (split across the left/right edges).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from dualstitch.errors import CalibrationError
from dualstitch.images import EquirectImage, FisheyeImage
from dualstitch.sampling import remap


class Role(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


# lens-to-world rotations; columns are the lens right/up/forward axes
_NOMINAL_ROTATION = {
    Role.RIGHT: np.eye(3),
    Role.LEFT: np.diag([-1.0, 1.0, -1.0]),
}


@dataclass(frozen=True)
class LensCalibration:
    center_x: float
    center_y: float
    radius: float
    fov_deg: float = 195.0
    falloff_coeffs: tuple = (1.0,)
    role: Role = Role.RIGHT

    def __post_init__(self):
        object.__setattr__(self, "falloff_coeffs", tuple(float(c) for c in self.falloff_coeffs))
        object.__setattr__(self, "role", Role(self.role))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise CalibrationError(f"radius must be positive, got {self.radius}")
        if not (180.0 < self.fov_deg <= 220.0):
            raise CalibrationError(f"fov_deg must lie in (180, 220], got {self.fov_deg}")
        if not (math.isfinite(self.center_x) and math.isfinite(self.center_y)):
            raise CalibrationError("optical center must be finite")
        check_falloff(self.falloff_coeffs)

    @property
    def half_fov(self) -> float:
        return math.radians(self.fov_deg) / 2.0

    @property
    def rotation(self) -> np.ndarray:
        return _NOMINAL_ROTATION[self.role]

    def to_dict(self) -> dict:
        return {
            "center_x": self.center_x,
            "center_y": self.center_y,
            "radius": self.radius,
            "fov_deg": self.fov_deg,
            "falloff_coeffs": list(self.falloff_coeffs),
            "role": self.role.value,
        }

    @classmethod
    def from_dict(cls, data: dict, role=None) -> "LensCalibration":
        try:
            return cls(
                center_x=float(data["center_x"]),
                center_y=float(data["center_y"]),
                radius=float(data["radius"]),
                fov_deg=float(data.get("fov_deg", 195.0)),
                falloff_coeffs=tuple(data.get("falloff_coeffs", (1.0,))),
                role=Role(data.get("role", role)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"bad lens calibration entry: {exc}") from exc


def check_falloff(coeffs) -> None:
    """Raise CalibrationError unless the polynomial is strictly positive on [0, 1]."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.size == 0 or not np.all(np.isfinite(c)):
        raise CalibrationError("falloff polynomial needs finite coefficients")
    r = np.linspace(0.0, 1.0, 2049)
    vals = np.polynomial.polynomial.polyval(r, c)
    bad = vals.min() <= 0.0
    if not bad and c.size > 1 and np.any(c[1:] != 0):
        roots = np.polynomial.polynomial.polyroots(np.trim_zeros(c, "b"))
        real = roots[np.abs(roots.imag) < 1e-12].real
        bad = bool(np.any((real >= 0.0) & (real <= 1.0)))
    if bad:
        raise CalibrationError(f"falloff polynomial {list(c)} is not positive on [0, 1]")


@lru_cache(maxsize=8)
def _falloff_gain(calib: LensCalibration, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r = np.hypot(xx - calib.center_x, yy - calib.center_y) / calib.radius
    np.clip(r, 0.0, 1.0, out=r)
    gain = 1.0 / np.polynomial.polynomial.polyval(r, np.asarray(calib.falloff_coeffs))
    gain = gain.astype(np.float32)[:, :, None]
    gain.setflags(write=False)
    return gain


def compensate_falloff(img: FisheyeImage, calib: LensCalibration) -> FisheyeImage:
    """Undo radial light fall-off: multiply by 1/P(r), r = distance / radius.

    Radii beyond the image circle use P(1). Output is clipped to [0, 1].
    """
    check_falloff(calib.falloff_coeffs)
    if calib.falloff_coeffs == (1.0,):
        return FisheyeImage(img.pixels.copy())
    gain = _falloff_gain(calib, img.height, img.width)
    return FisheyeImage(np.clip(img.pixels * gain, 0.0, 1.0))


def lonlat_to_ray(lon, lat) -> np.ndarray:
    """Unit vectors (..., 3) from longitude/latitude in radians."""
    lon, lat = np.broadcast_arrays(np.asarray(lon, dtype=np.float64), np.asarray(lat, dtype=np.float64))
    cl = np.cos(lat)
    return np.stack([cl * np.sin(lon), np.sin(lat), cl * np.cos(lon)], axis=-1)


def ray_to_lonlat(ray):
    ray = np.asarray(ray, dtype=np.float64)
    x, y, z = ray[..., 0], ray[..., 1], ray[..., 2]
    return np.arctan2(x, z), np.arctan2(y, np.hypot(x, z))


def pixel_to_lonlat(px, py, width, height):
    """Longitude/latitude in radians of equirect pixel coordinates."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    lon = (px / width) * (2.0 * np.pi) - np.pi
    lat = 0.5 * np.pi - (py / height) * np.pi
    return lon, lat


def lonlat_to_pixel(lon, lat, width, height):
    px = (np.asarray(lon) + np.pi) / (2.0 * np.pi) * width
    py = (0.5 * np.pi - np.asarray(lat)) / np.pi * height
    return px, py


def equirect_to_ray(px, py, width, height) -> np.ndarray:
    """Unit view direction of equirect pixel (px, py). Vectorised over arrays."""
    lon, lat = pixel_to_lonlat(px, py, width, height)
    return lonlat_to_ray(lon, lat)


def project_local(local, center_x, center_y, radius, half_fov):
    """Equidistant projection of lens-frame directions.

    Returns (x, y, theta); x and y are NaN where theta > half_fov.
    """
    local = np.asarray(local, dtype=np.float64)
    a, b, c = local[..., 0], local[..., 1], local[..., 2]
    s = np.hypot(a, b)
    theta = np.arctan2(s, c)
    rho = radius * theta / half_fov
    with np.errstate(invalid="ignore", divide="ignore"):
        ua = np.where(s > 0.0, a / s, 0.0)
        ub = np.where(s > 0.0, b / s, 0.0)
    x = center_x + rho * ua
    y = center_y - rho * ub
    outside = theta > half_fov
    x = np.where(outside, np.nan, x)
    y = np.where(outside, np.nan, y)
    return x, y, theta


def unproject_local(x, y, center_x, center_y, radius, half_fov) -> np.ndarray:
    """Inverse of :func:`project_local`: fisheye pixel to lens-frame unit direction."""
    dx = np.asarray(x, dtype=np.float64) - center_x
    dy = center_y - np.asarray(y, dtype=np.float64)
    rho = np.hypot(dx, dy)
    theta = rho / radius * half_fov
    with np.errstate(invalid="ignore", divide="ignore"):
        ua = np.where(rho > 0.0, dx / rho, 0.0)
        ub = np.where(rho > 0.0, dy / rho, 0.0)
    st = np.sin(theta)
    return np.stack([st * ua, st * ub, np.cos(theta)], axis=-1)


def ray_to_fisheye(ray, calib: LensCalibration, rotation=None):
    """Fisheye pixel of a world direction, or None when outside the field of view.

    ``rotation`` overrides the role's nominal lens-to-world rotation.
    """
    rot = calib.rotation if rotation is None else np.asarray(rotation)
    local = np.asarray(ray, dtype=np.float64) @ rot
    x, y, _ = project_local(local, calib.center_x, calib.center_y, calib.radius, calib.half_fov)
    if np.ndim(x) == 0:
        if np.isnan(x):
            return None
        return float(x), float(y)
    return x, y


@lru_cache(maxsize=4)
def unwarp_map(calib: LensCalibration, out_width: int):
    """Cached backward map (map_x, map_y, in_fov) from equirect pixels to the fisheye."""
    if out_width <= 0 or out_width % 2:
        raise ValueError(f"out_width must be positive and even, got {out_width}")
    height = out_width // 2
    lon, lat = pixel_to_lonlat(np.arange(out_width), np.arange(height), out_width, height)
    rays = lonlat_to_ray(lon[None, :], lat[:, None])
    local = rays @ calib.rotation
    x, y, theta = project_local(local, calib.center_x, calib.center_y, calib.radius, calib.half_fov)
    in_fov = theta <= calib.half_fov
    x = np.where(in_fov, x, -1.0)
    y = np.where(in_fov, y, -1.0)
    for arr in (x, y, in_fov):
        arr.setflags(write=False)
    return x, y, in_fov


def unwarp_fisheye(img: FisheyeImage, calib: LensCalibration, out_width: int) -> EquirectImage:
    """Resample a fisheye image into the shared equirectangular layout."""
    map_x, map_y, in_fov = unwarp_map(calib, int(out_width))
    pixels, valid = remap(img.pixels, None, map_x, map_y, in_fov)
    return EquirectImage(pixels, valid)

