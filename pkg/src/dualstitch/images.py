"""Image containers and 8-bit file I/O (PNG / binary PPM / PGM)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np


def _as_hwc(pixels) -> np.ndarray:
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected HxW, HxWx1 or HxWx3 pixels, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class FisheyeImage:
    """Raw fisheye frame, float intensities in [0, 1], shape (H, W, C)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _as_hwc(self.pixels)
        if not np.all(np.isfinite(arr)):
            raise ValueError("fisheye pixels must be finite")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True, eq=False)
class EquirectImage:
    """2:1 equirectangular image with a per-pixel coverage mask.

    Pixels outside ``valid`` are zero.
    """

    pixels: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        arr = _as_hwc(self.pixels)
        h, w = arr.shape[:2]
        if w % 2 or h * 2 != w:
            raise ValueError(f"equirect image must be 2:1 with even width, got {w}x{h}")
        valid = np.asarray(self.valid, dtype=bool)
        if valid.shape != (h, w):
            raise ValueError("valid mask shape does not match pixels")
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def full(cls, pixels) -> "EquirectImage":
        arr = _as_hwc(pixels)
        return cls(arr, np.ones(arr.shape[:2], dtype=bool))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    # round half up
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read an 8-bit PNG/PPM/PGM as float32 (H, W, C) in [0, 1], RGB order."""
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read image {path}")
    if raw.dtype != np.uint8:
        raise ValueError(f"{path}: only 8-bit images are supported")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = raw[:, :, ::-1]
    return _as_hwc(raw.astype(np.float32) / 255.0)


def write_image(path, pixels: np.ndarray) -> None:
    path = Path(path)
    data = to_uint8(_as_hwc(pixels))
    if data.shape[2] == 3:
        data = np.ascontiguousarray(data[:, :, ::-1])
    else:
        data = data[:, :, 0]
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"cannot write image {path}")


def read_fisheye(path) -> FisheyeImage:
    return FisheyeImage(read_image(path))


def read_equirect(path) -> EquirectImage:
    return EquirectImage.full(read_image(path))
