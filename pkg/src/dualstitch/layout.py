"""Placement of the two lenses on the panorama and the overlap bands between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEAM_LONGITUDES = (-90.0, 90.0)


@dataclass(frozen=True)
class SeamLayout:
    """Right lens centred at longitude 0, seams at -90 and +90 degrees.

    Each overlap band is ``overlap_deg`` wide and centred on a seam. The blend
    ramp runs linearly across the full band, rising toward the right lens.
    """

    width: int
    height: int
    overlap_deg: float = 15.0

    def __post_init__(self):
        if self.width % 2 or self.height * 2 != self.width:
            raise ValueError(f"layout must be 2:1 with even width, got {self.width}x{self.height}")
        if not self.overlap_deg > 0:
            raise ValueError("overlap_deg must be positive")
        if self.band_width_px < 8:
            raise ValueError(
                f"overlap band is {self.band_width_px:.2f} px wide; at least 8 px required"
            )

    @classmethod
    def for_fov(cls, width: int, fov_deg: float = 195.0) -> "SeamLayout":
        return cls(width, width // 2, fov_deg - 180.0)

    @property
    def band_width_px(self) -> float:
        return self.overlap_deg / 360.0 * self.width

    def seam_column(self, boundary: int) -> float:
        """Pixel column of seam 0 (longitude -90) or seam 1 (+90)."""
        return (SEAM_LONGITUDES[boundary] + 180.0) / 360.0 * self.width

    def band_limits(self, boundary: int) -> tuple:
        c = self.seam_column(boundary)
        half = self.band_width_px / 2.0
        return c - half, c + half

    def band_columns(self, boundary: int) -> np.ndarray:
        lo, hi = self.band_limits(boundary)
        cols = np.arange(self.width)
        return cols[(cols >= lo) & (cols <= hi)]

    def band_mask(self) -> np.ndarray:
        """(H, W) boolean mask of both overlap bands."""
        cols = np.zeros(self.width, dtype=bool)
        for b in (0, 1):
            cols[self.band_columns(b)] = True
        return np.broadcast_to(cols, (self.height, self.width))

    def right_weight(self) -> np.ndarray:
        """Per-column blend weight of the right lens: 0 outside, 1 inside, ramps in bands."""
        x = np.arange(self.width, dtype=np.float64)
        lo0, hi0 = self.band_limits(0)
        lo1, hi1 = self.band_limits(1)
        w = np.zeros(self.width)
        w[(x > hi0) & (x < lo1)] = 1.0
        m0 = (x >= lo0) & (x <= hi0)
        w[m0] = (x[m0] - lo0) / (hi0 - lo0)
        m1 = (x >= lo1) & (x <= hi1)
        w[m1] = (hi1 - x[m1]) / (hi1 - lo1)
        return w
