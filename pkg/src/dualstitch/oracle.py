"""Synthetic ground truth: procedural panoramas, perturbed fisheye renders,
analytic control points and seam metrics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dualstitch.calibration import StitchCalibration, save_calibration
from dualstitch.errors import ReportUndefinedError
from dualstitch.images import EquirectImage, FisheyeImage, write_image
from dualstitch.layout import SeamLayout
from dualstitch.lens import (
    LensCalibration,
    Role,
    lonlat_to_pixel,
    lonlat_to_ray,
    pixel_to_lonlat,
    project_local,
    ray_to_lonlat,
    unproject_local,
)
from dualstitch.mls import ControlPointSet
from dualstitch.sampling import remap

DEFAULT_SEED = 20170917
# scene content rendered this far beyond the nominal field of view
EXTRA_FOV_DEG = 6.0


class Scene(str, enum.Enum):
    CHECKER = "checker"
    GRADIENT = "gradient"
    NOISE = "noise"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class Perturbation:
    """Misalignment of the right lens: rotation (yaw, pitch, roll) in degrees about
    its up/right/optical axes, relative error on the image radius, optical-centre shift."""

    rotation: tuple = (0.0, 0.0, 0.0)
    radial_gain_delta: float = 0.0
    decenter: tuple = (0.0, 0.0)

    def __post_init__(self):
        rot = tuple(float(a) for a in self.rotation)
        dec = tuple(float(d) for d in self.decenter)
        if len(rot) != 3 or len(dec) != 2:
            raise ValueError("rotation needs 3 angles and decenter 2 offsets")
        if max(abs(a) for a in rot) > 5.0:
            raise ValueError("rotation angles are capped at 5 degrees")
        if abs(self.radial_gain_delta) > 0.05:
            raise ValueError("radial_gain_delta is capped at 0.05")
        if math.hypot(*dec) > 10.0:
            raise ValueError("decenter is capped at 10 px")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "decenter", dec)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0) -> "Perturbation":
        rot = rng.uniform(-5.0, 5.0, 3) * scale
        ang = rng.uniform(0, 2 * np.pi)
        rad = rng.uniform(0, 10.0) * scale
        return cls(tuple(rot), float(rng.uniform(-0.05, 0.05) * scale), (rad * math.cos(ang), rad * math.sin(ang)))

    @property
    def is_zero(self) -> bool:
        return not any(self.rotation) and self.radial_gain_delta == 0 and not any(self.decenter)

    def matrix(self) -> np.ndarray:
        """Lens-frame rotation R_yaw @ R_pitch @ R_roll."""
        yaw, pitch, roll = (math.radians(a) for a in self.rotation)
        cy, sy = math.cos(yaw), math.sin(yaw)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cr, sr = math.cos(roll), math.sin(roll)
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
        rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
        return ry @ rx @ rz


NO_PERTURBATION = Perturbation()


@dataclass(frozen=True)
class _LensModel:
    center_x: float
    center_y: float
    radius: float
    half_fov: float
    rotation: np.ndarray = field(compare=False)

    def project(self, rays):
        local = np.asarray(rays) @ self.rotation
        return project_local(local, self.center_x, self.center_y, self.radius, self.half_fov)

    def unproject(self, x, y):
        local = unproject_local(x, y, self.center_x, self.center_y, self.radius, self.half_fov)
        return local @ self.rotation.T


def _model(calib: LensCalibration, pert: Perturbation = NO_PERTURBATION, extra_deg: float = 0.0) -> _LensModel:
    # extra_deg widens the field of view while keeping the same image scale
    half = calib.half_fov + math.radians(extra_deg)
    return _LensModel(
        calib.center_x + pert.decenter[0],
        calib.center_y + pert.decenter[1],
        calib.radius * (1.0 + pert.radial_gain_delta) * half / calib.half_fov,
        half,
        calib.rotation @ pert.matrix(),
    )


def synthetic_calibration(width: int, fov_deg: float = 195.0, falloff=(1.0,)) -> StitchCalibration:
    """Lens pair whose fisheye resolution roughly matches a ``width``-wide panorama.

    The fisheye canvas leaves room for content rendered past the nominal
    image circle (see :func:`project_to_fisheye`).
    """
    radius = fov_deg / 2.0 / 360.0 * width
    c = math.ceil(radius * (1.0 + EXTRA_FOV_DEG / (fov_deg / 2.0)) * 1.05) + 12
    lenses = {
        role: LensCalibration(c, c, radius, fov_deg, tuple(falloff), role) for role in (Role.LEFT, Role.RIGHT)
    }
    return StitchCalibration(lenses[Role.LEFT], lenses[Role.RIGHT], width)


def fisheye_size(calib: LensCalibration) -> int:
    return int(round(2 * calib.center_x)) + 1


def _plane_waves(rays, rng, count, wavelengths_deg):
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lam = np.radians(rng.uniform(*wavelengths_deg, count))
    phase = rng.uniform(0, 2 * np.pi, count)
    amp = rng.uniform(0.5, 1.0, count)
    freq = (dirs.T * (2 * np.pi / lam)).astype(np.float32)
    flat = rays.reshape(-1, 3).astype(np.float32)
    phase = phase.astype(np.float32)
    amp = amp.astype(np.float32)
    acc = np.empty(len(flat), dtype=np.float32)
    for start in range(0, len(flat), 1 << 15):
        block = np.sin(flat[start:start + (1 << 15)] @ freq + phase)
        acc[start:start + (1 << 15)] = block @ amp
    acc = acc.reshape(rays.shape[:-1]) / np.sqrt(np.sum(amp.astype(np.float64) ** 2) / 2.0)
    return np.clip(0.5 + 0.17 * acc, 0.0, 1.0)


def _square_wave(t, period, edge):
    # +-1 square wave with linear edges ``edge`` pixels wide, like a lens-blurred print
    return np.clip(np.sin(np.pi * t / period) * period / (np.pi * edge), -1.0, 1.0)


def _checker(px, py, width, height, cells=(16, 8), edge=2.0):
    """Cells alternate 0 / 1 with soft edges; (px + 0.5, py + 0.5) is the pixel centre."""
    sx = _square_wave(px + 0.5, width / cells[0], edge)
    sy = _square_wave(py + 0.5, height / cells[1], edge)
    return 0.5 - 0.5 * sx * sy


def render_panorama(kind, width: int, channels: int = 1, seed: int = DEFAULT_SEED) -> EquirectImage:
    """Deterministic procedural panorama, fully valid.

    Noise is a sum of random plane waves over the unit sphere, so it stays
    smooth near the poles.
    """
    kind = Scene(kind)
    if width % 2:
        raise ValueError("panorama width must be even")
    height = width // 2
    rng = np.random.default_rng(seed)
    py, px = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind is Scene.CHECKER:
        img = _checker(px, py, width, height)
    elif kind is Scene.GRADIENT:
        img = np.broadcast_to((px + 0.5) / width, (height, width)).copy()
    else:
        rays = lonlat_to_ray(*pixel_to_lonlat(px, py, width, height))
        noise = _plane_waves(rays, rng, 24, (2.0, 8.0))
        if kind is Scene.NOISE:
            img = noise
        else:
            img = 0.6 * noise + 0.25 * _checker(px, py, width, height, (32, 16)) + 0.15 * (px + 0.5) / width
    img = img.astype(np.float32)
    if channels == 3:
        # mildly different channel gains keep colour tests honest
        img = np.stack([img, 0.9 * img + 0.05, 0.8 * img + 0.1], axis=-1)
    elif channels != 1:
        raise ValueError("channels must be 1 or 3")
    return EquirectImage.full(img)


def project_to_fisheye(
    pano: EquirectImage,
    calib: LensCalibration,
    pert: Perturbation = NO_PERTURBATION,
    size=None,
    vignette: bool = False,
) -> FisheyeImage:
    """Render what a (possibly misaligned) lens sees of the panorama.

    Content extends ``EXTRA_FOV_DEG`` past the nominal field of view, so a
    decentred or rescaled lens still fills the nominal image circle; pixels
    further out are black. With ``vignette`` the calibration's fall-off
    polynomial is applied forward.
    """
    size = fisheye_size(calib) if size is None else size
    w, h = (size, size) if np.isscalar(size) else size
    model = _model(calib, pert)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rho = np.hypot(xs - model.center_x, ys - model.center_y)
    inside = rho <= model.radius * (1.0 + EXTRA_FOV_DEG / math.degrees(model.half_fov))
    rays = model.unproject(xs, ys)
    lon, lat = ray_to_lonlat(rays)
    sx, sy = lonlat_to_pixel(lon, lat, pano.width, pano.height)
    sx = np.mod(sx, pano.width)
    sy = np.clip(sy, 0.0, pano.height - 1)
    # one wrapped column so longitudes up to +180 interpolate across the seam
    padded = np.concatenate([pano.pixels, pano.pixels[:, :1]], axis=1)
    pixels, _ = remap(padded, None, sx, sy, inside)
    if vignette:
        r = np.clip(rho / calib.radius, 0.0, 1.0)
        gain = np.polynomial.polynomial.polyval(r, np.asarray(calib.falloff_coeffs))
        pixels = pixels * gain[:, :, None].astype(np.float32)
    return FisheyeImage(np.clip(pixels, 0.0, 1.0))


CONTROL_ALPHA = 2.0
# column offsets (degrees from each seam) used for the calibrations make_scene writes
SCENE_COLUMNS = (-5.0, 0.0, 5.0)


def control_latitudes(n: int, max_lat_deg: float = 86.0) -> np.ndarray:
    return np.radians(np.linspace(-max_lat_deg, max_lat_deg, n))


def gen_control_points(
    calib: StitchCalibration,
    pert: Perturbation,
    n_per_band: int = 24,
    width=None,
    max_lat_deg: float = 86.0,
    alpha=None,
    column_offsets_deg=(0.0,),
) -> ControlPointSet:
    """Analytic control points on a lat/lon lattice inside each overlap band.

    Each band gets ``n_per_band`` latitudes times one column per offset from
    the band centre. q_i is where a scene point appears in the left unwarp
    (the unperturbed lens), p_i where the perturbed right lens puts it after
    nominal unwarping.
    """
    if n_per_band < 2:
        raise ValueError("n_per_band must be >= 2")
    width = calib.panorama_width if width is None else width
    height = width // 2
    lats = control_latitudes(n_per_band, max_lat_deg)
    offsets = np.asarray(column_offsets_deg, dtype=np.float64)
    lons = np.radians(np.concatenate([-90.0 + offsets, 90.0 + offsets]))
    lon, lat = np.meshgrid(lons, lats, indexing="ij")
    lon, lat = lon.ravel(), lat.ravel()
    rays = lonlat_to_ray(lon, lat)
    qx, qy = lonlat_to_pixel(lon, lat, width, height)
    fx, fy, _ = _model(calib.right, pert, EXTRA_FOV_DEG).project(rays)
    if np.any(np.isnan(fx)):
        raise ValueError("a control point falls outside the perturbed right lens")
    seen = _model(calib.right).unproject(fx, fy)
    plon, plat = ray_to_lonlat(seen)
    px, py = lonlat_to_pixel(plon, plat, width, height)
    alpha = CONTROL_ALPHA if alpha is None else alpha
    return ControlPointSet(np.stack([px, py], 1), np.stack([qx, qy], 1), alpha)


def sample_perturbation(
    rng: np.random.Generator, width: int = 2048, max_displacement: float = 40.0, max_tries: int = 100000
) -> Perturbation:
    """Draw perturbations within the caps until every control point moves at most
    ``max_displacement`` panorama pixels (at ``width``)."""
    calib = synthetic_calibration(width)
    for _ in range(max_tries):
        pert = Perturbation.random(rng)
        try:
            cps = gen_control_points(calib, pert, width=width, column_offsets_deg=SCENE_COLUMNS)
        except ValueError:
            continue
        if np.abs(cps.q - cps.p).max() <= max_displacement:
            return pert
    raise RuntimeError(f"no perturbation within {max_displacement} px after {max_tries} draws")


def true_displacement(calib: StitchCalibration, pert: Perturbation, px, py, width=None) -> np.ndarray:
    """Where content at unwarped-right pixel (px, py) really belongs, minus (px, py)."""
    width = calib.panorama_width if width is None else width
    height = width // 2
    rays = lonlat_to_ray(*pixel_to_lonlat(px, py, width, height))
    fx, fy, _ = _model(calib.right).project(rays)
    real = _model(calib.right, pert).unproject(fx, fy)
    tx, ty = lonlat_to_pixel(*ray_to_lonlat(real), width, height)
    return np.stack([tx - np.asarray(px), ty - np.asarray(py)], axis=-1)


@dataclass(frozen=True, eq=False)
class SeamReport:
    rms_gap: float
    max_gap: float
    row_profile: np.ndarray

    def tsv(self) -> str:
        prof = ",".join("nan" if np.isnan(v) else f"{v:.6f}" for v in self.row_profile)
        return f"rms_gap\t{self.rms_gap:.6f}\nmax_gap\t{self.max_gap:.6f}\nrow_profile\t{prof}\n"


def seam_error(left: EquirectImage, right: EquirectImage, layout: SeamLayout) -> SeamReport:
    """Intensity gap between the two contributions inside the overlap bands.

    Only pixels valid in both images count. The row profile holds per-row
    RMS (NaN for rows without such pixels).
    """
    if left.pixels.shape != right.pixels.shape:
        raise ValueError("contributions must share dimensions")
    mask = layout.band_mask() & left.valid & right.valid
    if not mask.any():
        raise ReportUndefinedError("no overlap pixels valid in both contributions")
    diff = np.abs(left.pixels.astype(np.float64) - right.pixels.astype(np.float64))
    sq = np.mean(diff * diff, axis=2)
    gap = np.sqrt(sq)
    counts = mask.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        profile = np.sqrt(np.where(mask, sq, 0.0).sum(axis=1) / counts)
    profile[counts == 0] = np.nan
    return SeamReport(float(np.sqrt(sq[mask].mean())), float(gap[mask].max()), profile)


def column_jump(pano: EquirectImage, layout: SeamLayout) -> float:
    """Largest change in column mean between neighbouring columns inside the bands."""
    means = pano.pixels.astype(np.float64).mean(axis=(0, 2))
    jumps = 0.0
    for b in (0, 1):
        cols = layout.band_columns(b)
        cols = np.concatenate([[cols[0] - 1], cols])
        jumps = max(jumps, float(np.abs(np.diff(means[cols])).max()))
    return jumps


def overlap_jitter(frames, layout: SeamLayout) -> float:
    """Mean absolute inter-frame difference inside the overlap bands."""
    mask = layout.band_mask()
    diffs = []
    for a, b in zip(frames, frames[1:]):
        pa = a.pixels if isinstance(a, EquirectImage) else a
        pb = b.pixels if isinstance(b, EquirectImage) else b
        diffs.append(np.abs(pa.astype(np.float64) - pb.astype(np.float64))[mask].mean())
    return float(np.mean(diffs))


def corrupt_overlap(fisheye: FisheyeImage, calib: LensCalibration, seed: int, inner_deg: float = 75.0) -> FisheyeImage:
    """Replace the outer ring of a fisheye image (where the overlap lives) with noise."""
    rng = np.random.default_rng(seed)
    h, w = fisheye.height, fisheye.width
    ys, xs = np.mgrid[0:h, 0:w]
    theta = np.hypot(xs - calib.center_x, ys - calib.center_y) / calib.radius * calib.half_fov
    ring = (theta >= math.radians(inner_deg)) & (theta <= calib.half_fov)
    out = fisheye.pixels.copy()
    out[ring] = rng.uniform(0.0, 1.0, (int(ring.sum()), out.shape[2])).astype(np.float32)
    return FisheyeImage(out)


@dataclass(frozen=True, eq=False)
class SynthScene:
    pano: EquirectImage
    calibration: StitchCalibration
    left: FisheyeImage
    right: FisheyeImage
    perturbation: Perturbation


def make_scene(
    kind,
    width: int,
    pert: Perturbation = NO_PERTURBATION,
    channels: int = 1,
    seed: int = DEFAULT_SEED,
    n_per_band: int = 24,
    falloff=(1.0,),
) -> SynthScene:
    """Panorama, both fisheye renders and a calibration with embedded control points."""
    pano = render_panorama(kind, width, channels, seed)
    calib = synthetic_calibration(width, falloff=falloff)
    vignette = tuple(falloff) != (1.0,)
    left = project_to_fisheye(pano, calib.left, vignette=vignette)
    right = project_to_fisheye(pano, calib.right, pert, vignette=vignette)
    cps = gen_control_points(calib, pert, n_per_band, column_offsets_deg=SCENE_COLUMNS)
    calib = StitchCalibration(calib.left, calib.right, width, cps.alpha, cps)
    return SynthScene(pano, calib, left, right, pert)


def side_by_side(left: FisheyeImage, right: FisheyeImage) -> np.ndarray:
    return np.concatenate([left.pixels, right.pixels], axis=1)


def write_scene(scene: SynthScene, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "pano": out / "pano.png",
        "left": out / "left.png",
        "right": out / "right.png",
        "calib": out / "calib.json",
    }
    write_image(paths["pano"], scene.pano.pixels)
    write_image(paths["left"], scene.left.pixels)
    write_image(paths["right"], scene.right.pixels)
    save_calibration(paths["calib"], scene.calibration)
    return paths


def write_sequence(scene: SynthScene, out_dir, frames: int, corrupt=(), start: int = 1) -> list:
    """Static sequence of side-by-side frames; listed frame numbers get a noisy overlap."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in range(start, start + frames):
        left = scene.left
        if n in corrupt:
            left = corrupt_overlap(left, scene.calibration.left, seed=n)
        path = out / f"frame_{n:06d}.png"
        write_image(path, side_by_side(left, scene.right))
        paths.append(path)
    return paths
