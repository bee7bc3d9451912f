"""Backward Monte-Carlo rendering of hyperspectral scenes to acquisitions.

A scene is an ``H x W x N`` radiance cube sitting in the object plane at
the sensor pitch.  Rendering traces a bundle of rays per scene pixel per
spectral band through the optical system, bins survivors into detector
pixels, convolves each band with a wavelength-scaled Airy kernel, and sums
the bands into one panchromatic acquisition of shape
``(H + S_y, W + S_x)`` where ``(S_x, S_y)`` is the system's spectral
spread in pixels.

Determinism: the per-pixel position jitter is drawn from a counter-based
Philox stream keyed on ``(rng_seed, band index)``, and the aperture-cone
directions are a fixed hexapolar pattern, so a given seed always yields a
byte-identical acquisition and rendering is exactly linear in the scene
radiance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import j1

from . import elements as el
from . import geometry as geo

__all__ = [
    "SpectralCube",
    "Mask",
    "Acquisition",
    "RenderConfig",
    "band_wavelengths",
    "oversample_cube",
    "code_scene",
    "airy_kernel",
    "render",
    "scene_grid_mm",
    "canvas_shape",
]

# First and second zeros of the Airy intensity pattern 4*(J1(x)/x)^2.
_AIRY_FIRST_ZERO = 3.8317059702075125
_AIRY_SECOND_ZERO = 7.015586669815619


@dataclass
class SpectralCube:
    """Radiance cube: ``data[row, col, band]`` >= 0 at ``pitch_um`` sampling."""

    data: np.ndarray
    wavelengths_nm: np.ndarray
    pitch_um: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"cube must be 3-D, got shape {self.data.shape}")
        if self.wavelengths_nm.shape != (self.data.shape[2],):
            raise ValueError(
                f"{self.wavelengths_nm.size} wavelengths for "
                f"{self.data.shape[2]} bands")
        if self.wavelengths_nm.size > 1 and \
                not np.all(np.diff(self.wavelengths_nm) > 0):
            raise ValueError("wavelengths must be strictly ascending")
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise ValueError("cube radiance must be finite and >= 0")

    @property
    def shape(self):
        return self.data.shape

    def total(self) -> float:
        return float(self.data.sum())


@dataclass
class Mask:
    """Binary coded aperture; entries in {0, 1}."""

    data: np.ndarray
    seed: int | None = None
    open_ratio: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.data.shape}")
        vals = np.unique(self.data)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("mask entries must be 0 or 1")

    @staticmethod
    def random(shape, open_ratio: float = 0.5, seed: int = 0) -> "Mask":
        rng = np.random.Generator(np.random.Philox(key=seed))
        data = (rng.random(shape) < open_ratio).astype(np.float64)
        return Mask(data=data, seed=seed, open_ratio=open_ratio)

    @staticmethod
    def ones(shape) -> "Mask":
        return Mask(data=np.ones(shape), open_ratio=1.0)


@dataclass
class Acquisition:
    """Panchromatic coded acquisition and its rendering provenance."""

    data: np.ndarray
    system_name: str
    rays_per_pixel: int
    pitch_um: float
    warnings: list = field(default_factory=list)

    def total(self) -> float:
        return float(self.data.sum())


@dataclass
class RenderConfig:
    oversampling: int = 4
    rays_per_pixel_per_wavelength: int = 20
    airy_diameter_at_520_px: float = 2.5
    rng_seed: int = 0
    # Stream key offset for the first band; lets a caller render a band
    # slice of a larger cube while keeping the global per-band streams.
    band_key_offset: int = 0

    def validate(self) -> None:
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.rays_per_pixel_per_wavelength < 1:
            raise ValueError("rays_per_pixel_per_wavelength must be >= 1")
        if self.airy_diameter_at_520_px <= 0:
            raise ValueError("airy_diameter_at_520_px must be > 0")


def band_wavelengths(lo_nm: float, hi_nm: float, bands: int) -> np.ndarray:
    """Native band centers: ``bands`` points spanning [lo, hi] inclusive."""
    return el.band_centers((lo_nm, hi_nm), bands)


def oversample_cube(cube: SpectralCube, n: int) -> SpectralCube:
    """Split each native band into ``n`` sub-bands of 1/n the radiance.

    Sub-band wavelengths are uniformly spaced centers inside each native
    band's width (the native channel spacing); total radiance is preserved
    exactly and ``n = 1`` is the identity.
    """
    if n < 1:
        raise ValueError("oversampling factor must be >= 1")
    if n == 1:
        return cube
    wl = cube.wavelengths_nm
    if wl.size < 2:
        width = 0.0
    else:
        spacing = np.diff(wl)
        if not np.allclose(spacing, spacing[0], rtol=1e-6):
            raise ValueError("oversampling requires a uniform wavelength grid")
        width = float(spacing[0])
    sub = (np.arange(n) + 0.5) / n - 0.5           # offsets in band widths
    wl_out = (wl[:, None] + width * sub[None, :]).reshape(-1)
    data_out = np.repeat(cube.data / n, n, axis=2)
    return SpectralCube(data=data_out, wavelengths_nm=wl_out,
                        pitch_um=cube.pitch_um)


def code_scene(cube: SpectralCube, mask: Mask) -> SpectralCube:
    """Apply the coded aperture: per-band elementwise product with the mask."""
    if mask.data.shape != cube.data.shape[:2]:
        raise ValueError(
            f"mask shape {mask.data.shape} does not match cube spatial "
            f"shape {cube.data.shape[:2]}")
    return SpectralCube(data=cube.data * mask.data[:, :, None],
                        wavelengths_nm=cube.wavelengths_nm,
                        pitch_um=cube.pitch_um)


def airy_kernel(wavelength_nm: float, pitch_um: float,
                diameter_at_520_px: float = 2.5) -> np.ndarray:
    """Discrete Airy intensity kernel, sum 1, truncated at the second zero.

    The first-zero diameter is ``diameter_at_520_px`` pixels at 520 nm and
    scales linearly with wavelength (fixed-aperture diffraction).
    """
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    r1_px = 0.5 * diameter_at_520_px * (wavelength_nm / 520.0)
    r2_px = r1_px * (_AIRY_SECOND_ZERO / _AIRY_FIRST_ZERO)
    half = int(np.ceil(r2_px))
    ax = np.arange(-half, half + 1, dtype=float)
    rr = np.hypot(ax[:, None], ax[None, :])
    x = _AIRY_FIRST_ZERO * rr / r1_px
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.where(x > 0.0, (2.0 * j1(x) / np.where(x > 0, x, 1.0)) ** 2,
                       1.0)
    val[rr > r2_px] = 0.0
    return val / val.sum()


def scene_grid_mm(shape_hw, pitch_mm: float):
    """Physical (x, y) of each scene pixel center, scene centered on axis.

    Row index grows with +y and column index with +x, matching the readout
    frame's upright-scene convention.
    """
    h, w = shape_hw
    x = (np.arange(w) - (w - 1) / 2.0) * pitch_mm
    y = (np.arange(h) - (h - 1) / 2.0) * pitch_mm
    return x, y


def canvas_shape(system: el.OpticalSystem, scene_hw) -> tuple[int, int]:
    """Acquisition canvas (rows, cols) = scene + spectral spread margins."""
    s_x, s_y = system.spread_px
    return (scene_hw[0] + s_y, scene_hw[1] + s_x)


def _canvas_rowcol(system: el.OpticalSystem, row, col, scene_hw):
    """Sensor-frame fractional pixels -> cube-sized canvas pixels."""
    ny, nx = system.sensor_px
    h, w = scene_hw
    return (row - (ny - 1) / 2.0 + (h - 1) / 2.0,
            col - (nx - 1) / 2.0 + (w - 1) / 2.0)


def _pixel_jitter(rng: np.random.Generator, h: int, w: int, k: int):
    """Stratified jitter inside each pixel: k strata on a near-square grid."""
    a = int(np.floor(np.sqrt(k)))
    while k % a:
        a -= 1
    b = k // a                                 # a*b == k, a<=b
    u = (np.arange(a)[:, None] + rng.random((h, w, a, b))[..., :, :]) / a
    v = (np.arange(b)[None, :] + rng.random((h, w, a, b))[..., :, :]) / b
    return (u.reshape(h, w, k) - 0.5), (v.reshape(h, w, k) - 0.5)


def render(cube: SpectralCube, system: el.OpticalSystem,
           config: RenderConfig | None = None) -> Acquisition:
    """Render ``cube`` through ``system`` into a coded acquisition.

    Each scene pixel emits ``rays_per_pixel_per_wavelength`` rays per band:
    stratified-jittered positions inside the pixel footprint paired with a
    deterministic hexapolar fill of the NA cone aimed at the objective
    center.  Survivors deposit ``radiance / rays`` into their nearest
    detector pixel; each band image is then convolved with its Airy kernel
    and the bands are summed.
    """
    if config is None:
        config = RenderConfig()
    config.validate()
    if abs(cube.pitch_um - system.pitch_um) > 1e-9:
        raise ValueError(
            f"cube pitch {cube.pitch_um} um does not match system pitch "
            f"{system.pitch_um} um")
    h, w, bands = cube.shape
    ny, nx = system.sensor_px
    if h > ny or w > nx:
        raise ValueError(
            f"scene {h}x{w} exceeds the {ny}x{nx} sensor field of view")
    k = config.rays_per_pixel_per_wavelength
    pitch_mm = system.scene_pitch_mm
    xs, ys = scene_grid_mm((h, w), pitch_mm)
    gx = np.broadcast_to(xs[None, :], (h, w))
    gy = np.broadcast_to(ys[:, None], (h, w))
    canvas = np.zeros(canvas_shape(system, (h, w)))
    warnings: list[str] = []

    for b in range(bands):
        wl = float(cube.wavelengths_nm[b])
        radiance = cube.data[:, :, b]
        if not radiance.any():
            # per-band RNG streams are independent; skipping dark bands
            # leaves every other band's output untouched
            continue
        rng = np.random.Generator(np.random.Philox(
            key=[int(config.rng_seed), b + int(config.band_key_offset)]))
        ju, jv = _pixel_jitter(rng, h, w, k)     # row-dir, col-dir offsets
        ox = (gx[:, :, None] + jv * pitch_mm).reshape(-1)
        oy = (gy[:, :, None] + ju * pitch_mm).reshape(-1)
        origin = geo.Vec3(ox, oy, np.full_like(ox, system.scene_z))
        # one chief per pixel; stratum i of every pixel takes cone slot i
        centers = geo.Vec3(gx.reshape(-1), gy.reshape(-1),
                           np.full(h * w, float(system.scene_z)))
        chief = (system.aim_point - centers).normalized()
        dirs = el.cone_directions(chief, system.numerical_aperture, k)
        d = geo.Vec3(dirs.x.T.reshape(-1), dirs.y.T.reshape(-1),
                     dirs.z.T.reshape(-1))
        rays = geo.make_rays(origin, d, wl)
        row, col, alive = system.trace_to_pixels(rays)
        row, col = _canvas_rowcol(system, row, col, (h, w))
        share = np.repeat(radiance.reshape(-1) / k, k)
        dead_frac = 1.0 - alive.mean()
        if dead_frac > 0.5:
            warnings.append(
                f"band {wl:.2f} nm: {100 * dead_frac:.1f}% dead rays")
        ri = np.rint(row).astype(int)
        ci = np.rint(col).astype(int)
        keep = alive & (ri >= 0) & (ri < canvas.shape[0]) \
            & (ci >= 0) & (ci < canvas.shape[1])
        band_img = np.zeros_like(canvas)
        np.add.at(band_img, (ri[keep], ci[keep]), share[keep])
        kern = airy_kernel(wl, system.pitch_um, config.airy_diameter_at_520_px)
        canvas += ndimage.convolve(band_img, kern, mode="constant", cval=0.0)

    return Acquisition(data=canvas, system_name=system.name,
                       rays_per_pixel=k, pitch_um=system.pitch_um,
                       warnings=warnings)
