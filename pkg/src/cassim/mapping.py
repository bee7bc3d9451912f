"""Spatio-spectral mapping extraction and system characterization.

The mapping ``f(x_s, y_s, lambda) -> (x_d, y_d)`` assigns every scene
pixel and wavelength a fractional detector-pixel position on the
acquisition canvas.  It is the bridge between the ray tracer and
reconstruction: chief rays define it, the renderer is validated against
it, and the reconstruction operators interpolate it.

Also here: point-spread sampling (spot diagrams with RMS radii) and
distortion maps with CSV export for external plotting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import containers as co
from . import designer as dz
from . import elements as el
from . import render as rd
from .dual import value_of

__all__ = [
    "MappingTable",
    "SpotDiagram",
    "build_mapping",
    "psf",
    "distortion_map",
    "export_distortion_csv",
    "band_shifts",
]


@dataclass
class MappingTable:
    """Chief-ray detector coordinates per scene pixel and wavelength.

    ``entries[row, col, band] = (x_d, y_d)`` in fractional canvas pixels
    (x = column axis, y = row axis); NaN marks scene points whose chief ray
    did not reach the detector.
    """

    entries: np.ndarray
    wavelengths_nm: np.ndarray
    system_name: str
    pitch_um: float

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if self.entries.ndim != 4 or self.entries.shape[3] != 2:
            raise ValueError(
                f"mapping entries must be H x W x N x 2, got "
                f"{self.entries.shape}")
        if self.wavelengths_nm.shape != (self.entries.shape[2],):
            raise ValueError("wavelength table does not match mapping bands")

    @property
    def scene_shape(self) -> tuple[int, int]:
        return self.entries.shape[:2]

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.entries).all(axis=3)

    def save(self, path) -> None:
        co.write_container(path, co.KIND_MAPPING, self.entries,
                           self.wavelengths_nm, self.pitch_um)

    @staticmethod
    def load(path, system_name: str = "") -> "MappingTable":
        _, data, table, pitch = co.read_container(path, co.KIND_MAPPING)
        return MappingTable(entries=data.astype(np.float64),
                            wavelengths_nm=table, system_name=system_name,
                            pitch_um=pitch)


@dataclass
class SpotDiagram:
    """Detector hit cloud of one field point at one wavelength."""

    points_um: np.ndarray          # M x 2 survivor hits about the centroid
    centroid_um: np.ndarray        # 2-vector, detector-local
    rms_radius_um: float
    wavelength_nm: float
    field_point_mm: tuple
    rays_traced: int

    @property
    def survivors(self) -> int:
        return self.points_um.shape[0]


def build_mapping(system: el.OpticalSystem, shape_hw=None,
                  wavelengths_nm=None) -> MappingTable:
    """Trace the chief-ray mapping for an ``H x W`` scene grid.

    The grid sits at the system's scene plane with the sensor pitch; the
    returned coordinates are fractional pixels on the ``shape_hw`` canvas
    used by the renderer.  Dead chief rays yield NaN entries.
    """
    if shape_hw is None:
        shape_hw = system.sensor_px
    if wavelengths_nm is None:
        wavelengths_nm = system.wavelengths()
    wavelengths_nm = np.asarray(wavelengths_nm, dtype=float)
    h, w = int(shape_hw[0]), int(shape_hw[1])
    xs, ys = rd.scene_grid_mm((h, w), system.scene_pitch_mm)
    gx = np.broadcast_to(xs[None, :], (h, w)).reshape(-1)
    gy = np.broadcast_to(ys[:, None], (h, w)).reshape(-1)
    entries = np.full((h, w, wavelengths_nm.size, 2), np.nan)
    for b, wl in enumerate(wavelengths_nm):
        rays = system.chief_rays(gx, gy, float(wl))
        row, col, alive = system.trace_to_pixels(rays)
        row, col = rd._canvas_rowcol(system, row, col, (h, w))
        x_d = np.where(alive, col, np.nan).reshape(h, w)
        y_d = np.where(alive, row, np.nan).reshape(h, w)
        entries[:, :, b, 0] = x_d
        entries[:, :, b, 1] = y_d
    return MappingTable(entries=entries, wavelengths_nm=wavelengths_nm,
                        system_name=system.name, pitch_um=system.pitch_um)


def psf(system: el.OpticalSystem, field_point_mm, wavelength_nm: float,
        ray_count: int = 61) -> SpotDiagram:
    """Hexapolar point-spread sample of one field point.

    Traces ``ray_count`` rays filling the NA cone and reports the survivor
    hit cloud on the detector with its centroid and RMS radius.
    """
    if ray_count < 7:
        raise ValueError("ray_count must be >= 7 for a hexapolar fill")
    x0, y0 = float(field_point_mm[0]), float(field_point_mm[1])
    origin = el.Vec3(np.full(ray_count, x0), np.full(ray_count, y0),
                     np.full(ray_count, float(system.scene_z)))
    chief = (system.aim_point - el.Vec3(x0, y0, float(system.scene_z)))
    dirs = el.cone_directions(chief.normalized(), system.numerical_aperture,
                              ray_count)
    rays = el.geo.make_rays(origin, dirs, float(wavelength_nm))
    final, _ = system.trace(rays)
    xl, yl = system.detector_local(final)
    alive = np.asarray(final.alive)
    if not alive.any():
        raise RuntimeError(
            f"all {ray_count} rays dead for field point ({x0}, {y0}) mm "
            f"at {wavelength_nm} nm")
    pts = np.stack([np.asarray(value_of(xl))[alive],
                    np.asarray(value_of(yl))[alive]], axis=1) * 1000.0
    centroid = pts.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1))))
    return SpotDiagram(points_um=pts, centroid_um=centroid,
                       rms_radius_um=rms, wavelength_nm=float(wavelength_nm),
                       field_point_mm=(x0, y0), rays_traced=ray_count)


def distortion_map(system: el.OpticalSystem,
                   wavelengths_nm=dz.DESIGN_WAVELENGTHS_NM,
                   span_mm: float = 5.0, n: int = 21) -> dz.DistortionTensor:
    """Chief-ray displacement from the ideal magnified grid, per wavelength.

    Same ideal-grid rule as the design distortion loss: a least-squares
    magnification at the center wavelength about the central sample plus a
    per-wavelength traced center shift.  Summaries in micrometres.
    """
    return dz.distortion_tensor(system, wavelengths=wavelengths_nm,
                                span_mm=span_mm, n=n)


def export_distortion_csv(tensor: dz.DistortionTensor, path) -> None:
    """Write per-point displacement rows: x_s, y_s, wavelength, dx, dy (µm)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_s_mm", "y_s_mm", "wavelength_nm",
                         "dx_um", "dy_um"])
        rows, cols = tensor.eps.shape[:2]
        for b, wl in enumerate(tensor.wavelengths_nm):
            dx = (tensor.traced_x[..., b] - tensor.ideal_x[..., b]) * 1000.0
            dy = (tensor.traced_y[..., b] - tensor.ideal_y[..., b]) * 1000.0
            for i in range(rows):
                for j in range(cols):
                    writer.writerow([
                        f"{tensor.grid_x[i, j]:.6f}",
                        f"{tensor.grid_y[i, j]:.6f}",
                        f"{wl:.2f}",
                        f"{dx[i, j]:.6f}" if np.isfinite(dx[i, j]) else "nan",
                        f"{dy[i, j]:.6f}" if np.isfinite(dy[i, j]) else "nan",
                    ])


def band_shifts(table: MappingTable) -> np.ndarray:
    """Integer dispersion shift (columns) per band, from the center entry.

    This is the classical aligned-system model: band ``b`` of the scene
    appears in the acquisition window shifted by ``s[b]`` columns.
    """
    h, w = table.scene_shape
    center = table.entries[h // 2, w // 2, :, 0]
    ref = (w - 1) / 2.0
    return np.rint(center - ref).astype(int)
