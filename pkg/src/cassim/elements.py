"""Optical elements and the reference spectral-imager systems.

Elements (ideal thin lens, cemented doublet, single prism, double-Amici
prism assembly) compile into ordered propagation stages; a built
:class:`OpticalSystem` adds sensor geometry, a readout frame solved from
probe traces, and the scene-side sampling used by the renderer.

Reference systems (layouts ship as YAML config files):
  - ``AP``: ideal thin relay lens in a 2f-2f layout with the double-Amici
    assembly between lens and detector (direct-view dispersion).
  - ``SP``: ideal collimator, equilateral prism aligned at minimum deviation
    for the central wavelength, and a doublet imager on the deviated axis.
  - ``mAP``/``mSP``: identical except the dispersive element is rotated by
    5 degrees about the x axis.

Frame conventions: the optical axis is +z, dispersion happens in the x-z
plane, y is vertical.  Scene plane at negative z; lengths in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml
from importlib import resources

from . import dual as dm
from . import geometry as geo
from .geometry import Rays, Surface, Vec3
from .glass import RelaxedGlass, glass_by_name, refractive_index

__all__ = [
    "PrismDesignParams", "ThinLens", "OpticalSystem", "ReadoutFrame",
    "thin_lens_refract", "single_prism_stages", "amici_stages",
    "doublet_stages", "trace_stages", "load_system_config",
    "build_reference_system", "build_amici_relay_stages",
    "spectral_spread_curve", "band_centers", "oversampled_wavelengths",
    "minimum_deviation_error", "REFERENCE_NAMES",
]

DEG = math.pi / 180.0
REFERENCE_NAMES = ("SP", "AP", "mSP", "mAP")

# face-to-face clearance (mm) kept between prism surfaces across the aperture
_PRISM_GAP_MM = 0.5


# -- design parameters -----------------------------------------------------

@dataclass
class PrismDesignParams:
    """Double-Amici design variables.

    ``alpha_c_deg`` is the signed incidence angle of the axial chief ray on
    the entrance face (positive sense matches the symmetric direct-view
    mount).  The outer prisms share apex ``a1_deg`` and ``glass1``; the
    inverted center prism has apex ``a2_deg`` and ``glass2``.  Glasses are
    dispersion models: relaxed (n_d, V_d) during optimization, catalog
    Sellmeier after snapping.  Angle fields may be dual numbers.
    """

    alpha_c_deg: object
    a1_deg: object
    a2_deg: object
    glass1: object
    glass2: object

    def validate(self):
        a1 = float(dm.value_of(self.a1_deg))
        a2 = float(dm.value_of(self.a2_deg))
        ac = float(dm.value_of(self.alpha_c_deg))
        if not (0.0 < a1 < 80.0 and 0.0 < a2 < 80.0):
            raise ValueError(f"apex angles must lie in (0, 80) deg, got {a1}, {a2}")
        if not (-45.0 < ac < 45.0):
            raise ValueError(f"incidence angle must lie in (-45, 45) deg, got {ac}")
        return self

    @staticmethod
    def from_nd_vd(alpha_c_deg, a1_deg, a2_deg, nd1, vd1, nd2, vd2) -> "PrismDesignParams":
        return PrismDesignParams(alpha_c_deg, a1_deg, a2_deg,
                                 RelaxedGlass(nd1, vd1, "glass1"),
                                 RelaxedGlass(nd2, vd2, "glass2"))


# -- stages ----------------------------------------------------------------

@dataclass
class ThinLens:
    """Ideal achromatic thin lens: aberration-free tan-linear ray transform."""

    rotation: tuple
    translation: Vec3
    aperture: float
    focal_mm: float


def thin_lens_refract(rays: Rays, lens: ThinLens):
    """Propagate a bundle through an ideal thin lens.

    The exit direction points from the hit position toward the ideal image
    point of the incoming direction: local target (f*dx/dz, f*dy/dz, f).
    Center rays pass undeviated; rays parallel to the lens plane die.
    """
    plane = Surface(rotation=lens.rotation, translation=lens.translation,
                    aperture=lens.aperture)
    point, _, path, ok = geo.intersect(rays, plane)
    d = geo.mat3_transpose_apply(lens.rotation, rays.direction)
    h = geo.mat3_transpose_apply(lens.rotation, point - lens.translation)
    dz_ok = np.abs(dm.value_of(d.z)) > 1e-12
    dz = dm.where(dz_ok, d.z, 1.0)
    f = lens.focal_mm
    # hits lie on the local z=0 plane, so the exit direction is target - hit
    e = Vec3(f * d.x / dz - h.x, f * d.y / dz - h.y, f + 0.0 * h.x)
    new_dir = geo.mat3_apply(lens.rotation, e.normalized())
    alive = ok & dz_ok
    origin = Vec3.where(alive, point, rays.origin)
    direction = Vec3.where(alive, new_dir, rays.direction)
    record = geo.SurfaceHit(point=point, normal=geo.mat3_apply(lens.rotation, Vec3(0.0, 0.0, -1.0)),
                            direction_in=rays.direction, direction_out=direction,
                            path_length=path, alive=rays.alive & alive)
    return Rays(origin, direction, rays.wavelength_nm, rays.alive & alive), record


def trace_stages(rays: Rays, stages) -> tuple[Rays, list]:
    """Sequentially propagate through a mixed list of surfaces and lenses."""
    log = []
    current = rays
    for stage in stages:
        if isinstance(stage, ThinLens):
            current, record = thin_lens_refract(current, stage)
            log.append(record)
        else:
            current, sub = geo.trace_sequential(current, [stage])
            log.extend(sub)
    return current, log


# -- element compilation ---------------------------------------------------

def _tilted_faces(tilts, glasses, center: Vec3, mount: tuple, aperture: float):
    """Planar faces with given in-plane tilts, spaced so they never intersect
    inside the aperture, centered on ``center`` and rotated by ``mount``.

    ``tilts`` are y-axis rotations of each face normal before mounting;
    ``glasses`` is the list of media between faces (len(tilts) - 1 entries).
    """
    gaps = []
    for a, b in zip(tilts[:-1], tilts[1:]):
        gaps.append(aperture * dm.absolute(dm.tan(b) - dm.tan(a)) + _PRISM_GAP_MM)
    total = sum(gaps, 0.0)
    z_local = [total * (-0.5)]
    for g in gaps:
        z_local.append(z_local[-1] + g)

    media = [None, *glasses, None]
    surfaces = []
    for i, (tilt, z) in enumerate(zip(tilts, z_local)):
        rot = geo.mat3_mul(mount, geo.rot_y(tilt))
        offset = geo.mat3_apply(mount, Vec3(0.0 * z, 0.0 * z, z))
        surfaces.append(Surface(
            rotation=rot,
            translation=center + offset,
            aperture=aperture,
            n_before=media[i], n_after=media[i + 1],
        ))
    return surfaces


def single_prism_stages(apex_rad, glass, center: Vec3, mount_rot_y,
                        aperture: float, tilt_x_rad: float = 0.0):
    """Two faces of a single prism, apex toward +x, mounted at ``mount_rot_y``."""
    mount = geo.mat3_mul(geo.rot_y(mount_rot_y), geo.rot_x(tilt_x_rad))
    return _tilted_faces([apex_rad * 0.5, apex_rad * (-0.5)], [glass],
                         center, mount, aperture)


def amici_stages(params: PrismDesignParams, center: Vec3, aperture: float,
                 tilt_x_rad: float = 0.0):
    """Four faces of the symmetric double-Amici assembly.

    Face tilts (A2/2 - A1, A2/2, -A2/2, A1 - A2/2) build the mirror-symmetric
    crown/flint/crown stack; the assembly is rotated about its center so the
    axial chief ray meets the entrance face at incidence alpha_c.
    """
    a1 = params.a1_deg * DEG
    a2 = params.a2_deg * DEG
    alpha_c = params.alpha_c_deg * DEG
    t1 = a2 * 0.5 - a1
    tilts = [t1, a2 * 0.5, a2 * (-0.5), a1 - a2 * 0.5]
    rho = -1.0 * t1 - alpha_c
    mount = geo.mat3_mul(geo.rot_y(rho), geo.rot_x(tilt_x_rad))
    return _tilted_faces(tilts, [params.glass1, params.glass2, params.glass1],
                         center, mount, aperture)


def doublet_stages(prescription: dict, center_front_vertex: Vec3, axis_rot):
    """Three spherical surfaces of a cemented doublet along a rotated axis."""
    radii = [float(r) for r in prescription["radii_mm"]]
    th = [float(t) for t in prescription["thickness_mm"]]
    names = prescription["glasses"]
    ap = float(prescription["aperture_mm"])
    g1, g2 = glass_by_name(names[0]), glass_by_name(names[1])
    media = [(None, g1), (g1, g2), (g2, None)]
    z = [0.0, th[0], th[0] + th[1]]
    out = []
    for r, zz, (nb, na) in zip(radii, z, media):
        offset = geo.mat3_apply(axis_rot, Vec3(0.0, 0.0, zz))
        out.append(Surface(rotation=axis_rot, translation=center_front_vertex + offset,
                           aperture=ap, radius=r, n_before=nb, n_after=na))
    return out


# -- built system ----------------------------------------------------------

@dataclass
class ReadoutFrame:
    """Detector-local mm -> fractional pixel (row, col) affine map."""

    pitch_mm: float
    sign_x: float
    sign_y: float
    offset_col: float
    offset_row: float

    def to_rowcol(self, x_mm, y_mm):
        col = self.offset_col + self.sign_x * x_mm / self.pitch_mm
        row = self.offset_row + self.sign_y * y_mm / self.pitch_mm
        return row, col


@dataclass
class OpticalSystem:
    """A compiled imaging system ready for tracing and rendering."""

    name: str
    stages: list
    detector: Surface
    sensor_px: tuple[int, int]          # (ny, nx)
    pitch_um: float
    spectral_range: tuple[float, float]
    band_count: int
    numerical_aperture: float
    focal_mm: float
    scene_z: float
    aim_point: Vec3
    readout: ReadoutFrame | None = None
    spread_px: tuple[int, int] = (0, 0)  # (S_x, S_y) in pixels
    config: dict = field(default_factory=dict)

    # -- tracing -----------------------------------------------------------
    def trace(self, rays: Rays):
        rays, log = trace_stages(rays, self.stages)
        point, normal, path, ok = geo.intersect(rays, self.detector)
        alive = rays.alive & ok
        final = Rays(Vec3.where(alive, point, rays.origin), rays.direction,
                     rays.wavelength_nm, alive)
        log.append(geo.SurfaceHit(point=point, normal=normal,
                                  direction_in=rays.direction,
                                  direction_out=rays.direction,
                                  path_length=path, alive=alive))
        return final, log

    def detector_local(self, rays: Rays):
        """Detector-plane local (x, y) in mm for traced rays."""
        p = geo.mat3_transpose_apply(self.detector.rotation,
                                     rays.origin - self.detector.translation)
        return p.x, p.y

    def chief_rays(self, x_mm, y_mm, wavelength_nm) -> Rays:
        """Center-of-cone rays from scene points toward the objective center."""
        x = np.asarray(x_mm, dtype=float)
        y = np.asarray(y_mm, dtype=float)
        origin = Vec3(x, y, np.full_like(x, self.scene_z))
        direction = (self.aim_point - origin).normalized()
        return geo.make_rays(origin, direction, wavelength_nm)

    def trace_to_pixels(self, rays: Rays):
        """(row, col) fractional detector pixels + survivor mask."""
        final, _ = self.trace(rays)
        x, y = self.detector_local(final)
        row, col = self.readout.to_rowcol(dm.value_of(x), dm.value_of(y))
        return row, col, final.alive

    # -- geometry summaries ------------------------------------------------
    @property
    def scene_pitch_mm(self) -> float:
        return self.pitch_um / 1000.0

    def scene_extent_mm(self) -> float:
        return self.sensor_px[1] * self.scene_pitch_mm

    def acquisition_shape(self) -> tuple[int, int]:
        ny, nx = self.sensor_px
        return ny + self.spread_px[1], nx + self.spread_px[0]

    def wavelengths(self) -> np.ndarray:
        return band_centers(self.spectral_range, self.band_count)


def band_centers(spectral_range, count) -> np.ndarray:
    lo, hi = spectral_range
    return np.linspace(lo, hi, count)


def oversampled_wavelengths(spectral_range, count, factor) -> np.ndarray:
    """Sub-band center wavelengths: ``factor`` uniform sub-centers per band."""
    if factor < 1:
        raise ValueError("oversampling factor must be >= 1")
    centers = band_centers(spectral_range, count)
    width = (spectral_range[1] - spectral_range[0]) / (count - 1)
    offs = (np.arange(factor) + 0.5) / factor - 0.5
    return (centers[:, None] + width * offs[None, :]).reshape(-1)


# -- reference system construction ----------------------------------------

def load_system_config(name_or_path: str) -> dict:
    """Load a system config by reference name (shipped YAML) or file path."""
    if name_or_path in REFERENCE_NAMES:
        text = (resources.files("cassim") / "data" /
                f"{name_or_path.lower()}.yaml").read_text()
    else:
        with open(name_or_path, "r") as fh:
            text = fh.read()
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict) or "template" not in cfg:
        raise ValueError(f"not a system config: {name_or_path!r}")
    return cfg


def _amici_params_from_config(section: dict) -> PrismDesignParams:
    def _glass(entry):
        if isinstance(entry, str):
            return glass_by_name(entry)
        return RelaxedGlass(float(entry["nd"]), float(entry["vd"]))
    return PrismDesignParams(
        alpha_c_deg=float(section["alpha_c_deg"]),
        a1_deg=float(section["a1_deg"]),
        a2_deg=float(section["a2_deg"]),
        glass1=_glass(section["glass1"]),
        glass2=_glass(section["glass2"]),
    ).validate()


def build_amici_relay_stages(cfg: dict, params: PrismDesignParams,
                             tilt_x_rad: float = 0.0):
    """Stages of the relay layout: ideal lens at z=0, Amici after it.

    Returns (stages, lens_focal, prism_center_z).  Usable with dual-valued
    params, which is what the design losses differentiate through.
    """
    lay = cfg["layout"]
    f = float(lay["lens_focal_mm"])
    lens = ThinLens(rotation=geo.mat3_identity(), translation=Vec3(0.0, 0.0, 0.0),
                    aperture=float(lay["lens_aperture_mm"]), focal_mm=f)
    z_prism = float(lay["prism_center_after_lens_mm"])
    prism = amici_stages(params, Vec3(0.0, 0.0, z_prism),
                         float(lay["prism_aperture_mm"]), tilt_x_rad)
    return [lens, *prism], f, z_prism


def _hexapolar_unit_offsets(count: int) -> np.ndarray:
    """(count, 2) deterministic unit-disk samples: center + rings of 6k points.

    Ring k of n carries 6k equally spaced points at radius k/n; the last ring
    is truncated when ``count`` does not complete it.
    """
    n_rings, total = 0, 1
    while total < count:
        n_rings += 1
        total += 6 * n_rings
    pts = [(0.0, 0.0)]
    for k in range(1, n_rings + 1):
        r = k / n_rings
        for j in range(6 * k):
            phi = 2.0 * math.pi * j / (6 * k)
            pts.append((r * math.cos(phi), r * math.sin(phi)))
            if len(pts) == count:
                return np.asarray(pts)
    return np.asarray(pts[:count])


def cone_directions(chief: Vec3, sin_half_angle: float, count: int) -> Vec3:
    """Deterministic hexapolar fill of the aperture cone around ``chief``.

    Offsets sample the pupil disk; direction = chief + transverse offset,
    renormalized (small-angle exact enough at NA = 0.05 and re-normalized).
    """
    offs = _hexapolar_unit_offsets(count) * sin_half_angle
    c = chief.normalized()
    cx, cy, cz = (np.asarray(dm.value_of(c.x), dtype=float),
                  np.asarray(dm.value_of(c.y), dtype=float),
                  np.asarray(dm.value_of(c.z), dtype=float))
    # orthonormal transverse basis (u, v) for each chief direction
    ux, uy, uz = cz, np.zeros_like(cz), -cx
    un = np.sqrt(ux * ux + uz * uz)
    ux, uz = ux / un, uz / un
    vx = cy * uz - cz * uy
    vy = cz * ux - cx * uz
    vz = cx * uy - cy * ux
    a = offs[:, 0].reshape((-1,) + (1,) * np.ndim(cx))
    b = offs[:, 1].reshape((-1,) + (1,) * np.ndim(cx))
    d = Vec3(cx + a * ux + b * vx, cy + a * uy + b * vy, cz + a * uz + b * vz)
    return d.normalized()


def _best_focus_along(stages, axis_rot, start_origin: Vec3, aim: Vec3,
                      wavelength_nm: float, na: float) -> Vec3:
    """Least-squares crossing of a small traced cone: detector center point."""
    chief = (aim - start_origin).normalized()
    dirs = cone_directions(chief, na, 19)
    n = 19
    origin = Vec3(np.full(n, float(dm.value_of(start_origin.x))),
                  np.full(n, float(dm.value_of(start_origin.y))),
                  np.full(n, float(dm.value_of(start_origin.z))))
    rays = geo.make_rays(origin, dirs, wavelength_nm)
    out, _ = trace_stages(rays, stages)
    if not np.all(out.alive):
        raise RuntimeError("focus probe rays died while placing the detector")
    # work in the rotated frame: z' along the intended detector normal
    o = geo.mat3_transpose_apply(axis_rot, out.origin)
    d = geo.mat3_transpose_apply(axis_rot, out.direction)
    ox, oy, oz = (dm.value_of(o.x), dm.value_of(o.y), dm.value_of(o.z))
    dx, dy, dz = (dm.value_of(d.x), dm.value_of(d.y), dm.value_of(d.z))
    # param by z': transverse position at plane z' = t is o_xy + (t - oz)/dz * d_xy
    u, v = dx / dz, dy / dz
    x0, y0 = ox - oz * u, oy - oz * v
    du, dv = u - u.mean(), v - v.mean()
    dx0, dy0 = x0 - x0.mean(), y0 - y0.mean()
    denom = np.sum(du * du + dv * dv)
    t = -np.sum(dx0 * du + dy0 * dv) / denom if denom > 0 else float(oz.mean())
    cx, cy = x0.mean() + t * u.mean(), y0.mean() + t * v.mean()
    return geo.mat3_apply(axis_rot, Vec3(float(cx), float(cy), float(t)))


def _solve_readout(system: OpticalSystem) -> tuple[ReadoutFrame, tuple[int, int]]:
    """Fix the readout frame and canvas margins from probe traces.

    Probes: the center scene point at the spectral extremes and a diagonal
    offset point.  The frame puts the scene upright, dispersion toward +x
    (growing column), and the 450 nm center image at ((H-1)/2, (W-1)/2).
    """
    lo, hi = system.spectral_range
    pitch_mm = system.scene_pitch_mm

    def probe(x, y, wl):
        final, _ = system.trace(system.chief_rays([x], [y], wl))
        if not final.alive[0]:
            raise RuntimeError(f"readout probe died at ({x}, {y}, {wl} nm)")
        xl, yl = system.detector_local(final)
        return float(dm.value_of(xl)[0]), float(dm.value_of(yl)[0])

    c_lo = probe(0.0, 0.0, lo)
    c_hi = probe(0.0, 0.0, hi)
    off = probe(8.0 * pitch_mm, 8.0 * pitch_mm, lo)

    sign_x = 1.0 if (c_hi[0] - c_lo[0]) >= 0 else -1.0
    # upright scene: growing scene y must grow the row index
    sign_y = 1.0 if (off[1] - c_lo[1]) * 1.0 >= 0 else -1.0
    # column flip must also keep the scene upright; when the dispersion sign
    # and the image parity disagree the scene is stored mirrored in x, which
    # the mapping table captures — dispersion direction wins, per convention.
    ny, nx = system.sensor_px
    frame = ReadoutFrame(pitch_mm=pitch_mm, sign_x=sign_x, sign_y=sign_y,
                         offset_col=0.0, offset_row=0.0)
    row0, col0 = frame.to_rowcol(c_lo[0], c_lo[1])
    frame.offset_col = (nx - 1) / 2.0 - col0
    frame.offset_row = (ny - 1) / 2.0 - row0

    # spectral spread in pixels from the center-field probes
    row_hi, col_hi = frame.to_rowcol(c_hi[0], c_hi[1])
    s_x = int(round(col_hi - (nx - 1) / 2.0))
    s_y = int(math.ceil(abs(row_hi - (ny - 1) / 2.0)))
    return frame, (s_x, s_y)


def build_reference_system(name: str, amici: PrismDesignParams | None = None,
                           config: dict | None = None) -> OpticalSystem:
    """Build one of the reference systems (SP, AP, mSP, mAP).

    ``amici`` overrides the shipped prism design for the relay layouts;
    ``config`` overrides the shipped YAML entirely (must carry the same
    template).  Unknown names raise KeyError.
    """
    if config is None:
        if name not in REFERENCE_NAMES:
            raise KeyError(f"unknown reference system {name!r}")
        cfg = load_system_config(name)
    else:
        cfg = config
    template = cfg["template"]
    tilt = float(cfg.get("dispersive_tilt_x_deg", 0.0)) * DEG
    if template == "amici_relay":
        system = _build_amici_relay(name, cfg, amici, tilt)
    elif template == "single_prism":
        system = _build_single_prism(name, cfg, tilt)
    else:
        raise ValueError(f"unknown system template {template!r}")
    frame, spread = _solve_readout(system)
    system.readout = frame
    system.spread_px = spread
    return system


def _sensor_spectral(cfg):
    sens = cfg["sensor"]
    spec = cfg["spectral"]
    return ((int(sens["pixels_y"]), int(sens["pixels_x"])), float(sens["pitch_um"]),
            (float(spec["min_nm"]), float(spec["max_nm"])), int(spec["bands"]))


def _build_amici_relay(name, cfg, amici, tilt_x) -> OpticalSystem:
    (sensor_px, pitch_um, spectral, bands) = _sensor_spectral(cfg)
    params = amici if amici is not None else _amici_params_from_config(cfg["amici"])
    stages, f, _ = build_amici_relay_stages(cfg, params, tilt_x)
    lay = cfg["layout"]
    scene_z = -float(lay["scene_distance_mm"])

    det_cfg = lay.get("detector", "auto")
    axis_rot = geo.mat3_identity()
    if det_cfg == "auto":
        # place the detector at best focus for the central wavelength, but
        # never tilt it: residual pointing error stays a readout offset
        aligned = stages if tilt_x == 0.0 else build_amici_relay_stages(cfg, params, 0.0)[0]
        center = _best_focus_along(aligned, axis_rot, Vec3(0.0, 0.0, scene_z),
                                   Vec3(0.0, 0.0, 0.0), 520.0,
                                   float(cfg["numerical_aperture"]))
        center = Vec3(0.0, 0.0, float(dm.value_of(center.z)))
    else:
        center = Vec3(0.0, 0.0, float(det_cfg))
    detector = Surface(rotation=axis_rot, translation=center, aperture=1e4)
    return OpticalSystem(
        name=name, stages=stages, detector=detector,
        sensor_px=sensor_px, pitch_um=pitch_um, spectral_range=spectral,
        band_count=bands, numerical_aperture=float(cfg["numerical_aperture"]),
        focal_mm=float(cfg["focal_mm"]), scene_z=scene_z,
        aim_point=Vec3(0.0, 0.0, 0.0), config=cfg,
    )


def _build_single_prism(name, cfg, tilt_x) -> OpticalSystem:
    (sensor_px, pitch_um, spectral, bands) = _sensor_spectral(cfg)
    lay = cfg["layout"]
    f_coll = float(lay["collimator_focal_mm"])
    scene_z = -f_coll
    collimator = ThinLens(rotation=geo.mat3_identity(),
                          translation=Vec3(0.0, 0.0, 0.0),
                          aperture=float(lay["collimator_aperture_mm"]),
                          focal_mm=f_coll)

    apex = float(lay["prism_apex_deg"]) * DEG
    glass = glass_by_name(lay["prism_glass"])
    align_wl = float(lay["prism_align_wavelength_nm"])
    n_align = float(refractive_index(glass, align_wl))
    # minimum-deviation incidence for the alignment wavelength
    i0 = math.asin(n_align * math.sin(apex / 2.0))
    mount = i0 - apex / 2.0  # rotate prism so the +z axial ray arrives at i0
    z_prism = float(lay["prism_center_after_collimator_mm"])
    p_center = Vec3(0.0, 0.0, z_prism)
    p_aperture = float(lay["prism_aperture_mm"])

    def prism_at(tilt):
        return single_prism_stages(apex, glass, p_center, mount, p_aperture, tilt)

    # deviated axis measured from the aligned prism at the alignment wavelength
    axial = geo.make_rays(Vec3(np.zeros(1), np.zeros(1), np.full(1, z_prism - 50.0)),
                          Vec3(np.zeros(1), np.zeros(1), np.ones(1)), align_wl)
    bent, _ = geo.trace_sequential(axial, prism_at(0.0))
    if not bent.alive[0]:
        raise RuntimeError("alignment ray died inside the prism")
    w = Vec3(float(dm.value_of(bent.direction.x)[0]),
             float(dm.value_of(bent.direction.y)[0]),
             float(dm.value_of(bent.direction.z)[0]))
    theta_dev = math.atan2(w.x, w.z)
    axis_rot = geo.rot_y(theta_dev)
    exit_point = Vec3(float(dm.value_of(bent.origin.x)[0]),
                      float(dm.value_of(bent.origin.y)[0]),
                      float(dm.value_of(bent.origin.z)[0]))

    d_doublet = float(lay["doublet_after_prism_mm"])
    front_vertex = exit_point + Vec3(w.x * d_doublet, w.y * d_doublet, w.z * d_doublet)
    doublet = doublet_stages(lay["doublet"], front_vertex, axis_rot)

    stages = [collimator, *prism_at(tilt_x), *doublet]
    det_cfg = lay.get("detector", "auto")
    if det_cfg == "auto":
        aligned = [collimator, *prism_at(0.0), *doublet]
        center = _best_focus_along(aligned, axis_rot, Vec3(0.0, 0.0, scene_z),
                                   Vec3(0.0, 0.0, 0.0), align_wl,
                                   float(cfg["numerical_aperture"]))
    else:
        center = front_vertex + Vec3(w.x * float(det_cfg), w.y * float(det_cfg),
                                     w.z * float(det_cfg))
    detector = Surface(rotation=axis_rot, translation=center, aperture=1e4)
    return OpticalSystem(
        name=name, stages=stages, detector=detector,
        sensor_px=sensor_px, pitch_um=pitch_um, spectral_range=spectral,
        band_count=bands, numerical_aperture=float(cfg["numerical_aperture"]),
        focal_mm=float(cfg["focal_mm"]), scene_z=scene_z,
        aim_point=Vec3(0.0, 0.0, 0.0), config=cfg,
    )


def minimum_deviation_error(apex_deg: float = 60.0, glass_name: str = "N-BK7",
                            wavelength_nm: float = 520.0) -> float:
    """Self-check: traced vs closed-form prism deviation, in radians.

    A ray entering a prism of apex ``A`` at the minimum-deviation incidence
    ``asin(n sin(A/2))`` leaves deviated by ``2 asin(n sin(A/2)) - A``.
    Tracing the same mount must reproduce that angle; returns the absolute
    difference.
    """
    apex = apex_deg * DEG
    glass = glass_by_name(glass_name)
    n = float(dm.value_of(refractive_index(glass, wavelength_nm)))
    i0 = math.asin(n * math.sin(apex / 2.0))
    stages = single_prism_stages(apex, glass, Vec3(0.0, 0.0, 50.0),
                                 i0 - apex / 2.0, 25.0)
    rays = geo.make_rays(
        Vec3(np.zeros(1), np.zeros(1), np.zeros(1)),
        Vec3(np.zeros(1), np.zeros(1), np.ones(1)), wavelength_nm)
    bent, _ = geo.trace_sequential(rays, stages)
    if not bent.alive[0]:
        raise RuntimeError("minimum-deviation probe ray died in the prism")
    wx = float(dm.value_of(bent.direction.x)[0])
    wz = float(dm.value_of(bent.direction.z)[0])
    closed_form = 2.0 * i0 - apex
    return abs(abs(math.atan2(wx, wz)) - closed_form)


def spectral_spread_curve(system: OpticalSystem, field_point=(0.0, 0.0),
                          wavelengths=None):
    """Chief-ray detector displacement vs the shortest wavelength.

    Returns a list of (wavelength_nm, displacement_um) pairs for the given
    scene field point; displacement is the readout-x (dispersion-axis)
    motion relative to the first wavelength.
    """
    if wavelengths is None:
        wavelengths = system.wavelengths()
    xs, ys = [], []
    for wl in wavelengths:
        rays = system.chief_rays([field_point[0]], [field_point[1]], float(wl))
        final, _ = system.trace(rays)
        if not final.alive[0]:
            raise RuntimeError(f"chief ray died at wavelength {wl} nm")
        xl, yl = system.detector_local(final)
        xs.append(float(dm.value_of(xl)[0]))
        ys.append(float(dm.value_of(yl)[0]))
    sign = system.readout.sign_x if system.readout else 1.0
    base = xs[0]
    return [(float(wl), sign * (x - base) * 1000.0)
            for wl, x in zip(wavelengths, xs)]
