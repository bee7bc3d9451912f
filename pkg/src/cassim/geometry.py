"""Sequential ray-tracing primitives: rays, surfaces, refraction.

Everything is vectorized over a bundle of rays and written against the
dispatch functions in :mod:`cassim.dual`, so the same code traces plain
numpy bundles (fast Monte-Carlo path) and dual-number bundles (design
optimization path).

Conventions:
  - lengths in mm, wavelengths in nm;
  - a surface pose maps local to global coordinates: ``g = R @ l + t``;
  - plane surfaces live at local z = 0; spheres have their vertex at the
    local origin and center at local (0, 0, radius) (signed radius);
  - intersection normals are returned oriented against the incoming ray;
  - total internal reflection kills the ray (no reflected path);
  - dead rays are never advanced by subsequent surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dual as dm
from .glass import refractive_index

__all__ = [
    "TAU_INT", "Vec3", "Rays", "Surface", "SurfaceHit",
    "mat3_identity", "rot_x", "rot_y", "rot_z", "mat3_mul", "mat3_apply",
    "mat3_transpose_apply", "make_rays", "intersect", "refract",
    "trace_sequential",
]

# Minimum path length (mm) for a valid intersection; rejects re-hitting the
# surface a ray was just emitted from.
TAU_INT = 1e-9

# Safe placeholder denominator for masked-out lanes.
_EPS_DIR = 1e-15


class Vec3:
    """Triple of scalars/arrays/duals with elementwise vector algebra."""

    __slots__ = ("x", "y", "z")

    def __init__(self, x, y, z):
        self.x, self.y, self.z = x, y, z

    def __add__(self, o): return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    def __sub__(self, o): return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    def __neg__(self): return Vec3(-self.x, -self.y, -self.z)

    def scale(self, s):
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, o):
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o):
        return Vec3(self.y * o.z - self.z * o.y,
                    self.z * o.x - self.x * o.z,
                    self.x * o.y - self.y * o.x)

    def norm(self):
        return dm.sqrt(self.dot(self))

    def normalized(self):
        return self.scale(1.0 / self.norm())

    def values(self) -> "Vec3":
        return Vec3(dm.value_of(self.x), dm.value_of(self.y), dm.value_of(self.z))

    def as_array(self) -> np.ndarray:
        """Stack plain values into an array of shape (..., 3)."""
        v = self.values()
        return np.stack(np.broadcast_arrays(v.x, v.y, v.z), axis=-1)

    @staticmethod
    def where(cond, a: "Vec3", b: "Vec3") -> "Vec3":
        return Vec3(dm.where(cond, a.x, b.x),
                    dm.where(cond, a.y, b.y),
                    dm.where(cond, a.z, b.z))

    @staticmethod
    def full(x, y, z, n: int) -> "Vec3":
        return Vec3(np.full(n, float(x)), np.full(n, float(y)), np.full(n, float(z)))

    def __repr__(self):
        return f"Vec3({self.x!r}, {self.y!r}, {self.z!r})"


# -- 3x3 rotations as nested tuples (entries may be duals) -----------------

def mat3_identity():
    return ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def rot_x(angle_rad):
    c, s = dm.cos(angle_rad), dm.sin(angle_rad)
    return ((1.0, 0.0, 0.0), (0.0, c, -1.0 * s), (0.0, s, c))


def rot_y(angle_rad):
    c, s = dm.cos(angle_rad), dm.sin(angle_rad)
    return ((c, 0.0, s), (0.0, 1.0, 0.0), (-1.0 * s, 0.0, c))


def rot_z(angle_rad):
    c, s = dm.cos(angle_rad), dm.sin(angle_rad)
    return ((c, -1.0 * s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


def mat3_mul(a, b):
    return tuple(tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
                 for i in range(3))


def mat3_apply(m, v: Vec3) -> Vec3:
    return Vec3(m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z)


def mat3_transpose_apply(m, v: Vec3) -> Vec3:
    return Vec3(m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
                m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
                m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z)


# -- rays ------------------------------------------------------------------

@dataclass
class Rays:
    """A bundle of rays: origins, unit directions, wavelengths, alive mask."""

    origin: Vec3
    direction: Vec3
    wavelength_nm: object  # scalar or array (nm)
    alive: np.ndarray

    @property
    def count(self) -> int:
        return int(np.asarray(self.alive).size)


def make_rays(origin: Vec3, direction: Vec3, wavelength_nm) -> Rays:
    direction = direction.normalized()
    shape = np.broadcast_shapes(np.shape(dm.value_of(direction.x)),
                                np.shape(dm.value_of(origin.x)))
    return Rays(origin, direction, wavelength_nm, np.ones(shape, dtype=bool))


# -- surfaces --------------------------------------------------------------

@dataclass
class Surface:
    """Refracting plane or sphere with a rigid pose and circular aperture.

    ``radius`` is None for planes, otherwise the signed sphere radius.
    ``n_before``/``n_after`` are glass models (None = vacuum) on the incoming
    and outgoing sides along the propagation order.
    """

    rotation: tuple
    translation: Vec3
    aperture: float
    radius: object = None
    n_before: object = None
    n_after: object = None

    def reversed(self) -> "Surface":
        """Same geometry, media swapped — for reverse traces."""
        return replace(self, n_before=self.n_after, n_after=self.n_before)


@dataclass
class SurfaceHit:
    """Per-surface trace record."""

    point: Vec3          # global hit coordinates
    normal: Vec3         # unit, oriented against the incoming ray
    direction_in: Vec3
    direction_out: Vec3
    path_length: object
    alive: np.ndarray    # rays still alive after this surface


def _safe_div(num, den):
    ok = np.abs(dm.value_of(den)) > _EPS_DIR
    den_safe = dm.where(ok, den, 1.0)
    return num / den_safe, ok


def intersect(rays: Rays, surface: Surface):
    """Intersect a bundle with one surface.

    Returns ``(point, normal, path_length, ok)`` where ``ok`` flags rays with
    a valid hit (path length > TAU_INT, inside the aperture, previously
    alive).  ``point`` is global; ``normal`` is unit and oriented against the
    incoming direction.
    """
    p = mat3_transpose_apply(surface.rotation, rays.origin - surface.translation)
    d = mat3_transpose_apply(surface.rotation, rays.direction)

    if surface.radius is None:
        s, ok = _safe_div(-1.0 * p.z, d.z)
        ok = ok & (dm.value_of(s) > TAU_INT)
        hit_l = p + d.scale(s)
        nz = -np.sign(dm.value_of(d.z))
        n_l = Vec3(np.zeros_like(nz), np.zeros_like(nz), nz)
    else:
        radius = surface.radius
        oc = Vec3(p.x, p.y, p.z - radius)
        b = 2.0 * d.dot(oc)
        c = oc.dot(oc) - radius * radius
        disc = b * b - 4.0 * c
        has = dm.value_of(disc) >= 0.0
        root = dm.sqrt(dm.maximum(disc, 1e-30))
        s1 = (-1.0 * b - root) * 0.5
        s2 = (-1.0 * b + root) * 0.5
        use1 = dm.value_of(s1) > TAU_INT
        s = dm.where(use1, s1, s2)
        ok = has & (dm.value_of(s) > TAU_INT)
        hit_l = p + d.scale(s)
        n_l = Vec3(hit_l.x, hit_l.y, hit_l.z - radius).scale(1.0 / radius)
        flip = dm.value_of(n_l.dot(d)) > 0.0
        n_l = Vec3.where(flip, -n_l, n_l)

    r2 = dm.value_of(hit_l.x) ** 2 + dm.value_of(hit_l.y) ** 2
    ok = ok & (r2 <= surface.aperture**2) & rays.alive

    point = mat3_apply(surface.rotation, hit_l) + surface.translation
    normal = mat3_apply(surface.rotation, n_l)
    return point, normal, s, ok


def refract(direction: Vec3, normal: Vec3, n1, n2):
    """Vector Snell refraction.

    ``normal`` must be unit and oriented against ``direction``.  Returns the
    refracted unit direction and a survivor mask (False = total internal
    reflection).
    """
    mu = n1 / n2
    c1 = -1.0 * direction.dot(normal)
    rad = 1.0 - mu * mu * (1.0 - c1 * c1)
    ok = dm.value_of(rad) >= 0.0
    c2 = dm.sqrt(dm.maximum(rad, 1e-12))
    out = direction.scale(mu) + normal.scale(mu * c1 - c2)
    return out.normalized(), ok


def trace_sequential(rays: Rays, surfaces) -> tuple[Rays, list[SurfaceHit]]:
    """Trace a bundle through an ordered surface list.

    Each surface applies intersect + refract; a miss or TIR kills the ray.
    Dead rays keep their last state.  The returned ray origin is the last hit
    point of each surviving ray.
    """
    log: list[SurfaceHit] = []
    current = rays
    for surface in surfaces:
        point, normal, path, ok = intersect(current, surface)
        if surface.n_before is surface.n_after:
            new_dir, ok_r = current.direction, np.ones_like(ok)
        else:
            n1 = refractive_index(surface.n_before, current.wavelength_nm)
            n2 = refractive_index(surface.n_after, current.wavelength_nm)
            new_dir, ok_r = refract(current.direction, normal, n1, n2)
        alive = ok & ok_r
        origin = Vec3.where(alive, point, current.origin)
        direction = Vec3.where(alive, new_dir, current.direction)
        log.append(SurfaceHit(point=point, normal=normal,
                              direction_in=current.direction,
                              direction_out=direction,
                              path_length=path,
                              alive=current.alive & alive))
        current = Rays(origin, direction, current.wavelength_nm,
                       current.alive & alive)
    return current, log
