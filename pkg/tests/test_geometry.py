"""Ray-surface intersection, Snell refraction, and sequential tracing."""

import math

import numpy as np
import pytest

import cassim.dual as dm
import cassim.geometry as geo
import cassim.glass as gl
from cassim.geometry import Rays, Surface, Vec3


def _axial_bundle(n=1, z0=-10.0, wl=520.0):
    zeros = np.zeros(n)
    return geo.make_rays(Vec3(zeros, zeros, np.full(n, z0)),
                         Vec3(zeros, zeros, np.ones(n)), wl)


def _random_unit(rng, n, min_z=0.2):
    v = rng.normal(size=(3, n))
    v[2] = np.abs(v[2]) + min_z
    v /= np.linalg.norm(v, axis=0)
    return Vec3(v[0], v[1], v[2])


def test_vec3_algebra():
    a = Vec3(1.0, 2.0, 3.0)
    b = Vec3(-2.0, 0.5, 1.0)
    assert a.dot(b) == pytest.approx(-2 + 1 + 3)
    c = a.cross(b)
    assert (c.x, c.y, c.z) == pytest.approx((2 - 1.5, -6 - 1, 0.5 + 4))
    assert a.norm() == pytest.approx(math.sqrt(14))
    n = a.normalized()
    assert n.norm() == pytest.approx(1.0)


def test_rotations_orthonormal():
    for rot in (geo.rot_x(0.3), geo.rot_y(-1.1), geo.rot_z(2.0)):
        m = np.array(rot)
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-15)
        assert np.linalg.det(m) == pytest.approx(1.0)
    a, b = geo.rot_y(0.4), geo.rot_x(0.7)
    ab = np.array(geo.mat3_mul(a, b))
    assert np.allclose(ab, np.array(a) @ np.array(b), atol=1e-15)


def test_mat3_apply_transpose_inverse():
    rot = geo.mat3_mul(geo.rot_y(0.5), geo.rot_x(-0.2))
    v = Vec3(0.3, -1.2, 2.0)
    back = geo.mat3_transpose_apply(rot, geo.mat3_apply(rot, v))
    assert (back.x, back.y, back.z) == pytest.approx((0.3, -1.2, 2.0))


def test_plane_intersection_position_and_normal():
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 5.0), aperture=10.0)
    rays = geo.make_rays(Vec3(np.array([1.0]), np.array([2.0]),
                              np.array([0.0])),
                         Vec3(np.array([0.0]), np.array([0.0]),
                              np.array([1.0])), 520.0)
    point, normal, path, ok = geo.intersect(rays, surf)
    assert ok[0]
    assert dm.value_of(path)[0] == pytest.approx(5.0)
    assert (dm.value_of(point.x)[0], dm.value_of(point.y)[0],
            dm.value_of(point.z)[0]) == pytest.approx((1.0, 2.0, 5.0))
    # normal oriented against the incoming +z ray
    assert dm.value_of(normal.z)[0] == pytest.approx(-1.0)


def test_tilted_plane_path_length():
    tilt = 0.3
    surf = Surface(rotation=geo.rot_y(tilt),
                   translation=Vec3(0.0, 0.0, 5.0), aperture=50.0)
    rays = _axial_bundle()
    point, _, path, ok = geo.intersect(rays, surf)
    # plane through (0,0,5) with normal (sin t, 0, cos t):
    # axial ray hits it at z = 5 exactly on the axis
    assert ok[0]
    assert dm.value_of(point.z)[0] == pytest.approx(5.0, abs=1e-12)
    assert dm.value_of(path)[0] == pytest.approx(15.0, abs=1e-12)


def test_sphere_intersection_matches_sag():
    radius = 100.0
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 20.0), aperture=30.0,
                   radius=radius)
    h = 7.0
    rays = geo.make_rays(Vec3(np.array([0.0]), np.array([h]),
                              np.array([0.0])),
                         Vec3(np.array([0.0]), np.array([0.0]),
                              np.array([1.0])), 520.0)
    point, normal, _, ok = geo.intersect(rays, surf)
    sag = radius - math.sqrt(radius * radius - h * h)
    assert ok[0]
    assert dm.value_of(point.z)[0] == pytest.approx(20.0 + sag, abs=1e-12)
    # normal is unit length and oriented against the incoming +z ray
    ny = dm.value_of(normal.y)[0]
    nz = dm.value_of(normal.z)[0]
    assert ny == pytest.approx(h / radius, abs=1e-12)
    assert nz == pytest.approx(-math.sqrt(1 - (h / radius) ** 2), abs=1e-12)


def test_concave_sphere_negative_radius():
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 20.0), aperture=30.0,
                   radius=-100.0)
    h = 7.0
    rays = geo.make_rays(Vec3(np.array([0.0]), np.array([h]),
                              np.array([0.0])),
                         Vec3(np.array([0.0]), np.array([0.0]),
                              np.array([1.0])), 520.0)
    point, _, _, ok = geo.intersect(rays, surf)
    sag = -(100.0 - math.sqrt(100.0 ** 2 - h * h))
    assert ok[0]
    assert dm.value_of(point.z)[0] == pytest.approx(20.0 + sag, abs=1e-12)


def test_aperture_kills_outside_rays():
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 5.0), aperture=1.0)
    rays = geo.make_rays(Vec3(np.array([0.5, 1.5]), np.zeros(2),
                              np.zeros(2)),
                         Vec3(np.zeros(2), np.zeros(2), np.ones(2)), 520.0)
    _, _, _, ok = geo.intersect(rays, surf)
    assert list(ok) == [True, False]


def test_minimum_path_rejects_surface_of_origin():
    # a ray emitted exactly on the plane must not re-hit it
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 0.0), aperture=10.0)
    rays = _axial_bundle(z0=0.0)
    _, _, _, ok = geo.intersect(rays, surf)
    assert not ok[0]


def test_backward_surface_rejected():
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, -5.0), aperture=10.0)
    rays = _axial_bundle(z0=0.0)
    _, _, _, ok = geo.intersect(rays, surf)
    assert not ok[0]


def test_snell_law_magnitude():
    n1, n2 = 1.0, 1.7
    theta1 = 0.6
    d = Vec3(math.sin(theta1), 0.0, math.cos(theta1))
    n = Vec3(0.0, 0.0, -1.0)
    out, ok = geo.refract(d, n, n1, n2)
    assert ok
    sin2 = float(dm.value_of(out.x))
    assert n1 * math.sin(theta1) == pytest.approx(n2 * sin2, abs=1e-15)
    assert float(dm.value_of(out.norm())) == pytest.approx(1.0, abs=1e-15)


def test_normal_incidence_passes_straight():
    d = Vec3(0.0, 0.0, 1.0)
    n = Vec3(0.0, 0.0, -1.0)
    out, ok = geo.refract(d, n, 1.0, 1.9)
    assert ok
    assert float(dm.value_of(out.z)) == pytest.approx(1.0, abs=1e-15)


def test_total_internal_reflection_kills():
    n1, n2 = 1.7, 1.0
    critical = math.asin(n2 / n1)
    for theta, expect in ((critical - 1e-3, True), (critical + 1e-3, False)):
        d = Vec3(math.sin(theta), 0.0, math.cos(theta))
        out, ok = geo.refract(d, Vec3(0.0, 0.0, -1.0), n1, n2)
        assert bool(np.all(ok)) is expect


def test_refraction_planarity_bulk(rng):
    # refracted direction stays in the plane of incidence: 1e4 random rays
    n = 10_000
    d = _random_unit(rng, n)
    normal = Vec3(np.zeros(n), np.zeros(n), -np.ones(n))
    out, ok = geo.refract(d, normal, 1.0, 1.66)
    assert np.all(ok)
    plane_normal = d.cross(normal)
    off_plane = np.abs(dm.value_of(out.dot(plane_normal)))
    assert float(off_plane.max()) < 1e-14


def test_refraction_reversibility_bulk(rng):
    # tracing the refracted ray backwards through the same interface
    # recovers the original direction: 1e4 random rays
    n = 10_000
    d = _random_unit(rng, n)
    normal = Vec3(np.zeros(n), np.zeros(n), -np.ones(n))
    out, ok = geo.refract(d, normal, 1.0, 1.66)
    back, ok2 = geo.refract(out.scale(-1.0), normal.scale(-1.0), 1.66, 1.0)
    assert np.all(ok & ok2)
    err = np.maximum.reduce([
        np.abs(dm.value_of(back.x + d.x)),
        np.abs(dm.value_of(back.y + d.y)),
        np.abs(dm.value_of(back.z + d.z)),
    ])
    assert float(err.max()) < 1e-12


def test_trace_sequential_flat_block_offsets_ray():
    # a tilted glass slab displaces but does not deviate a ray
    glass = gl.glass_by_name("N-BK7")
    rot = geo.rot_y(0.4)
    s1 = Surface(rotation=rot, translation=Vec3(0.0, 0.0, 10.0),
                 aperture=50.0, n_before=None, n_after=glass)
    s2 = Surface(rotation=rot, translation=Vec3(0.0, 0.0, 15.0),
                 aperture=50.0, n_before=glass, n_after=None)
    final, log = geo.trace_sequential(_axial_bundle(), [s1, s2])
    assert final.alive[0]
    d = final.direction
    assert float(dm.value_of(d.z)[0]) == pytest.approx(1.0, abs=1e-12)
    assert abs(float(dm.value_of(d.x)[0])) < 1e-12
    # lateral displacement is nonzero for a tilted slab
    assert abs(float(dm.value_of(final.origin.x)[0])) > 0.1


def test_trace_dead_rays_keep_state():
    surf1 = Surface(rotation=geo.mat3_identity(),
                    translation=Vec3(0.0, 0.0, 5.0), aperture=0.5)
    surf2 = Surface(rotation=geo.mat3_identity(),
                    translation=Vec3(0.0, 0.0, 8.0), aperture=50.0)
    rays = geo.make_rays(Vec3(np.array([0.0, 2.0]), np.zeros(2),
                              np.zeros(2)),
                         Vec3(np.zeros(2), np.zeros(2), np.ones(2)), 520.0)
    final, _ = geo.trace_sequential(rays, [surf1, surf2])
    assert list(final.alive) == [True, False]
    # the dead ray's origin never advanced past its starting point
    assert dm.value_of(final.origin.z)[1] == pytest.approx(0.0)
    assert dm.value_of(final.origin.z)[0] == pytest.approx(8.0)


def test_no_media_change_passes_direction():
    surf = Surface(rotation=geo.rot_y(0.2),
                   translation=Vec3(0.0, 0.0, 5.0), aperture=50.0,
                   n_before=None, n_after=None)
    final, _ = geo.trace_sequential(_axial_bundle(), [surf])
    assert final.alive[0]
    assert float(dm.value_of(final.direction.z)[0]) == pytest.approx(1.0)


def test_surface_reversed_swaps_media():
    glass = gl.glass_by_name("F2")
    surf = Surface(rotation=geo.mat3_identity(),
                   translation=Vec3(0.0, 0.0, 5.0), aperture=10.0,
                   n_before=None, n_after=glass)
    rev = surf.reversed()
    assert rev.n_before is glass and rev.n_after is None
    assert rev.translation is surf.translation


def test_make_rays_normalizes_direction():
    rays = geo.make_rays(Vec3(np.zeros(1), np.zeros(1), np.zeros(1)),
                         Vec3(np.zeros(1), np.zeros(1), np.full(1, 7.0)),
                         520.0)
    assert float(dm.value_of(rays.direction.z)[0]) == pytest.approx(1.0)
    assert rays.count == 1


def test_intersection_differentiable_through_tilt():
    # hit x-position as a function of plane tilt matches finite differences
    def hit_x(tilt):
        surf = Surface(rotation=geo.rot_y(tilt),
                       translation=Vec3(0.0, 0.0, 5.0), aperture=50.0)
        rays = geo.make_rays(
            Vec3(np.array([1.0]), np.zeros(1), np.zeros(1)),
            Vec3(np.zeros(1), np.zeros(1), np.ones(1)), 520.0)
        point, _, _, _ = geo.intersect(rays, surf)
        return dm.dsum(point.z)

    assert dm.gradient_check(hit_x, [0.3]) < 1e-7
