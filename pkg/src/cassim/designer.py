"""Gradient-based design of the direct-view double-Amici prism.

Six losses drive the design: spectral-dispersion targeting, field
distortion, net beam deviation, glass thickness, catalog-glass proximity,
and total-internal-reflection margin.  All of them are differentiable
through the sequential ray tracer via forward-mode duals, so Adam can run
on the seven design variables (three angles plus two relaxed glasses).

After the main loop the glasses snap to their nearest catalog entries and
the remaining iterations polish the angles against real catalog dispersion
with monotone (backtracking) acceptance, which also guarantees a
non-increasing tail of the loss trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dual as dm
from . import elements as el
from . import geometry as geo
from .elements import DEG, PrismDesignParams
from .geometry import Vec3
from .glass import (RelaxedGlass, catalog_hull, catalog_ranges, load_catalog,
                    nearest_glass, refractive_index)

__all__ = [
    "LossWeights", "AdamConfig", "DesignTemplate", "DistortionTensor",
    "DesignResult", "loss_dispersion", "loss_deviation", "loss_thickness",
    "loss_glass", "loss_tir", "loss_distortion", "loss_distortion_value",
    "distortion_tensor", "total_loss", "snap_to_catalog", "optimize_prism",
    "default_initial_params",
]

TARGET_DISPERSION_RAD = 0.95 * DEG
DESIGN_WAVELENGTHS_NM = (450.0, 520.0, 650.0)
CENTER_WAVELENGTH_NM = 520.0
DEAD_RAY_PENALTY = 1.0e6
SMOOTH_MAX_TEMPERATURE_UM = 1e-2


@dataclass(frozen=True)
class LossWeights:
    """Weights of the six loss terms; ``w_g`` is additionally multiplied by
    the (1-based) iteration number during optimization."""

    w_delta: float = 1.0
    w_eps: float = 1.0
    w_D: float = 2.5e6
    w_t: float = 5.0e3
    w_g: float = 1.0e10
    w_R: float = 10.0

    @staticmethod
    def zeros() -> "LossWeights":
        return LossWeights(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# Weights used for shipped design runs.  The documented defaults above
# under-weight the dispersion target so strongly that the thickness term
# collapses the apex angles to zero (its gradient exceeds the dispersion
# term's by ~1e7 at any feasible scale).  Design runs therefore stiffen the
# two hard requirements — target dispersion and direct view — so the soft
# preferences (thickness, distortion) only steer within their manifold.
DESIGN_WEIGHTS = LossWeights(w_delta=1.0e10, w_eps=1.0, w_D=2.5e8,
                             w_t=5.0e3, w_g=1.0e10, w_R=10.0)


@dataclass(frozen=True)
class AdamConfig:
    lr_angles: float = 1e-3      # radians
    lr_glass: float = 1e-3       # normalized catalog-hull coordinates
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 2000
    tail: int = 150              # snapped, monotone-acceptance iterations


@dataclass
class DesignTemplate:
    """Frozen relay geometry the losses trace through.

    The prism-only chief probes use the assembly mounted at the layout
    position; the distortion grid traces the full relay (ideal lens, prism,
    fixed detector plane).  The detector stays fixed during optimization —
    per-step refocusing would make the loss landscape depend on an argmin.
    """

    config: dict
    detector_z_mm: float
    loss_grid_n: int = 7
    field_span_mm: float = 5.0
    wavelengths_nm: tuple = DESIGN_WAVELENGTHS_NM
    catalog: tuple = None

    def __post_init__(self):
        if self.catalog is None:
            self.catalog = load_catalog()

    @staticmethod
    def default() -> "DesignTemplate":
        cfg = el.load_system_config("AP")
        system = el.build_reference_system("AP")
        det_z = float(dm.value_of(system.detector.translation.z))
        return DesignTemplate(config=cfg, detector_z_mm=det_z)

    def prism_stages(self, params: PrismDesignParams):
        lay = self.config["layout"]
        center = Vec3(0.0, 0.0, float(lay["prism_center_after_lens_mm"]))
        return el.amici_stages(params, center, float(lay["prism_aperture_mm"]))

    def relay_stages(self, params: PrismDesignParams):
        stages, _, _ = el.build_amici_relay_stages(self.config, params)
        return stages

    def scene_z(self) -> float:
        return -float(self.config["layout"]["scene_distance_mm"])


def default_initial_params() -> PrismDesignParams:
    """Documented starting point: symmetric direct-view guess on a
    crown/flint pair (values free to move; recorded in the run report)."""
    return PrismDesignParams.from_nd_vd(
        alpha_c_deg=10.0, a1_deg=30.0, a2_deg=40.0,
        nd1=1.5168, vd1=64.17, nd2=1.7847, vd2=25.68)


# -- probes ----------------------------------------------------------------

def _axial_chief(template: DesignTemplate, wavelength_nm: float) -> geo.Rays:
    origin = Vec3(np.zeros(1), np.zeros(1), np.full(1, -50.0))
    direction = Vec3(np.zeros(1), np.zeros(1), np.ones(1))
    return geo.make_rays(origin, direction, wavelength_nm)


def _dead_penalty(params: PrismDesignParams):
    """Large finite loss with a restoring pull on the incidence angle."""
    ac = params.alpha_c_deg * DEG
    return DEAD_RAY_PENALTY + ac * ac


def _prism_exit(params, template, wavelength_nm):
    """(exit signed angle, entry signed incidence, trace log, alive)."""
    stages = template.prism_stages(params)
    rays = _axial_chief(template, wavelength_nm)
    out, log = el.trace_stages(rays, stages)
    alive = bool(np.all(dm.value_of(out.alive)))
    phi_out = dm.arctan2(out.direction.x, out.direction.z)
    return phi_out, log, alive


def loss_dispersion(params: PrismDesignParams, template: DesignTemplate):
    """(target - |spread|)² with spread the difference of chief-ray exit
    angles at the spectral extremes, radians²."""
    lo, hi = template.wavelengths_nm[0], template.wavelengths_nm[-1]
    phi_lo, _, ok_lo = _prism_exit(params, template, lo)
    phi_hi, _, ok_hi = _prism_exit(params, template, hi)
    if not (ok_lo and ok_hi):
        return _dead_penalty(params)
    spread = dm.absolute(phi_hi - phi_lo)
    resid = TARGET_DISPERSION_RAD - spread
    return dm.dsum(resid * resid)


def loss_deviation(params: PrismDesignParams, template: DesignTemplate):
    """Squared net deviation of the center-wavelength chief ray, radians².

    Expressed through the signed entrance/exit angles and the apex angles
    (exit angle − entrance incidence + 2·A1 − A2), which telescopes exactly
    to the chief ray's total turning for the symmetric assembly.
    """
    phi_out, log, ok = _prism_exit(params, template, CENTER_WAVELENGTH_NM)
    if not ok:
        return _dead_penalty(params)
    entry, exit_ = log[0], log[-1]

    def _signed_incidence(direction, normal):
        # component of the direction transverse to the normal, in-plane (x-z)
        cross_y = direction.z * normal.x - direction.x * normal.z
        along = -1.0 * direction.dot(normal)
        return dm.arctan2(cross_y, along)

    i1 = _signed_incidence(entry.direction_in, entry.normal)
    r4 = _signed_incidence(exit_.direction_out, exit_.normal)
    a1 = params.a1_deg * DEG
    a2 = params.a2_deg * DEG
    psi = r4 - i1 + 2.0 * a1 - a2
    return dm.dsum(psi * psi)


def loss_thickness(params: PrismDesignParams):
    """2·A1² + A2² in radians² — proxy for glass volume."""
    a1 = params.a1_deg * DEG
    a2 = params.a2_deg * DEG
    return 2.0 * a1 * a1 + a2 * a2


def loss_glass(params: PrismDesignParams, catalog=None):
    """Sum over both glasses of the min-over-catalog normalized squared
    (n_d, V_d) distance; ranges taken from the catalog itself."""
    catalog = load_catalog() if catalog is None else catalog
    if not catalog:
        raise ValueError("empty glass catalog")
    d_nd, d_vd = catalog_ranges(catalog)
    total = 0.0
    for g in (params.glass1, params.glass2):
        best = None
        for entry in catalog:
            dn = (g.nd - entry.nd) * (1.0 / d_nd)
            dv = (g.vd - entry.vd) * (1.0 / d_vd)
            dist = dn * dn + dv * dv
            best = dist if best is None else dm.minimum(best, dist)
        total = total + best
    return total


def loss_tir(params: PrismDesignParams, template: DesignTemplate):
    """softplus(2·max over interfaces of (sin θ_i − sin θ_c))².

    The maximum runs over all four faces at the three design wavelengths;
    interfaces that cannot reflect totally (going into the denser medium)
    contribute sin θ_c = 1 and therefore a non-positive margin.
    """
    margins = []
    for wl in template.wavelengths_nm:
        stages = template.prism_stages(params)
        rays = _axial_chief(template, wl)
        out, log = el.trace_stages(rays, stages)
        if not np.all(dm.value_of(out.alive)):
            return _dead_penalty(params)
        for surf, hit in zip(stages, log):
            n1 = refractive_index(surf.n_before, wl)
            n2 = refractive_index(surf.n_after, wl)
            cos_i = dm.absolute(hit.direction_in.dot(hit.normal))
            cos_i = dm.minimum(cos_i, 1.0)
            sin_i = dm.sqrt(dm.maximum(1.0 - cos_i * cos_i, 1e-16))
            sin_c = dm.minimum(n2 / n1, 1.0)
            margins.append(dm.dsum(sin_i - sin_c))
    worst = margins[0]
    for m in margins[1:]:
        worst = dm.maximum(worst, m)
    sp = dm.softplus(2.0 * worst)
    return sp * sp


# -- distortion ------------------------------------------------------------

@dataclass
class DistortionTensor:
    """Traced-vs-ideal chief-ray displacements over a field/wavelength grid.

    ``eps`` holds displacement magnitudes in µm (NaN where the chief ray
    died); the ideal grid is the central-wavelength magnification fit of the
    scene grid, shifted per wavelength by the center-field spectral spread.
    """

    eps: np.ndarray                 # (H, W, N_lambda) µm
    ideal_x: np.ndarray             # (H, W, N_lambda) detector mm
    ideal_y: np.ndarray
    traced_x: np.ndarray
    traced_y: np.ndarray
    wavelengths_nm: tuple
    missing: int = 0
    grid_x: np.ndarray | None = None   # (H, W) scene mm
    grid_y: np.ndarray | None = None

    def max_um(self) -> float:
        return float(np.nanmax(self.eps))

    def mean_um(self) -> float:
        return float(np.nanmean(self.eps))


def distortion_tensor(system: el.OpticalSystem, grid=None,
                      wavelengths=DESIGN_WAVELENGTHS_NM,
                      span_mm: float = 5.0, n: int = 21) -> DistortionTensor:
    """Trace a field grid of chief rays and compare against the ideal grid.

    ``grid`` may be (X, Y) scene coordinate arrays in mm; by default a
    square n×n grid over ``span_mm`` is used.  Dead chief rays become NaN
    entries, excluded from the max/mean with a count in ``missing``.
    """
    if grid is None:
        g = np.linspace(-span_mm / 2.0, span_mm / 2.0, n)
        X, Y = np.meshgrid(g, g)
    else:
        X, Y = np.asarray(grid[0], dtype=float), np.asarray(grid[1], dtype=float)
    if X.ndim != 2 or (X.shape[0] % 2 == 0) or (X.shape[1] % 2 == 0):
        raise ValueError("grid must be 2-D with odd dimensions (center sample)")
    ci, cj = X.shape[0] // 2, X.shape[1] // 2

    tx, ty, ok = {}, {}, {}
    for wl in wavelengths:
        fin, _ = system.trace(system.chief_rays(X.ravel(), Y.ravel(), float(wl)))
        x, y = system.detector_local(fin)
        tx[wl] = dm.value_of(x).reshape(X.shape)
        ty[wl] = dm.value_of(y).reshape(X.shape)
        ok[wl] = np.asarray(fin.alive).reshape(X.shape)

    center_wl = wavelengths[len(wavelengths) // 2]
    if not ok[center_wl][ci, cj]:
        raise RuntimeError("center chief ray died; no ideal grid reference")
    m = _fit_magnification(X, Y, tx[center_wl], ty[center_wl], ci, cj, ok[center_wl])

    shape = X.shape + (len(wavelengths),)
    eps = np.full(shape, np.nan)
    ix = np.full(shape, np.nan)
    iy = np.full(shape, np.nan)
    dx = np.full(shape, np.nan)
    dy = np.full(shape, np.nan)
    missing = 0
    for kq, wl in enumerate(wavelengths):
        if not ok[wl][ci, cj]:
            missing += int(np.size(X))
            continue
        ideal_x = tx[wl][ci, cj] + m * X
        ideal_y = ty[wl][ci, cj] + m * Y
        good = ok[wl]
        missing += int(np.size(good) - np.count_nonzero(good))
        e = np.hypot(tx[wl] - ideal_x, ty[wl] - ideal_y) * 1000.0
        eps[..., kq] = np.where(good, e, np.nan)
        ix[..., kq], iy[..., kq] = ideal_x, ideal_y
        dx[..., kq] = np.where(good, tx[wl], np.nan)
        dy[..., kq] = np.where(good, ty[wl], np.nan)
    if np.all(np.isnan(eps)):
        raise RuntimeError("all chief rays dead; empty distortion tensor")
    return DistortionTensor(eps=eps, ideal_x=ix, ideal_y=iy, traced_x=dx,
                            traced_y=dy, wavelengths_nm=tuple(wavelengths),
                            missing=missing, grid_x=X, grid_y=Y)


def _fit_magnification(X, Y, tx, ty, ci, cj, good):
    """Least-squares scalar magnification about the center sample."""
    s = np.concatenate([X[good] - X[ci, cj], Y[good] - Y[ci, cj]])
    t = np.concatenate([tx[good] - tx[ci, cj], ty[good] - ty[ci, cj]])
    return float((s @ t) / (s @ s))


def loss_distortion(tensor: DistortionTensor) -> float:
    """(max displacement)² in µm² — the reported, non-smoothed value."""
    if np.all(np.isnan(tensor.eps)):
        raise ValueError("empty distortion tensor")
    return float(np.nanmax(tensor.eps) ** 2)


def loss_distortion_value(params: PrismDesignParams, template: DesignTemplate,
                          smooth: bool):
    """Distortion loss evaluated through the relay template.

    ``smooth=True`` replaces the max with a log-sum-exp at temperature
    1e-2 µm (exact at separation, differentiable at ties); the displacement
    magnitude carries a 1e-12 µm² floor inside the root so its derivative
    stays finite at the exactly-zero center entry.
    """
    n = template.loss_grid_n
    g = np.linspace(-template.field_span_mm / 2.0, template.field_span_mm / 2.0, n)
    X, Y = np.meshgrid(g, g)
    c = (n * n) // 2
    stages = template.relay_stages(params)
    detector = geo.Surface(rotation=geo.mat3_identity(),
                           translation=Vec3(0.0, 0.0, template.detector_z_mm),
                           aperture=1e4)

    scene_z = template.scene_z()
    tx, ty = {}, {}
    for wl in template.wavelengths_nm:
        origin = Vec3(X.ravel(), Y.ravel(), np.full(X.size, scene_z))
        direction = (Vec3(0.0, 0.0, 0.0) - origin).normalized()
        rays = geo.make_rays(origin, direction, float(wl))
        out, _ = el.trace_stages(rays, stages)
        point, _, _, ok = geo.intersect(out, detector)
        if not np.all(dm.value_of(out.alive) & np.asarray(ok, dtype=bool)):
            return _dead_penalty(params)
        local = geo.mat3_transpose_apply(detector.rotation,
                                         point - detector.translation)
        tx[wl], ty[wl] = local.x, local.y

    center_wl = template.wavelengths_nm[len(template.wavelengths_nm) // 2]
    sx = np.concatenate([X.ravel(), Y.ravel()])
    tt = dm.concat([tx[center_wl] - tx[center_wl][c],
                    ty[center_wl] - ty[center_wl][c]])
    m = dm.dsum(sx * tt) / float(sx @ sx)

    eps_sq_parts = []
    for wl in template.wavelengths_nm:
        ex = (tx[wl] - (tx[wl][c] + m * X.ravel())) * 1000.0
        ey = (ty[wl] - (ty[wl][c] + m * Y.ravel())) * 1000.0
        eps_sq_parts.append(ex * ex + ey * ey)
    eps = dm.sqrt(dm.concat(eps_sq_parts) + 1e-12)
    if smooth:
        mx = dm.smooth_max(eps, SMOOTH_MAX_TEMPERATURE_UM)
    else:
        mx = float(np.max(dm.value_of(eps)))
    return mx * mx


# -- total loss and optimization -------------------------------------------

def total_loss(params: PrismDesignParams, weights: LossWeights,
               iteration: int, template: DesignTemplate,
               smooth: bool | None = None, parts_out: dict | None = None):
    """Weighted sum of the six losses; ``w_g`` scales with the iteration.

    ``smooth`` picks the differentiable distortion max; by default it
    follows whether dual parameters are present.
    """
    if smooth is None:
        smooth = any(isinstance(v, dm.Dual) for v in
                     (params.alpha_c_deg, params.a1_deg, params.a2_deg,
                      getattr(params.glass1, "nd", None),
                      getattr(params.glass2, "nd", None)))
    parts = {
        "dispersion": loss_dispersion(params, template),
        "distortion": loss_distortion_value(params, template, smooth),
        "deviation": loss_deviation(params, template),
        "thickness": loss_thickness(params),
        "glass": loss_glass(params, template.catalog),
        "tir": loss_tir(params, template),
    }
    if parts_out is not None:
        parts_out.update(parts)
    return (weights.w_delta * parts["dispersion"]
            + weights.w_eps * parts["distortion"]
            + weights.w_D * parts["deviation"]
            + weights.w_t * parts["thickness"]
            + weights.w_g * float(iteration) * parts["glass"]
            + weights.w_R * parts["tir"])


def snap_to_catalog(params: PrismDesignParams, catalog=None) -> PrismDesignParams:
    """Replace both glasses by their nearest catalog entries (idempotent)."""
    catalog = load_catalog() if catalog is None else catalog
    g1 = nearest_glass(float(dm.value_of(params.glass1.nd)),
                       float(dm.value_of(params.glass1.vd)), catalog)
    g2 = nearest_glass(float(dm.value_of(params.glass2.nd)),
                       float(dm.value_of(params.glass2.vd)), catalog)
    return replace(params, glass1=g1, glass2=g2)


@dataclass
class DesignResult:
    params: PrismDesignParams
    loss_trace: np.ndarray
    sub_losses: dict
    report: str
    adam: AdamConfig
    weights: LossWeights
    aborted_at: int | None = None


_ANGLE_LO = np.array([-44.0, 1.0, 1.0]) * DEG
_ANGLE_HI = np.array([44.0, 79.0, 79.0]) * DEG


def _params_from_vector(x, glasses, hull):
    """x = [alpha_c, A1, A2 (rad), g1n, g1v, g2n, g2v (normalized)]."""
    (nd_lo, nd_hi), (vd_lo, vd_hi) = hull
    angles = [xi * (1.0 / DEG) for xi in x[:3]]
    if glasses is not None:                      # snapped: angles only
        return PrismDesignParams(angles[0], angles[1], angles[2], *glasses)
    g1 = RelaxedGlass(nd_lo + x[3] * (nd_hi - nd_lo), vd_lo + x[4] * (vd_hi - vd_lo))
    g2 = RelaxedGlass(nd_lo + x[5] * (nd_hi - nd_lo), vd_lo + x[6] * (vd_hi - vd_lo))
    return PrismDesignParams(angles[0], angles[1], angles[2], g1, g2)


def optimize_prism(initial: PrismDesignParams, weights: LossWeights | None = None,
                   adam: AdamConfig | None = None,
                   template: DesignTemplate | None = None) -> DesignResult:
    """Adam over the seven design variables, then catalog snap + polish.

    The last ``adam.tail`` iterations run with snapped catalog glasses and
    monotone step acceptance (backtracking halves the step while the total
    loss would rise), so the trace is non-increasing over the tail.  When
    ``weights.w_g`` is zero the catalog pull is disabled and no snapping
    occurs.  A non-finite loss aborts, returning the last valid state.
    """
    weights = LossWeights() if weights is None else weights
    adam = AdamConfig() if adam is None else adam
    template = DesignTemplate.default() if template is None else template
    initial.validate()

    hull = catalog_hull(template.catalog)
    (nd_lo, nd_hi), (vd_lo, vd_hi) = hull
    x = np.array([
        float(dm.value_of(initial.alpha_c_deg)) * DEG,
        float(dm.value_of(initial.a1_deg)) * DEG,
        float(dm.value_of(initial.a2_deg)) * DEG,
        (float(dm.value_of(initial.glass1.nd)) - nd_lo) / (nd_hi - nd_lo),
        (float(dm.value_of(initial.glass1.vd)) - vd_lo) / (vd_hi - vd_lo),
        (float(dm.value_of(initial.glass2.nd)) - nd_lo) / (nd_hi - nd_lo),
        (float(dm.value_of(initial.glass2.vd)) - vd_lo) / (vd_hi - vd_lo),
    ])
    lr = np.array([adam.lr_angles] * 3 + [adam.lr_glass] * 4)

    def project(v):
        v[:3] = np.clip(v[:3], _ANGLE_LO, _ANGLE_HI)
        v[3:] = np.clip(v[3:], 0.0, 1.0)
        return v

    x = project(x)
    snapped_glasses = None
    snap_at = adam.iterations - adam.tail if weights.w_g > 0 else None
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace = []
    aborted = None

    def eval_loss_grad(vec, iteration):
        n_free = 3 if snapped_glasses is not None else 7
        seeds = dm.seed(list(vec[:n_free]))
        full = list(seeds) + list(vec[n_free:])
        p = _params_from_vector(full, snapped_glasses, hull)
        out = total_loss(p, weights, iteration, template, smooth=True)
        val = float(dm.value_of(out))
        grad = np.zeros_like(vec)
        grad[:n_free] = dm.tangent_of(out, n_free) if isinstance(out, dm.Dual) else 0.0
        return val, grad

    def eval_loss(vec, iteration):
        p = _params_from_vector(list(vec), snapped_glasses, hull)
        return float(dm.value_of(total_loss(p, weights, iteration, template,
                                            smooth=True)))

    for t in range(1, adam.iterations + 1):
        if snap_at is not None and t == snap_at + 1:
            p_now = _params_from_vector(list(x), None, hull)
            snapped = snap_to_catalog(p_now, template.catalog)
            snapped_glasses = (snapped.glass1, snapped.glass2)
        val, grad = eval_loss_grad(x, t)
        if not math.isfinite(val):
            aborted = t
            break
        m = adam.beta1 * m + (1.0 - adam.beta1) * grad
        v = adam.beta2 * v + (1.0 - adam.beta2) * grad * grad
        m_hat = m / (1.0 - adam.beta1 ** t)
        v_hat = v / (1.0 - adam.beta2 ** t)
        step = lr * m_hat / (np.sqrt(v_hat) + adam.epsilon)
        if snapped_glasses is None:
            x = project(x - step)
            trace.append(val)
        else:
            # monotone acceptance: shrink the step until the loss cannot rise
            accepted = val
            for _ in range(8):
                cand = project(x - step)
                cand_val = eval_loss(cand, t)
                if math.isfinite(cand_val) and cand_val <= val:
                    x, accepted = cand, cand_val
                    break
                step = 0.5 * step
            trace.append(accepted)

    final = _params_from_vector(list(x), snapped_glasses, hull)
    final.validate()
    parts = {}
    total_final = total_loss(final, weights, len(trace), template,
                             smooth=False, parts_out=parts)
    parts = {k: float(dm.value_of(p)) for k, p in parts.items()}
    report = _format_report(initial, final, parts, float(dm.value_of(total_final)),
                            weights, adam, template, aborted)
    return DesignResult(params=final, loss_trace=np.asarray(trace),
                        sub_losses=parts, report=report, adam=adam,
                        weights=weights, aborted_at=aborted)


def _glass_label(g) -> str:
    name = getattr(g, "name", "") or "relaxed"
    return (f"{name} (nd={float(dm.value_of(g.nd)):.5f}, "
            f"vd={float(dm.value_of(g.vd)):.3f})")


def _format_report(initial, final, parts, total, weights, adam, template,
                   aborted) -> str:
    phi_lo, _, _ = _prism_exit(final, template, template.wavelengths_nm[0])
    phi_hi, _, _ = _prism_exit(final, template, template.wavelengths_nm[-1])
    spread_deg = float(np.abs(dm.value_of(phi_hi - phi_lo)).ravel()[0]) / DEG
    dev_mrad = math.sqrt(max(parts["deviation"], 0.0)) * 1000.0
    lines = [
        "double-Amici prism design run",
        "=============================",
        f"initial: alpha_c={float(dm.value_of(initial.alpha_c_deg)):.4f} deg, "
        f"A1={float(dm.value_of(initial.a1_deg)):.4f} deg, "
        f"A2={float(dm.value_of(initial.a2_deg)):.4f} deg",
        f"  glass1: {_glass_label(initial.glass1)}",
        f"  glass2: {_glass_label(initial.glass2)}",
        f"adam: lr_angles={adam.lr_angles}, lr_glass={adam.lr_glass}, "
        f"beta=({adam.beta1}, {adam.beta2}), iterations={adam.iterations}, "
        f"tail={adam.tail}",
        f"weights: w_delta={weights.w_delta}, w_eps={weights.w_eps}, "
        f"w_D={weights.w_D}, w_t={weights.w_t}, w_g={weights.w_g}"
        f" (x iteration), w_R={weights.w_R}",
        f"final: alpha_c={float(dm.value_of(final.alpha_c_deg)):.4f} deg, "
        f"A1={float(dm.value_of(final.a1_deg)):.4f} deg, "
        f"A2={float(dm.value_of(final.a2_deg)):.4f} deg",
        f"  glass1: {_glass_label(final.glass1)}",
        f"  glass2: {_glass_label(final.glass2)}",
        "sub-losses: " + ", ".join(f"{k}={parts[k]:.6g}" for k in
                                   ("dispersion", "distortion", "deviation",
                                    "thickness", "glass", "tir")),
        f"total loss: {total:.6g}",
        f"measured: dispersion={spread_deg:.4f} deg, deviation={dev_mrad:.4f} mrad, "
        f"max distortion={math.sqrt(max(parts['distortion'], 0.0)):.3f} um "
        f"(grid {template.loss_grid_n}x{template.loss_grid_n}x"
        f"{len(template.wavelengths_nm)})",
    ]
    if aborted is not None:
        lines.append(f"ABORTED at iteration {aborted}: non-finite loss; "
                     "returning last valid parameters")
    return "\n".join(lines) + "\n"
