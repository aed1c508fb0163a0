"""Geometric identities evaluated as numerical residuals.

Spatial identities act on a single snapshot. Evolution identities act on a
``SnapshotTriple`` of states at s - ds, s, s + ds and use central differences
in s. The evolution equations describe a hypersurface moving with normal
velocity -(H - Hpre) times the unit normal. With ``frame="normal"`` the time
derivative follows that motion: the nodal difference quotient is corrected by
transport along the base velocity X = -(H - Hpre) v b (and by the Lie
derivative for tensors). ``frame="coordinate"`` uses plain nodal differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mesh as bm
from .flow import FlowConfig, FlowEngine, PrescribedCurvature, stability_dt
from .graph import (GeometrySnapshot, GraphState, apply_induced_laplacian, build_snapshot,
                    cross_check_h_via_induced_christoffels, metric_equivalence_constants, volume_density)
from .warp import AmbientCurvature, WarpingFunction, ambient_ricci


@dataclass
class ResidualReport:
    identity: str
    residual: np.ndarray
    sup: float
    l2: float
    orders: dict = field(default_factory=dict)

    @classmethod
    def from_field(cls, identity, residual, mesh=None, mask=None):
        r = np.asarray(residual, dtype=float)
        if mask is not None:
            r_sel = r[..., mask]
        else:
            r_sel = r
        sup = float(np.max(np.abs(r_sel))) if r_sel.size else 0.0
        cell = float(np.prod(mesh.spacing)) if mesh is not None else 1.0
        l2 = float(np.sqrt(np.sum(r_sel ** 2) * cell))
        return cls(identity, r, sup, l2)


def fit_order(hs, errors) -> float | None:
    """Least-squares slope of log(error) against log(h); None with fewer than 3 levels."""
    hs, errors = np.asarray(hs, dtype=float), np.asarray(errors, dtype=float)
    if hs.size < 3 or np.any(errors <= 0):
        return None
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def attach_orders(reports, hs, key="spatial"):
    """Fit orders for a ladder of reports (coarse to fine) and store them on every report."""
    order = fit_order(hs, [r.sup for r in reports])
    for r in reports:
        r.orders[key] = order
    return order


def _mask(mesh):
    return None if mesh.periodic else mesh.interior


# ---------------------------------------------------------------- spatial identities

def check_laplacian_u(snap: GeometrySnapshot, mesh, warp, reference: GeometrySnapshot | None = None):
    """Delta u - (v H + (f'/f)(m + v^2 - 1)).

    The right side is taken from ``reference`` when given (e.g. a snapshot
    built from exact derivatives), so that the report measures discretisation
    error rather than an algebraic identity of the discrete jets.
    """
    ref = snap if reference is None else reference
    lap = apply_induced_laplacian(snap, mesh, warp, snap.u)
    rhs = ref.v * ref.H + ref.fp / ref.f * (ref.m + ref.v ** 2 - 1)
    return ResidualReport.from_field("laplacian_u", lap - rhs, mesh, _mask(mesh))


def check_h_gradu(snap: GeometrySnapshot, mesh):
    """h(grad u, grad u) + g(grad u, grad v) + (f'/f) |grad u|^2 v with grad v by differences."""
    dv = bm.partials(mesh, snap.v)
    X = snap.grad_u_g
    hXX = np.einsum("ij...,i...,j...->...", snap.h, X, X)
    gXv = np.einsum("i...,i...->...", X, dv)
    res = hXX + gXv + snap.fp / snap.f * snap.grad_u_norm2 * snap.v
    return ResidualReport.from_field("h_gradu", res, mesh, _mask(mesh))


def check_gradient_covector_identity(snap: GeometrySnapshot, mesh):
    """v_i + g^jk u_j h_ki + (f'/f) v u_i, componentwise."""
    dv = bm.partials(mesh, snap.v)
    res = dv + np.einsum("k...,ki...->i...", snap.grad_u_g, snap.h) + snap.fp / snap.f * snap.v * snap.du
    return ResidualReport.from_field("gradient_covector", res, mesh, _mask(mesh))


def check_h_cross(mesh, warp, u, eps_sl=1e-6):
    res = cross_check_h_via_induced_christoffels(mesh, warp, u, eps_sl)
    return ResidualReport.from_field("h_cross_check", res, mesh, _mask(mesh))


def check_volume_form(snap: GeometrySnapshot, mesh, reference: GeometrySnapshot | None = None):
    """sqrt(det g)/sqrt(det g~) minus f^m / v (closed form from ``reference`` if given)."""
    ref = snap if reference is None else reference
    det_route = volume_density(snap).determinant
    return ResidualReport.from_field("volume_form", det_route - ref.vol_density, mesh, _mask(mesh))


def check_metric_norms(snap: GeometrySnapshot, mesh, reference: GeometrySnapshot | None = None):
    """Direct contractions |g|_g~^2, |g~|_g^2 minus their closed forms (stacked)."""
    ref = snap if reference is None else reference
    direct = metric_equivalence_constants(snap)
    closed = metric_equivalence_constants(ref)
    res = np.stack([direct.g_in_tilde_direct - closed.g_in_tilde,
                    direct.tilde_in_g_direct - closed.tilde_in_g])
    return ResidualReport.from_field("metric_norms", res, mesh, _mask(mesh))


# ---------------------------------------------------------------- curvature in the normal direction

def curvature_along(snap: GeometrySnapshot, warp: WarpingFunction) -> AmbientCurvature:
    """Ambient curvature evaluated at the graph points (t = u(x), x)."""
    return ambient_ricci(warp, snap.u, snap.g_tilde, snap.ric_tilde)


def ricci_normal(snap: GeometrySnapshot, curvature: AmbientCurvature, mode: str = "direct_contraction",
                 sigma: int = -1) -> np.ndarray:
    """Ric(mu, mu) for the unit normal mu = v (d_t + b^i d_i)."""
    v2 = snap.v ** 2
    if mode == "direct_contraction":
        b = snap.b
        return v2 * (curvature.ric_tt + 2 * np.einsum("i...,i...->...", b, curvature.ric_ti)
                     + np.einsum("i...,j...,ij...->...", b, b, curvature.ric_ij))
    if mode != "closed_form":
        raise ValueError(f"unknown mode {mode!r}")
    f, fp, fpp, m = snap.f, snap.fp, snap.fpp, snap.m
    U = snap.grad_tilde
    ric_uu = np.einsum("ij...,i...,j...->...", snap.ric_tilde, U, U)
    n2 = snap.grad_u_norm2
    return sigma * m * v2 * fpp / f + v2 / f ** 4 * ric_uu + fpp / f * n2 + (m - 1) * (fp / f) ** 2 * n2


# ---------------------------------------------------------------- snapshot triples

@dataclass
class SnapshotTriple:
    mesh: bm.BaseMesh
    warp: WarpingFunction
    presc: np.ndarray
    states: tuple          # GraphState at s - ds, s, s + ds
    ds: float
    frame: str = "normal"
    eps_sl: float = 1e-6

    def __post_init__(self):
        if len(self.states) != 3:
            raise ValueError("a triple needs exactly three states")
        s0, s1, s2 = (st.s for st in self.states)
        if not np.isclose(s1 - s0, self.ds, rtol=1e-9, atol=1e-14) or not np.isclose(s2 - s1, self.ds, rtol=1e-9, atol=1e-14):
            raise ValueError("triple states must be uniformly spaced by ds")
        if self.frame not in ("normal", "coordinate"):
            raise ValueError(f"unknown frame {self.frame!r}")
        self.presc = np.asarray(getattr(self.presc, "values", self.presc), dtype=float)
        self.snaps = tuple(build_snapshot(self.mesh, self.warp, st.u, self.eps_sl) for st in self.states)

    @property
    def mid(self) -> GeometrySnapshot:
        return self.snaps[1]

    @property
    def psi(self) -> np.ndarray:
        return self.mid.H - self.presc

    def base_velocity(self) -> np.ndarray:
        """X^k = -(H - Hpre) v b^k, the base-point motion of the normal parametrisation."""
        if self.frame == "coordinate":
            return np.zeros_like(self.mid.b)
        return -self.psi * self.mid.v * self.mid.b

    def d_scalar(self, getter) -> np.ndarray:
        a, c = getter(self.snaps[0]), getter(self.snaps[2])
        out = (c - a) / (2 * self.ds)
        if self.frame == "normal":
            X = self.base_velocity()
            out = out + np.einsum("k...,k...->...", X, bm.partials(self.mesh, getter(self.mid)))
        return out

    def d_covariant2(self, getter) -> np.ndarray:
        """Time derivative of a covariant 2-tensor including the Lie derivative along X."""
        out = (getter(self.snaps[2]) - getter(self.snaps[0])) / (2 * self.ds)
        if self.frame == "normal":
            T = getter(self.mid)
            X = self.base_velocity()
            dX = bm.partials(self.mesh, X)  # dX[i, k] = d_i X^k
            dT = bm.partials(self.mesh, T)  # dT[k, i, j] = d_k T_ij
            out = (out + np.einsum("k...,kij...->ij...", X, dT)
                   + np.einsum("kj...,ik...->ij...", T, dX) + np.einsum("ik...,jk...->ij...", T, dX))
        return out

    def d_contravariant2(self, getter) -> np.ndarray:
        out = (getter(self.snaps[2]) - getter(self.snaps[0])) / (2 * self.ds)
        if self.frame == "normal":
            T = getter(self.mid)
            X = self.base_velocity()
            dX = bm.partials(self.mesh, X)
            dT = bm.partials(self.mesh, T)
            out = (out + np.einsum("k...,kij...->ij...", X, dT)
                   - np.einsum("kj...,ki...->ij...", T, dX) - np.einsum("ik...,kj...->ij...", T, dX))
        return out


def flow_triple(mesh, warp, presc, u0, s_mid: float, ds: float, speed: str = "normal",
                frame: str = "normal", dt_max: float | None = None, cfl: float = 0.2,
                eps_sl: float = 1e-6) -> SnapshotTriple:
    """Integrate with RK4 from s = 0 and store the states at s_mid - ds, s_mid, s_mid + ds.

    Every segment uses a constant step that divides it exactly; the step is
    the smaller of ``dt_max`` and the stability limit at the segment start.
    """
    if s_mid - ds < 0:
        raise ValueError("s_mid - ds must be non-negative")
    presc = presc if isinstance(presc, PrescribedCurvature) else PrescribedCurvature(np.broadcast_to(presc, mesh.shape).copy())
    cfg = FlowConfig(integrator="rk4", cfl=cfl, s_end=s_mid + ds, eps_sl=eps_sl,
                     upper_barrier_delta=None, speed=speed)
    engine = FlowEngine(mesh, warp, presc, cfg)
    state = GraphState(np.array(u0, dtype=float), 0.0)
    states = []
    for target in (s_mid - ds, s_mid, s_mid + ds):
        span = target - state.s
        if span > 0:
            dt_st, _ = stability_dt(engine.snapshot(state.u), mesh, cfl)
            dt = dt_st if dt_max is None else min(dt_st, dt_max)
            k = int(np.ceil(span / dt - 1e-9))
            dt = span / k
            for _ in range(k):
                state = engine.step(state, dt)[0]
            state = GraphState(state.u, target)
        states.append(GraphState(state.u.copy(), target))
    return SnapshotTriple(mesh, warp, presc.values, tuple(states), ds, frame, eps_sl)


# ---------------------------------------------------------------- evolution identities

def check_v_time_derivative(triple: SnapshotTriple, V=None):
    """d_s v - [V(psi) - psi f'/f + psi (f'/f) v^2] with psi = H - Hpre.

    ``V`` defaults to the tangential part of d_t, which equals -grad u.
    """
    mid, mesh = triple.mid, triple.mesh
    psi = triple.psi
    V = mid.V if V is None else V
    Vpsi = np.einsum("k...,k...->...", V, bm.partials(mesh, psi))
    r = mid.fp / mid.f
    res = triple.d_scalar(lambda s: s.v) - (Vpsi - psi * r + psi * r * mid.v ** 2)
    return ResidualReport.from_field("v_time_derivative", res, mesh, _mask(mesh))


def check_v_evolution(triple: SnapshotTriple, curvature: AmbientCurvature | None = None,
                      variant: str = "stated"):
    """(d_s + Delta) v minus the full right side of the evolution equation of v.

    ``variant="stated"`` uses +m (f''/f) v - (f''/f)|grad u|^2 v for the two
    f'' terms; ``variant="corrected"`` flips both signs, which is the form
    that holds when f'' does not vanish (the variants agree for f'' = 0).
    """
    if variant not in ("stated", "corrected"):
        raise ValueError(f"unknown variant {variant!r}")
    mid, mesh, warp = triple.mid, triple.mesh, triple.warp
    if curvature is None:
        curvature = curvature_along(mid, warp)
    Hp = triple.presc
    v, f, fp, fpp, m, H = mid.v, mid.f, mid.fp, mid.fpp, mid.m, mid.H
    r, rr = fp / f, fpp / f
    n2 = mid.grad_u_norm2
    ric = ricci_normal(mid, curvature, "direct_contraction")
    V_H = np.einsum("k...,k...->...", mid.V, bm.partials(mesh, Hp))
    g_du_dv = np.einsum("k...,k...->...", mid.grad_u_g, bm.partials(mesh, v))
    sgn = 1.0 if variant == "stated" else -1.0
    rhs = (-mid.h_norm2 * v - ric * v - 2 * r * H + r * Hp - V_H - r * Hp * v ** 2
           + 2 * r * g_du_dv + sgn * (m * rr * v - rr * n2 * v) - r * r * n2 * v - m * r * r * v)
    lap_v = apply_induced_laplacian(mid, mesh, warp, v)
    res = triple.d_scalar(lambda s: s.v) + lap_v - rhs
    name = "v_evolution" if variant == "stated" else "v_evolution_corrected"
    return ResidualReport.from_field(name, res, mesh, _mask(mesh))


def check_metric_evolution(triple: SnapshotTriple):
    """Residuals of d_s g_ij - 2 psi h_ij and d_s g^ij + 2 psi g^ik h_kl g^lj."""
    mid, mesh = triple.mid, triple.mesh
    psi = triple.psi
    res_g = triple.d_covariant2(lambda s: s.g) - 2 * psi * mid.h
    hup = np.einsum("ik...,kl...,lj...->ij...", mid.g_inv, mid.h, mid.g_inv)
    res_gi = triple.d_contravariant2(lambda s: s.g_inv) + 2 * psi * hup
    return (ResidualReport.from_field("metric_evolution", res_g, mesh, _mask(mesh)),
            ResidualReport.from_field("inverse_metric_evolution", res_gi, mesh, _mask(mesh)))


def check_mean_curvature_evolution(triple: SnapshotTriple, curvature: AmbientCurvature | None = None):
    """(d_s + Delta) psi + psi (|h|^2 + Ric(mu, mu)), and the squared form.

    The prescribed function is held fixed along the moving parametrisation,
    so d_s psi = d_s H. The squared form checks
    (d_s + Delta) psi^2 + 2 psi^2 (|h|^2 + Ric) + 2 |grad psi|^2.
    """
    mid, mesh, warp = triple.mid, triple.mesh, triple.warp
    if curvature is None:
        curvature = curvature_along(mid, warp)
    psi = triple.psi
    ric = ricci_normal(mid, curvature, "direct_contraction")
    dH = triple.d_scalar(lambda s: s.H)
    lap_psi = apply_induced_laplacian(mid, mesh, warp, psi)
    res1 = dH + lap_psi + psi * (mid.h_norm2 + ric)
    dpsi = bm.partials(mesh, psi)
    grad2 = np.einsum("ij...,i...,j...->...", mid.g_inv, dpsi, dpsi)
    dpsi2 = 2 * psi * dH
    lap_psi2 = apply_induced_laplacian(mid, mesh, warp, psi * psi)
    res2 = dpsi2 + lap_psi2 + 2 * psi * psi * (mid.h_norm2 + ric) + 2 * grad2
    return (ResidualReport.from_field("mean_curvature_evolution", res1, mesh, _mask(mesh)),
            ResidualReport.from_field("mean_curvature_evolution_squared", res2, mesh, _mask(mesh)))


# ---------------------------------------------------------------- inequality suite

@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst_ratio: float      # max over nodes of lhs / rhs (<= 1 means pass)
    constant: float | None = None
    gating: bool = True
    note: str = ""


def _ratio(lhs, rhs, tol=1e-9):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    ok = lhs <= rhs * (1 + tol) + tol
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > tol, np.inf, 0.0))
    return bool(np.all(ok)), float(np.max(q)) if q.size else 0.0


def base_ricci_bound(snap: GeometrySnapshot) -> float:
    """sup over nodes of the largest |eigenvalue| of ric~ relative to g~."""
    m = snap.m
    G = np.moveaxis(snap.g_tilde, (0, 1), (-2, -1)).reshape(-1, m, m)
    R = np.moveaxis(snap.ric_tilde, (0, 1), (-2, -1)).reshape(-1, m, m)
    L = np.linalg.cholesky(G)
    Li = np.linalg.inv(L)
    S = Li @ R @ np.swapaxes(Li, -1, -2)
    return float(np.max(np.abs(np.linalg.eigvalsh(S)))) if S.size else 0.0


def property_suite(snap: GeometrySnapshot, curvature: AmbientCurvature, warp: WarpingFunction,
                   presc=None, dpresc=None, eps_values=(0.1, 1.0, 10.0)):
    """Pointwise a priori inequalities with explicit constants.

    ``presc``/``dpresc`` are the prescribed function and its coordinate
    gradient at the nodes (omit both to skip the V(Hpre) bound). Entries with
    ``gating=False`` record alternative constant choices for comparison.
    """
    m, v = snap.m, snap.v
    c1, c2, c3 = warp.c1, warp.c2, warp.c3
    n2 = snap.grad_u_norm2
    hn = np.sqrt(snap.h_norm2)
    out = []

    g_du_dv = np.einsum("k...,k...->...", snap.grad_u_g, snap.dv_jet)
    ok, q = _ratio(np.abs(g_du_dv), hn * n2 + c2 * n2 * v)
    out.append(PropertyResult("a_grad_u_grad_v", ok, q, c2))

    ric = ricci_normal(snap, curvature, "direct_contraction")
    c4 = base_ricci_bound(snap)
    c_b = m * c3 + c4 / c1 ** 2 + c3 + (m - 1) * c2 ** 2
    ok, q = _ratio(np.abs(ric), c_b * v ** 2)
    out.append(PropertyResult("b_ricci_normal", ok, q, c_b))
    c_lit = m * c3 + c4 / c1 ** 4 + c3 + (m - 1) * c2 ** 2
    ok, q = _ratio(np.abs(ric), c_lit * v ** 2)
    out.append(PropertyResult("b_ricci_normal_c4_over_c1^4", ok, q, c_lit, gating=False,
                              note="base-curvature term scaled by c1^-4"))

    X = snap.grad_u_g
    lhs_c = np.abs(snap.H + np.einsum("ij...,i...,j...->...", snap.h, X, X))
    for eps in eps_values:
        ok, q = _ratio(lhs_c, eps * v * snap.h_norm2 + (m + 2) * v ** 3 / eps)
        out.append(PropertyResult(f"c_structure_eps={eps:g}", ok, q, eps))
        ok, q = _ratio(lhs_c, eps * v * hn + (m + 2) * v ** 3 / eps)
        out.append(PropertyResult(f"c_structure_unsquared_eps={eps:g}", ok, q, eps, gating=False,
                                  note="first power of |h|"))

    if presc is not None and dpresc is not None:
        presc = np.asarray(presc, dtype=float)
        dpresc = np.asarray(dpresc, dtype=float)
        c1_norm = float(np.max(np.abs(presc)) + np.max(np.sqrt(np.sum(dpresc ** 2, axis=0))))
        ginv_max = float(np.max(np.linalg.eigvalsh(np.moveaxis(snap.g_tilde_inv, (0, 1), (-2, -1)))))
        c_d = max(1.0, ginv_max) / c1
        VH = np.abs(np.einsum("k...,k...->...", snap.V, dpresc))
        gn = np.sqrt(n2)
        ok, q = _ratio(VH, c_d * v * gn * c1_norm)
        out.append(PropertyResult("d_V_of_Hpre", ok, q, c_d))
        ok, q = _ratio(VH, c_d * gn * c1_norm)
        out.append(PropertyResult("d_V_of_Hpre_without_v", ok, q, c_d, gating=False,
                                  note="bound without the factor v"))

    ok1, q1 = _ratio(n2, v ** 2)
    ok2 = bool(np.all(v >= 1 - 1e-12))
    out.append(PropertyResult("e_gradient_bounds", ok1 and ok2, q1))
    return out
