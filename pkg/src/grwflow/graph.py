"""Extrinsic geometry of the space-like graph {(u(x), x)} in the GRW spacetime.

Everything is evaluated pointwise from the discrete jets (u, u_i, u_ij) of
the height field. ``snapshot_from_jets`` is the single place where the
formulas live; ``build_snapshot`` only supplies grid derivatives, so the same
code also serves batches of synthetic jets in the property tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mesh as bm
from .errors import NotSpacelikeError
from .warp import WarpingFunction, eval_warp

DEFAULT_EPS_SL = 1e-6


@dataclass
class GraphState:
    u: np.ndarray
    s: float = 0.0


@dataclass
class GeometrySnapshot:
    """Per-node geometry of a graph. Index axes first, grid axes last."""

    m: int
    u: np.ndarray
    du: np.ndarray            # u_i
    hess_tilde: np.ndarray    # u_ij - G~^k_ij u_k
    d2u: np.ndarray           # coordinate second derivatives
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    g_tilde: np.ndarray
    g_tilde_inv: np.ndarray
    gamma_tilde: np.ndarray
    ric_tilde: np.ndarray
    grad_tilde: np.ndarray    # g~^ij u_j
    grad_norm2_tilde: np.ndarray
    W: np.ndarray             # f^2 - |grad~ u|^2
    v: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    grad_u_g: np.ndarray      # contravariant g^ij u_j
    grad_u_norm2: np.ndarray  # |grad u|_g^2
    b: np.ndarray             # spatial part of the unit normal divided by v
    V: np.ndarray             # tangential part of d_t, equal to -grad u
    h: np.ndarray
    H: np.ndarray
    h_norm2: np.ndarray
    vol_density: np.ndarray
    dv_jet: np.ndarray        # d_i v by the chain rule on the jets


def snapshot_from_jets(warp: WarpingFunction, u, du, d2u, g_tilde, g_tilde_inv,
                       gamma_tilde, ric_tilde=None, eps_sl: float = DEFAULT_EPS_SL) -> GeometrySnapshot:
    u = np.asarray(u, dtype=float)
    m = du.shape[0]
    f, fp, fpp = eval_warp(warp, u)
    U = np.einsum("ij...,j...->i...", g_tilde_inv, du)
    q = np.einsum("i...,i...->...", du, U)
    W = f * f - q
    _guard(W, f, eps_sl)
    v = f / np.sqrt(W)
    f2 = f * f
    g = f2 * g_tilde - du[:, None] * du[None, :]
    g_inv = (g_tilde_inv + U[:, None] * U[None, :] / W) / f2
    b = U / f2
    grad_u = U / W
    hess_t = d2u - np.einsum("kij...,k...->ij...", gamma_tilde, du)
    h = -v * (hess_t - 2 * (fp / f) * du[:, None] * du[None, :] + f * fp * g_tilde)
    H = np.einsum("ij...,ij...->...", g_inv, h)
    A = np.einsum("ik...,kj...->ij...", g_inv, h)
    h_norm2 = np.einsum("ij...,ji...->...", A, A)
    dW = 2 * f * fp * du - 2 * np.einsum("ia...,a...->i...", hess_t, U)
    dv = v * (fp / f) * du - 0.5 * v * dW / W
    if ric_tilde is None:
        ric_tilde = np.zeros_like(g_tilde)
    return GeometrySnapshot(
        m=m, u=u, du=du, hess_tilde=hess_t, d2u=d2u, f=f, fp=fp, fpp=fpp,
        g_tilde=g_tilde, g_tilde_inv=g_tilde_inv, gamma_tilde=gamma_tilde, ric_tilde=ric_tilde,
        grad_tilde=U, grad_norm2_tilde=q, W=W, v=v, g=g, g_inv=g_inv,
        grad_u_g=grad_u, grad_u_norm2=q / W, b=b, V=-grad_u, h=h, H=H, h_norm2=h_norm2,
        vol_density=f ** m / v, dv_jet=dv,
    )


def _guard(W, f, eps_sl):
    bad = ~(W > eps_sl * f * f)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), np.shape(bad)) if np.ndim(bad) else ()
        ratio = np.asarray(W / (f * f))
        raise NotSpacelikeError(
            f"graph not space-like at node {idx}: (f^2 - |grad u|^2)/f^2 = "
            f"{float(ratio[idx]) if ratio.ndim else float(ratio):.3e} <= margin {eps_sl:g}")


def build_snapshot(mesh: bm.BaseMesh, warp: WarpingFunction, u, eps_sl: float = DEFAULT_EPS_SL) -> GeometrySnapshot:
    u = np.asarray(u, dtype=float)
    return snapshot_from_jets(warp, u, bm.partials(mesh, u), bm.second_partials(mesh, u),
                              mesh.g, mesh.g_inv, mesh.christoffel, mesh.ricci, eps_sl)


# ---------------------------------------------------------------- single quantities

def induced_metric(mesh, warp, u) -> np.ndarray:
    """g_ij = -u_i u_j + f(u)^2 g~_ij; raises if any nodal matrix is not positive definite."""
    u = np.asarray(u, dtype=float)
    du = bm.partials(mesh, u)
    f = eval_warp(warp, u)[0]
    g = f * f * mesh.g - du[:, None] * du[None, :]
    lam = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
    if np.any(lam[..., 0] <= 0):
        raise NotSpacelikeError("induced metric is not positive definite")
    return g


def inverse_metric(mesh, warp, u, eps_sl: float = DEFAULT_EPS_SL) -> np.ndarray:
    return build_snapshot(mesh, warp, u, eps_sl).g_inv


def gradient_function(mesh, warp, u, eps_sl: float = DEFAULT_EPS_SL) -> np.ndarray:
    return build_snapshot(mesh, warp, u, eps_sl).v


def second_fundamental_form(mesh, warp, u, eps_sl: float = DEFAULT_EPS_SL) -> np.ndarray:
    return build_snapshot(mesh, warp, u, eps_sl).h


def mean_curvature(snap: GeometrySnapshot):
    """Return (H, |h|^2) of a snapshot."""
    return snap.H, snap.h_norm2


def cross_check_h_via_induced_christoffels(mesh, warp, u, eps_sl: float = DEFAULT_EPS_SL) -> np.ndarray:
    """Residual of v h_ij + (u_ij - G^k_ij u_k) + f f' g~_ij.

    G are the Christoffel symbols of the induced metric obtained by central
    differences of the g_ij field and a numerically inverted g.
    """
    snap = build_snapshot(mesh, warp, u, eps_sl)
    dg = bm.partials(mesh, snap.g)  # dg[a, i, j] = d_a g_ij
    low = 0.5 * (np.einsum("ijk...->kij...", dg) + np.einsum("jik...->kij...", dg) - dg)
    ginv = np.moveaxis(np.linalg.inv(np.moveaxis(snap.g, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    gam = np.einsum("lk...,kij...->lij...", ginv, low)
    cov = snap.d2u - np.einsum("kij...,k...->ij...", gam, snap.du)
    return snap.v * snap.h + cov + snap.f * snap.fp * snap.g_tilde


def induced_laplacian_from_jets(snap: GeometrySnapshot, dphi, hess_phi) -> np.ndarray:
    """Positive Laplace-Beltrami operator of g applied to a field with given jets.

    ``hess_phi`` is the covariant g~-Hessian of the field. The operator is
    written as base Laplacian plus the rank-one correction along grad~ u and
    first-order terms coupling grad~ u with grad~ phi.
    """
    U, W, f, fp, m = snap.grad_tilde, snap.W, snap.f, snap.fp, snap.m
    lap_t = -np.einsum("ij...,ij...->...", snap.g_tilde_inv, hess_phi)
    lap_h = -np.einsum("i...,j...,ij...->...", U, U, hess_phi) / W
    lap_tu = -np.einsum("ij...,ij...->...", snap.g_tilde_inv, snap.hess_tilde)
    lap_hu = -np.einsum("i...,j...,ij...->...", U, U, snap.hess_tilde) / W
    P = np.einsum("i...,i...->...", U, dphi)
    return ((lap_t + lap_h) / (f * f) + P / (f * f * W) * (lap_tu + lap_hu)
            - (m - 1) * P * fp / (f * W) + P * f * fp / (W * W))


def apply_induced_laplacian(snap: GeometrySnapshot, mesh, warp, field) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    dphi = bm.partials(mesh, field)
    hess = bm.second_partials(mesh, field) - np.einsum("kij...,k...->ij...", mesh.christoffel, dphi)
    return induced_laplacian_from_jets(snap, dphi, hess)


def principal_symbol(snap: GeometrySnapshot) -> np.ndarray:
    """Second-order coefficient matrix v^2 g^ij = (g~^ij + U^i U^j / W) / W of the graph equation."""
    U, W = snap.grad_tilde, snap.W
    return (snap.g_tilde_inv + U[:, None] * U[None, :] / W) / W


def max_symbol_eigenvalue(snap: GeometrySnapshot) -> np.ndarray:
    A = principal_symbol(snap)
    if snap.m == 1:
        return A[0, 0]
    a, c, d = A[0, 0], A[0, 1], A[1, 1]
    return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + c * c)


@dataclass
class VolumeCheck:
    closed_form: np.ndarray
    determinant: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.closed_form - self.determinant)))


def volume_density(snap: GeometrySnapshot) -> VolumeCheck:
    """f^m / v together with sqrt(det g) / sqrt(det g~)."""
    det = np.linalg.det(np.moveaxis(snap.g, (0, 1), (-2, -1)))
    det_t = np.linalg.det(np.moveaxis(snap.g_tilde, (0, 1), (-2, -1)))
    return VolumeCheck(snap.vol_density, np.sqrt(det) / np.sqrt(det_t))


@dataclass
class MetricNorms:
    g_in_tilde: np.ndarray      # |g|^2 measured with g~
    tilde_in_g: np.ndarray      # |g~|^2 measured with g
    g_in_tilde_direct: np.ndarray
    tilde_in_g_direct: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(max(np.max(np.abs(self.g_in_tilde - self.g_in_tilde_direct)),
                         np.max(np.abs(self.tilde_in_g - self.tilde_in_g_direct))))


def tensor_norm2(A, metric_inv) -> np.ndarray:
    """|A|^2 = G^ik G^jl A_ij A_kl for a covariant 2-tensor A."""
    return np.einsum("ik...,jl...,ij...,kl...->...", metric_inv, metric_inv, A, A)


def metric_equivalence_constants(snap: GeometrySnapshot) -> MetricNorms:
    f2, v2, m = snap.f ** 2, snap.v ** 2, snap.m
    closed_a = (f2 / v2) ** 2 + f2 * f2 * (m - 1)
    closed_b = (m - 1 + v2 * v2) / (f2 * f2)
    return MetricNorms(closed_a, closed_b,
                       tensor_norm2(snap.g, snap.g_tilde_inv),
                       tensor_norm2(snap.g_tilde, snap.g_inv))


def tensor_pairing_bound_check(A, Y, Z, metric, rtol: float = 1e-12):
    """Check |A(Y, Z)| <= |A| |Y| |Z| node by node; returns (all_ok, lhs, rhs)."""
    metric = np.asarray(metric, dtype=float)
    minv = np.moveaxis(np.linalg.inv(np.moveaxis(metric, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    lhs = np.abs(np.einsum("ij...,i...,j...->...", A, Y, Z))
    nY = np.sqrt(np.einsum("ij...,i...,j...->...", metric, Y, Y))
    nZ = np.sqrt(np.einsum("ij...,i...,j...->...", metric, Z, Z))
    rhs = np.sqrt(tensor_norm2(A, minv)) * nY * nZ
    ok = lhs <= rhs * (1 + rtol) + 1e-300
    return bool(np.all(ok)), lhs, rhs
