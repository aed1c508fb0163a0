import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from grwflow.analytic import X, Y, exact_snapshot, jets
from grwflow.errors import NotSpacelikeError
from grwflow.graph import (build_snapshot, cross_check_h_via_induced_christoffels, gradient_function,
                           induced_laplacian_from_jets, induced_metric, inverse_metric, max_symbol_eigenvalue,
                           mean_curvature, metric_equivalence_constants, principal_symbol, second_fundamental_form,
                           snapshot_from_jets, tensor_norm2, tensor_pairing_bound_check, volume_density)
from grwflow.mesh import conformal_from_jets, make_mesh, partials
from grwflow.warp import WarpingFunction

from conftest import WARPS, fitted_order, random_jets

FLAT1 = (np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1, 1)))


def _point(warp, u, ux, uxx=0.0):
    g, gi, gam = FLAT1
    return snapshot_from_jets(warp, np.array(u), np.array([ux]), np.array([[uxx]]), g, gi, gam)


def test_metric_examples():
    s = _point(WarpingFunction("constant", 2.0), 0.0, 0.3)
    assert s.g[0, 0] == pytest.approx(3.91)
    assert s.g_inv[0, 0] == pytest.approx(0.255754, abs=1e-6)
    assert _point(WarpingFunction("constant", 1.0), 0.0, np.sqrt(0.75)).v == pytest.approx(2.0)
    assert _point(WarpingFunction("constant", 1.0), 0.0, np.sqrt(0.99)).v == pytest.approx(10.0)
    flat = _point(WarpingFunction("sinusoidal", 2.0, 0.5), 0.0, 0.0)
    assert flat.v == 1.0 and flat.g[0, 0] == pytest.approx(4.0)


def test_spacelike_guard():
    w = WarpingFunction("constant", 1.0)
    with pytest.raises(NotSpacelikeError, match="space-like"):
        _point(w, 0.0, 1.0)
    with pytest.raises(NotSpacelikeError):
        _point(w, 0.0, 1.5)
    with pytest.raises(NotSpacelikeError):
        _point(w, 0.0, np.sqrt(1 - 1e-7))  # inside the margin
    mesh = make_mesh(1, "periodic", 32, 1.0)
    u = 0.5 * np.sin(2 * np.pi * mesh.coords[0])  # slope pi > 1
    with pytest.raises(NotSpacelikeError):
        induced_metric(mesh, w, u)
    with pytest.raises(NotSpacelikeError):
        build_snapshot(mesh, w, u)


def test_second_fundamental_form_examples():
    w = WarpingFunction("constant", 1.0)
    s = _point(w, 0.0, 0.0, 2.0)
    assert s.h[0, 0] == pytest.approx(-2.0) and s.H == pytest.approx(-2.0)
    s = _point(w, 0.0, 0.6, 1.0)  # v = 1.25, g = 0.64
    assert s.h[0, 0] == pytest.approx(-1.25)
    assert s.H == pytest.approx(-1.25 / 0.64)
    assert s.h_norm2 == pytest.approx(s.H ** 2)


@pytest.mark.parametrize("w", WARPS)
def test_constant_slice_curvature(w):
    mesh = make_mesh(2, "periodic", 8, 1.0)
    for c in (-1.0, 0.0, 0.7):
        s = build_snapshot(mesh, w, np.full(mesh.shape, c))
        f, fp, _ = w(c)
        assert np.allclose(s.v, 1.0)
        assert np.allclose(s.H, -2 * fp / f, atol=1e-14)
        assert np.allclose(s.h_norm2, 2 * (fp / f) ** 2, atol=1e-14)


def _h_error(n):
    mesh = make_mesh(1, "periodic", n, 2 * np.pi)
    w = WarpingFunction("constant", 1.0)
    expr = 0.2 * sp.sin(X)
    snap = build_snapshot(mesh, w, 0.2 * np.sin(mesh.coords[0]))
    x = mesh.coords[0]
    ux, uxx = 0.2 * np.cos(x), -0.2 * np.sin(x)
    h = -uxx / np.sqrt(1 - ux ** 2)
    H = -uxx / (1 - ux ** 2) ** 1.5
    exact = exact_snapshot(mesh, w, expr)
    assert np.allclose(exact.h[0, 0], h) and np.allclose(exact.H, H)
    return mesh.h, np.max(np.abs(snap.h[0, 0] - h)), np.max(np.abs(snap.H - H))


def test_second_fundamental_form_order():
    rows = [_h_error(n) for n in (32, 64, 128)]
    hs = [r[0] for r in rows]
    assert fitted_order(hs, [r[1] for r in rows]) >= 1.9
    assert fitted_order(hs, [r[2] for r in rows]) >= 1.9


def test_accessors_agree_with_snapshot():
    mesh = make_mesh(2, "periodic", 16, 1.0, "conformal", 0.05)
    w = WARPS[2]
    u = 0.05 * np.sin(2 * np.pi * mesh.coords[0]) * np.cos(2 * np.pi * mesh.coords[1])
    s = build_snapshot(mesh, w, u)
    assert np.array_equal(inverse_metric(mesh, w, u), s.g_inv)
    assert np.array_equal(gradient_function(mesh, w, u), s.v)
    assert np.array_equal(second_fundamental_form(mesh, w, u), s.h)
    H, hn = mean_curvature(s)
    assert np.array_equal(H, s.H) and np.array_equal(hn, s.h_norm2)
    assert np.allclose(induced_metric(mesh, w, u), s.g)


@given(st.integers(0, 2 ** 32 - 1))
def test_pointwise_invariants(seed):
    rng = np.random.default_rng(seed)
    warp, j, s = random_jets(rng, 50)
    m = s.m
    G = np.moveaxis(s.g, (0, 1), (-2, -1))
    Gi = np.moveaxis(s.g_inv, (0, 1), (-2, -1))
    assert np.allclose(G @ Gi, np.eye(m), atol=1e-8)
    assert np.all(np.linalg.eigvalsh(G)[..., 0] > 0)
    assert np.all(s.v >= 1 - 1e-12)
    # |h|^2 >= H^2 / m
    assert np.all(s.h_norm2 >= s.H ** 2 / m - 1e-9 * (1 + s.H ** 2))
    # V = -grad u is tangent data with g(V, V) = |grad u|^2 = v^2 |b|^2_{f^2 g~}
    VV = np.einsum("ij...,i...,j...->...", s.g, s.V, s.V)
    assert np.allclose(VV, s.grad_u_norm2, rtol=1e-8, atol=1e-10)
    assert np.allclose(s.V, -s.v ** 2 * s.b, rtol=1e-10, atol=1e-12)
    bb = s.f ** 2 * np.einsum("ij...,i...,j...->...", s.g_tilde, s.b, s.b)
    assert np.allclose(s.v ** 2 * (1 - bb), 1.0, rtol=1e-8)


def test_gradient_function_jet_matches_finite_differences():
    w = WARPS[4]
    errs, hs = [], []
    for n in (32, 64, 128):
        mesh = make_mesh(2, "periodic", n, 1.0, "conformal", 0.05)
        u = 0.08 * np.sin(2 * np.pi * mesh.coords[0]) * np.cos(2 * np.pi * mesh.coords[1])
        s = build_snapshot(mesh, w, u)
        errs.append(np.max(np.abs(partials(mesh, s.v) - s.dv_jet)))
        hs.append(mesh.h)
    assert fitted_order(hs, errs) >= 1.8


def test_h_cross_check_order():
    hs, errs = [], []
    for n in (32, 64, 128):
        mesh = make_mesh(2, "dirichlet-rectangle", n, 1.0, "conformal", 0.05)
        u = 0.1 * np.sin(np.pi * mesh.coords[0]) * np.sin(np.pi * mesh.coords[1])
        res = cross_check_h_via_induced_christoffels(mesh, WARPS[2], u)
        # nested one-sided stencils are first order on the outer two rows
        errs.append(np.max(np.abs(res[..., 2:-2, 2:-2])))
        hs.append(mesh.h)
    assert fitted_order(hs, errs) >= 1.8


def _symbolic_laplacian_oracle():
    # Laplace-Beltrami of the induced metric, -g^ij (psi_ij - G^k_ij psi_k), with G from
    # symbolic derivatives of g_ij = F(u)^2 exp(2 phi) delta_ij - u_i u_j
    a, b, om = 2.0, 0.5, 1.3
    u = 0.2 * sp.sin(X) * sp.cos(Y) + 0.1 * X
    phi = 0.15 * sp.sin(X + 2 * Y)
    psi = sp.cos(X) + X * Y ** 2
    F = a + b * sp.sin(om * u)
    du = [sp.diff(u, X), sp.diff(u, Y)]
    g = [[F ** 2 * sp.exp(2 * phi) * int(i == j) - du[i] * du[j] for j in range(2)] for i in range(2)]
    dg = [[[sp.diff(g[i][j], s) for j in range(2)] for i in range(2)] for s in (X, Y)]
    dpsi = [sp.diff(psi, s) for s in (X, Y)]
    d2psi = [[sp.diff(d, s) for s in (X, Y)] for d in dpsi]
    fg, fdg = sp.lambdify((X, Y), g), sp.lambdify((X, Y), dg)
    fd1, fd2 = sp.lambdify((X, Y), dpsi), sp.lambdify((X, Y), d2psi)

    def lap(x, y):
        out = []
        for p in zip(x, y):
            G = np.array(fg(*p), dtype=float)
            D = np.array(fdg(*p), dtype=float)  # D[a, i, j] = d_a g_ij
            Gi = np.linalg.inv(G)
            low = 0.5 * (np.einsum("ija->aij", D) + np.einsum("jia->aij", D) - D)
            gam = np.einsum("la,aij->lij", Gi, low)
            hess = np.array(fd2(*p), dtype=float) - np.einsum("kij,k->ij", gam, np.array(fd1(*p), dtype=float))
            out.append(-np.einsum("ij,ij->", Gi, hess))
        return np.array(out)

    return WarpingFunction("sinusoidal", a, b, om), u, phi, psi, lap


def test_induced_laplacian_matches_divergence_form():
    w, u, phi, psi, lap = _symbolic_laplacian_oracle()
    pts = np.array([[0.3, -0.4], [1.1, 0.9], [-2.0, 0.2], [0.0, 0.0]]).T

    class P:  # minimal mesh stand-in for analytic.jets
        m = 2
        coords = (pts[0], pts[1])
        shape = pts[0].shape

    uj, pj, sj = jets(P, u), jets(P, phi), jets(P, psi)
    g, gi, gam, ric = conformal_from_jets(*pj)
    snap = snapshot_from_jets(w, uj[0], uj[1], uj[2], g, gi, gam, ric)
    hess = sj[2] - np.einsum("kij...,k...->ij...", gam, sj[1])
    ours = induced_laplacian_from_jets(snap, sj[1], hess)
    assert np.allclose(ours, lap(*pts), rtol=1e-11, atol=1e-11)


@given(st.integers(0, 2 ** 32 - 1))
def test_laplacian_of_height_identity_on_random_jets(seed):
    # Delta u = v H + (f'/f)(m + v^2 - 1) holds exactly for any space-like 2-jet
    _, _, s = random_jets(np.random.default_rng(seed), 200)
    lap = induced_laplacian_from_jets(s, s.du, s.hess_tilde)
    rhs = s.v * s.H + s.fp / s.f * (s.m + s.v ** 2 - 1)
    assert np.allclose(lap, rhs, rtol=1e-9, atol=1e-9 * np.max(np.abs(rhs)))


def test_volume_and_norm_examples():
    s = _point(WarpingFunction("constant", 1.0), 0.0, np.sqrt(0.75))  # v = 2
    assert s.vol_density == pytest.approx(0.5)
    vc = volume_density(s)
    assert vc.max_abs_diff < 1e-15
    mn = metric_equivalence_constants(s)
    assert mn.g_in_tilde == pytest.approx(1 / 16) and mn.tilde_in_g == pytest.approx(16.0)
    assert mn.max_abs_diff < 1e-14


@given(st.integers(0, 2 ** 32 - 1))
def test_volume_and_norms_on_random_jets(seed):
    _, _, s = random_jets(np.random.default_rng(seed), 100)
    assert volume_density(s).max_abs_diff <= 1e-9 * np.max(s.vol_density)
    mn = metric_equivalence_constants(s)
    scale = max(np.max(mn.g_in_tilde_direct), np.max(mn.tilde_in_g_direct))
    assert mn.max_abs_diff <= 1e-9 * scale


@given(st.integers(0, 2 ** 32 - 1))
def test_tensor_pairing_bound(seed):
    rng = np.random.default_rng(seed)
    _, _, s = random_jets(rng, 100)
    m = s.m
    A = rng.normal(size=(m, m, 100))
    Y_, Z = rng.normal(size=(m, 100)), rng.normal(size=(m, 100))
    ok, lhs, rhs = tensor_pairing_bound_check(A, Y_, Z, s.g)
    assert ok
    # rank one tensors attain the bound
    A1 = np.einsum("ij...,j...,kl...,l...->ik...", s.g, Y_, s.g, Z)
    ok, lhs, rhs = tensor_pairing_bound_check(A1, Y_, Z, s.g)
    assert ok and np.allclose(lhs, rhs, rtol=1e-8)
    assert np.allclose(tensor_norm2(s.g, s.g_inv), m)


@given(st.integers(0, 2 ** 32 - 1))
def test_symbol_eigenvalue(seed):
    _, _, s = random_jets(np.random.default_rng(seed), 60)
    A = np.moveaxis(principal_symbol(s), (0, 1), (-2, -1))
    lam = max_symbol_eigenvalue(s)
    assert np.allclose(lam, np.linalg.eigvalsh(A)[..., -1], rtol=1e-10)
    assert np.allclose(A, np.moveaxis(s.v ** 2 * s.g_inv, (0, 1), (-2, -1)), rtol=1e-9)


def test_symbol_examples_and_monotonicity():
    w = WarpingFunction("constant", 1.0)
    assert max_symbol_eigenvalue(_point(w, 0.0, 0.0)) == pytest.approx(1.0)
    assert max_symbol_eigenvalue(_point(w, 0.0, np.sqrt(0.75))) == pytest.approx(16.0)  # 1/W^2
    vals = [max_symbol_eigenvalue(_point(w, 0.0, p)) for p in np.linspace(0, 0.95, 20)]
    assert np.all(np.diff(vals) > 0)
