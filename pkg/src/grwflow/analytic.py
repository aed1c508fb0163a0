"""Closed-form test fields with exact derivatives (via sympy)."""
from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import InvalidParametersError
from .graph import GeometrySnapshot, snapshot_from_jets
from .mesh import BaseMesh, conformal_from_jets

X, Y = sp.symbols("x y", real=True)
SYMBOLS = (X, Y)
INIT_KINDS = ("constant", "bump", "sine", "cap")


def jets(mesh: BaseMesh, expr):
    """Values, gradient (m, *grid) and coordinate Hessian (m, m, *grid) of ``expr`` on the nodes."""
    syms = SYMBOLS[:mesh.m]
    grad = [sp.diff(expr, s) for s in syms]
    hess = [[sp.diff(gi, s) for s in syms] for gi in grad]

    def ev(e):
        fn = sp.lambdify(syms, e, "numpy")
        return np.broadcast_to(np.asarray(fn(*mesh.coords), dtype=float), mesh.shape).copy()

    return ev(expr), np.stack([ev(e) for e in grad]), np.stack([np.stack([ev(e) for e in row]) for row in hess])


def default_phi_expr(mesh: BaseMesh, amplitude: float):
    """Conformal factor A * sum_i sin(2 pi x_i / L_i), matching ``make_mesh``."""
    return amplitude * sum(sp.sin(2 * sp.pi * s / L) for s, L in zip(SYMBOLS[:mesh.m], mesh.lengths))


def exact_snapshot(mesh: BaseMesh, warp, u_expr, phi_expr=None, eps_sl: float = 1e-6) -> GeometrySnapshot:
    """Snapshot from exact derivatives of ``u_expr`` (and of the conformal factor)."""
    u, du, d2u = jets(mesh, u_expr)
    if mesh.metric_kind == "conformal":
        if phi_expr is None:
            raise InvalidParametersError("conformal mesh needs the exact conformal factor expression")
        g, gi, gam, ric = conformal_from_jets(*jets(mesh, phi_expr))
    else:
        g, gi, gam, ric = mesh.g, mesh.g_inv, mesh.christoffel, mesh.ricci
    return snapshot_from_jets(warp, u, du, d2u, g, gi, gam, ric, eps_sl)


def init_expression(mesh: BaseMesh, kind: str, amplitude: float = 0.0, center=None,
                    width: float | None = None, level: float = 0.0):
    """Initial height profile as a sympy expression.

    constant: level + amplitude. bump: smooth bump of the given width around
    ``center`` (periodic von Mises profile on the torus, Gaussian on the
    rectangle). sine: product of sines (full periods on the torus, half
    periods vanishing on the rectangle boundary). cap: average of concave
    parabolas in each coordinate, zero at the rectangle faces and
    ``amplitude`` at the centre; its mean curvature is positive everywhere.
    """
    if kind not in INIT_KINDS:
        raise InvalidParametersError(f"unknown initial profile {kind!r}")
    syms = SYMBOLS[:mesh.m]
    Ls = mesh.lengths
    if center is None:
        center = [L / 2 for L in Ls]
    if width is None:
        width = min(Ls) / 8
    if kind == "constant":
        shape = sp.Integer(1)
    elif kind == "bump":
        if mesh.periodic:
            parts = []
            for s, c, L in zip(syms, center, Ls):
                kappa = (L / (2 * sp.pi * width)) ** 2
                parts.append(kappa * (sp.cos(2 * sp.pi * (s - c) / L) - 1))
            shape = sp.exp(sum(parts))
        else:
            shape = sp.exp(-sum((s - c) ** 2 for s, c in zip(syms, center)) / (2 * width ** 2))
    elif kind == "sine":
        k = 2 if mesh.periodic else 1
        shape = sp.Mul(*[sp.sin(k * sp.pi * s / L) for s, L in zip(syms, Ls)])
    else:
        if mesh.periodic:
            raise InvalidParametersError("the cap profile needs the dirichlet-rectangle topology")
        shape = sum(4 * s * (L - s) / L ** 2 for s, L in zip(syms, Ls)) / mesh.m
    return level + amplitude * shape


def evaluate(mesh: BaseMesh, expr) -> np.ndarray:
    fn = sp.lambdify(SYMBOLS[:mesh.m], expr, "numpy")
    return np.broadcast_to(np.asarray(fn(*mesh.coords), dtype=float), mesh.shape).copy()
