"""Structured-grid discretisation of the base manifold (M, g~).

Fields are numpy arrays whose trailing ``m`` axes are grid axes. Covectors
have shape (m, *grid) and matrices (m, m, *grid). All derivative stencils
are second order; rectangles use one-sided second-order stencils on the
boundary rows.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParametersError, WrongTopologyError

TOPOLOGIES = ("periodic", "dirichlet-rectangle")
METRICS = ("flat", "conformal")


@dataclass(eq=False)
class BaseMesh:
    m: int
    topology: str
    n: int
    lengths: tuple
    metric_kind: str = "flat"
    phi: np.ndarray | None = None
    spacing: tuple = field(init=False)
    coords: tuple = field(init=False)
    g: np.ndarray = field(init=False)
    g_inv: np.ndarray = field(init=False)
    christoffel: np.ndarray = field(init=False)
    ricci: np.ndarray = field(init=False)
    x_bdy: np.ndarray | None = field(init=False)
    interior: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.m not in (1, 2):
            raise InvalidParametersError("mesh dimension m must be 1 or 2")
        if self.topology not in TOPOLOGIES:
            raise InvalidParametersError(f"unknown topology {self.topology!r}")
        if self.metric_kind not in METRICS:
            raise InvalidParametersError(f"unknown metric kind {self.metric_kind!r}")
        if int(self.n) != self.n or self.n < 4:
            raise InvalidParametersError("need at least 4 nodes per axis")
        lengths = tuple(float(x) for x in np.broadcast_to(self.lengths, (self.m,)))
        if any(not np.isfinite(x) or x <= 0 for x in lengths):
            raise InvalidParametersError("axis lengths must be positive")
        self.lengths = lengths
        div = self.n if self.periodic else self.n - 1
        self.spacing = tuple(x / div for x in lengths)
        axes = [np.arange(self.n) * h for h in self.spacing]
        self.coords = tuple(np.meshgrid(*axes, indexing="ij"))

        if self.metric_kind == "flat":
            eye = np.eye(self.m).reshape((self.m, self.m) + (1,) * self.m)
            self.g = np.broadcast_to(eye, (self.m, self.m) + self.shape).copy()
            self.g_inv = self.g.copy()
            self.christoffel = np.zeros((self.m,) * 3 + self.shape)
            self.ricci = np.zeros((self.m,) * 2 + self.shape)
            self.phi = None
        else:
            if self.phi is None:
                raise InvalidParametersError("conformal metric needs a factor field phi")
            self.phi = np.asarray(self.phi, dtype=float)
            if self.phi.shape != self.shape:
                raise InvalidParametersError("phi shape does not match the grid")
            self.g, self.g_inv, self.christoffel, self.ricci = conformal_geometry(self, self.phi)

        if self.periodic:
            self.x_bdy = None
            self.interior = np.ones(self.shape, dtype=bool)
        else:
            dist = [np.minimum(c, L - c) for c, L in zip(self.coords, self.lengths)]
            self.x_bdy = np.minimum.reduce(dist) if self.m > 1 else dist[0]
            self.x_bdy = np.where(self.x_bdy < 1e-12 * max(self.lengths), 0.0, self.x_bdy)
            self.interior = np.zeros(self.shape, dtype=bool)
            self.interior[(slice(1, -1),) * self.m] = True

    @property
    def periodic(self) -> bool:
        return self.topology == "periodic"

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.m

    @property
    def h(self) -> float:
        return min(self.spacing)

    def descriptor(self) -> dict:
        return {"m": self.m, "topology": self.topology, "n": self.n,
                "lengths": self.lengths, "metric": self.metric_kind}


def make_mesh(m: int, topology: str, n: int, L=1.0, metric: str = "flat",
              phi_amplitude: float = 0.0, phi=None) -> BaseMesh:
    """Build a mesh; a conformal metric defaults to phi = A * sum_i sin(2 pi x_i / L_i)."""
    if metric == "conformal" and phi is None:
        probe = BaseMesh(m, topology, n, L)
        phi = phi_amplitude * sum(np.sin(2 * np.pi * c / Li) for c, Li in zip(probe.coords, probe.lengths))
    elif callable(phi):
        probe = BaseMesh(m, topology, n, L)
        phi = phi(*probe.coords)
    return BaseMesh(m, topology, n, L, metric, phi)


# ---------------------------------------------------------------- stencils

def diff1(mesh: BaseMesh, u, axis: int) -> np.ndarray:
    """First derivative along grid axis ``axis`` (0-based)."""
    u = np.asarray(u, dtype=float)
    ax = u.ndim - mesh.m + axis
    h = mesh.spacing[axis]
    if mesh.periodic:
        return (np.roll(u, -1, ax) - np.roll(u, 1, ax)) / (2 * h)
    v = np.moveaxis(u, ax, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    # written as sums of differences so that constants give exactly zero
    out[0] = (4 * (v[1] - v[0]) - (v[2] - v[0])) / (2 * h)
    out[-1] = (4 * (v[-1] - v[-2]) - (v[-1] - v[-3])) / (2 * h)
    return np.moveaxis(out, 0, ax)


def diff2(mesh: BaseMesh, u, axis: int) -> np.ndarray:
    """Pure second derivative along grid axis ``axis``."""
    u = np.asarray(u, dtype=float)
    ax = u.ndim - mesh.m + axis
    h2 = mesh.spacing[axis] ** 2
    if mesh.periodic:
        return ((np.roll(u, -1, ax) - u) - (u - np.roll(u, 1, ax))) / h2
    v = np.moveaxis(u, ax, 0)
    out = np.empty_like(v)
    out[1:-1] = ((v[2:] - v[1:-1]) - (v[1:-1] - v[:-2])) / h2
    out[0] = (2 * (v[0] - v[1]) - 3 * (v[1] - v[2]) + (v[2] - v[3])) / h2
    out[-1] = (2 * (v[-1] - v[-2]) - 3 * (v[-2] - v[-3]) + (v[-3] - v[-4])) / h2
    return np.moveaxis(out, 0, ax)


def partials(mesh: BaseMesh, u) -> np.ndarray:
    """Coordinate gradient, shape (m, *u.shape)."""
    return np.stack([diff1(mesh, u, a) for a in range(mesh.m)])


def second_partials(mesh: BaseMesh, u) -> np.ndarray:
    """Coordinate Hessian, shape (m, m, *u.shape). Mixed entries use the cross stencil."""
    u = np.asarray(u, dtype=float)
    m = mesh.m
    out = np.empty((m, m) + u.shape)
    for a in range(m):
        out[a, a] = diff2(mesh, u, a)
    if m == 2:
        out[0, 1] = out[1, 0] = diff1(mesh, diff1(mesh, u, 1), 0)
    return out


# ---------------------------------------------------------------- geometry

def conformal_from_jets(phi, dphi, d2phi):
    """Metric data of exp(2 phi) delta from the 0-, 1- and 2-jets of phi."""
    phi = np.asarray(phi, dtype=float)
    m = dphi.shape[0]
    grid = phi.shape
    eye = np.eye(m).reshape((m, m) + (1,) * len(grid))
    e2 = np.exp(2 * phi)
    g = eye * e2
    g_inv = eye / e2
    gamma = np.zeros((m, m, m) + grid)
    for k in range(m):
        for i in range(m):
            for j in range(m):
                val = np.zeros(grid)
                if k == i:
                    val = val + dphi[j]
                if k == j:
                    val = val + dphi[i]
                if i == j:
                    val = val - dphi[k]
                gamma[k, i, j] = val
    lap0 = sum(d2phi[a, a] for a in range(m))
    grad2 = sum(dphi[a] ** 2 for a in range(m))
    ric = -(m - 2) * (d2phi - dphi[:, None] * dphi[None, :]) - eye * (lap0 + (m - 2) * grad2)
    return g, g_inv, gamma, ric


def conformal_geometry(mesh: BaseMesh, phi):
    """(g~, g~^-1, Christoffels, Ricci) of exp(2 phi) delta from discrete derivatives of phi."""
    phi = np.asarray(phi, dtype=float)
    return conformal_from_jets(phi, partials(mesh, phi), second_partials(mesh, phi))


def tilde_gradient(mesh: BaseMesh, u):
    """Return (covariant u_i, contravariant g~^ij u_j)."""
    du = partials(mesh, u)
    return du, np.einsum("ij...,j...->i...", mesh.g_inv, du)


def tilde_hessian(mesh: BaseMesh, u) -> np.ndarray:
    """Covariant Hessian u_ij - G~^k_ij u_k."""
    du = partials(mesh, u)
    return second_partials(mesh, u) - np.einsum("kij...,k...->ij...", mesh.christoffel, du)


def tilde_laplacian(mesh: BaseMesh, u) -> np.ndarray:
    """Positive Laplace-Beltrami operator of g~: -g~^ij (u_ij - G~^k_ij u_k)."""
    return -np.einsum("ij...,ij...->...", mesh.g_inv, tilde_hessian(mesh, u))


def tilde_norm2(mesh: BaseMesh, du) -> np.ndarray:
    return np.einsum("ij...,i...,j...->...", mesh.g_inv, du, du)


# ---------------------------------------------------------------- diagnostics

def holder_seminorm(mesh: BaseMesh, u, alpha: float, radius: float) -> float:
    """max |u(p) - u(q)| / d(p, q)^alpha over node pairs with 0 < d(p, q) <= radius.

    d is the length of the coordinate displacement measured with the average
    of g~ at the two nodes (minimum image on the torus).
    """
    if not 0 < alpha < 1:
        raise InvalidParametersError("Hoelder exponent must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    lam_min = float(np.min(np.linalg.eigvalsh(np.moveaxis(mesh.g, (0, 1), (-2, -1)))))
    reach = [int(np.ceil(radius / (h * np.sqrt(lam_min)))) for h in mesh.spacing]
    if mesh.periodic:
        reach = [min(r, mesh.n // 2) for r in reach]
    else:
        reach = [min(r, mesh.n - 1) for r in reach]
    best = 0.0
    for off in itertools.product(*[range(-r, r + 1) for r in reach]):
        if not any(off) or _later_half(off):
            continue
        u2, g1, g2 = _shifted_pairs(mesh, u, off)
        dx = np.array(off, dtype=float) * np.array(mesh.spacing)
        gm = 0.5 * (g1 + g2)
        dist = np.sqrt(np.einsum("i,j,ij...->...", dx, dx, gm))
        u1 = _trim(mesh, u, off)
        ok = dist <= radius
        if np.any(ok):
            q = np.abs(u2 - u1)[ok] / dist[ok] ** alpha
            best = max(best, float(q.max()))
    return best


def _later_half(off) -> bool:
    # each unordered pair is visited once: keep offsets whose first non-zero entry is positive
    for o in off:
        if o:
            return o < 0
    return False


def _trim(mesh, arr, off):
    if mesh.periodic:
        return arr
    sl = tuple(slice(max(0, -o), mesh.n - max(0, o)) for o in off)
    return arr[(Ellipsis,) + sl]


def _shifted_pairs(mesh, u, off):
    if mesh.periodic:
        axes = tuple(range(-mesh.m, 0))
        shift = tuple(-o for o in off)
        return (np.roll(u, shift, axes), mesh.g, np.roll(mesh.g, shift, axes))
    sl = tuple(slice(max(0, o), mesh.n + min(0, o)) for o in off)
    return u[sl], _trim(mesh, mesh.g, off), mesh.g[(Ellipsis,) + sl]


def weighted_sup_norm(mesh: BaseMesh, u, eps: float) -> float:
    """sup x_bdy^eps |u| with x_bdy the distance to the rectangle boundary."""
    if mesh.periodic:
        raise WrongTopologyError("weighted sup-norm needs the dirichlet-rectangle topology")
    return float(np.max(np.power(mesh.x_bdy, eps) * np.abs(np.asarray(u, dtype=float))))
