"""Warping functions and the ambient geometry of -dt^2 + f(t)^2 g~.

Index convention for Christoffel tables: ``gamma[k, i, j]`` is the symbol
with upper index k and lower indices i, j. Ambient tables use index 0 for the
time direction and 1..m for the base coordinates. Tensor fields carry their
index axes first and grid axes last, so every routine here works on a single
point as well as on whole grids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParametersError

WARP_KINDS = ("constant", "sinusoidal", "tanh")


@dataclass(frozen=True)
class WarpingFunction:
    """Scale factor f from a closed catalog with exact derivatives.

    kinds: ``constant`` (f = a), ``sinusoidal`` (a + b sin(omega t)) and
    ``tanh`` (a + b tanh t). Positivity requires a > |b| for the last two.
    """

    kind: str
    a: float
    b: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        if self.kind not in WARP_KINDS:
            raise InvalidParametersError(
                f"unsupported warp kind {self.kind!r}; catalog is {WARP_KINDS} "
                "(cosh/exponential profiles have unbounded derivatives)")
        vals = (self.a, self.b, self.omega)
        if not all(np.isfinite(x) for x in vals):
            raise InvalidParametersError("warp parameters must be finite")
        if self.kind == "constant":
            if self.a <= 0:
                raise InvalidParametersError("constant warp needs a > 0")
        elif self.a <= abs(self.b):
            raise InvalidParametersError(f"{self.kind} warp needs a > |b| for positivity")

    def __call__(self, t):
        return eval_warp(self, t)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.b == 0.0 or (self.kind == "sinusoidal" and self.omega == 0.0)

    @property
    def c1(self) -> float:
        """Lower bound of f."""
        if self.kind == "constant":
            return float(self.a)
        return float(self.a - abs(self.b))

    @property
    def c2(self) -> float:
        """Upper bound of |f'/f|."""
        a, b, w = self.a, abs(self.b), abs(self.omega)
        if self.kind == "constant" or b == 0.0:
            return 0.0
        if self.kind == "sinusoidal":
            # max over theta of b w |cos| / (a + b sin) is attained at sin = -b/a
            return float(b * w / np.sqrt(a * a - b * b))
        # y = tanh t in (-1, 1): maximise (1 - y^2)/(a + b y)
        ys = _real_roots_in_open_unit([b, 2 * a, b])
        return float(b * max((1 - y * y) / (a + b * y) for y in ys)) if ys else 0.0

    @property
    def c3(self) -> float:
        """Upper bound of |f''/f|."""
        a, b, w = self.a, abs(self.b), abs(self.omega)
        if self.kind == "constant" or b == 0.0:
            return 0.0
        if self.kind == "sinusoidal":
            return float(b * w * w / (a - b))
        # |f''/f| = 2 b |y| (1 - y^2) / (a + b y) up to the sign of b;
        # stationary points solve a - 3 a y^2 - 2 b y^3 = 0 (and its mirror)
        best = 0.0
        for sb in (b, -b):
            for y in _real_roots_in_open_unit([-2 * sb, -3 * a, 0.0, a]):
                best = max(best, abs(2 * sb * y * (1 - y * y) / (a + sb * y)))
        return float(best)


def _real_roots_in_open_unit(coeffs):
    roots = np.roots(coeffs)
    return [float(r.real) for r in roots if abs(r.imag) < 1e-12 and -1 < r.real < 1]


def eval_warp(w: WarpingFunction, t):
    """Return (f, f', f'') at t (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if w.kind == "constant":
        return np.full_like(t, w.a), np.zeros_like(t), np.zeros_like(t)
    if w.kind == "sinusoidal":
        s, c = np.sin(w.omega * t), np.cos(w.omega * t)
        return w.a + w.b * s, w.b * w.omega * c, -w.b * w.omega ** 2 * s
    th = np.tanh(t)
    sech2 = 1.0 - th * th
    return w.a + w.b * th, w.b * sech2, -2.0 * w.b * th * sech2


def ambient_christoffels(w: WarpingFunction, t, g_tilde, gamma_tilde):
    """Christoffel table of the GRW metric at (t, x).

    g_tilde has shape (m, m, ...) and gamma_tilde (m, m, m, ...).
    """
    g_tilde = np.asarray(g_tilde, dtype=float)
    m = g_tilde.shape[0]
    f, fp, _ = eval_warp(w, t)
    out = np.zeros((m + 1, m + 1, m + 1) + g_tilde.shape[2:])
    out[0, 1:, 1:] = f * fp * g_tilde
    ratio = fp / f
    for k in range(m):
        out[k + 1, 0, k + 1] = ratio
        out[k + 1, k + 1, 0] = ratio
    out[1:, 1:, 1:] = gamma_tilde
    return out


@dataclass
class AmbientCurvature:
    """Non-trivial Ricci and Riemann components of the GRW metric."""

    ric_tt: np.ndarray
    ric_ti: np.ndarray
    ric_ij: np.ndarray
    riem_0ij0: np.ndarray

    def matrix(self) -> np.ndarray:
        """Full (m+1)x(m+1) Ricci matrix, time index first."""
        m = self.ric_ij.shape[0]
        out = np.zeros((m + 1, m + 1) + np.shape(self.ric_tt))
        out[0, 0] = self.ric_tt
        out[0, 1:] = self.ric_ti
        out[1:, 0] = self.ric_ti
        out[1:, 1:] = self.ric_ij
        return out


def ambient_ricci(w: WarpingFunction, t, g_tilde, ric_tilde) -> AmbientCurvature:
    g_tilde = np.asarray(g_tilde, dtype=float)
    m = g_tilde.shape[0]
    f, fp, fpp = eval_warp(w, t)
    ric_tt = -m * fpp / f * np.ones(g_tilde.shape[2:])
    ric_ij = np.asarray(ric_tilde, dtype=float) + (f * fpp + (m - 1) * fp * fp) * g_tilde
    return AmbientCurvature(
        ric_tt=ric_tt,
        ric_ti=np.zeros((m,) + g_tilde.shape[2:]),
        ric_ij=ric_ij,
        riem_0ij0=-f * fpp * g_tilde,
    )


@dataclass
class TimelikeReport:
    min_value: float
    max_value: float
    n_samples: int
    mode: str
    passed: bool
    verdict: str  # positive | nonnegative | mixed-sign | negative


def check_timelike_convergence(w: WarpingFunction, mesh, t_range, n_samples: int,
                               mode: str = "strict", seed: int = 0, tol: float = 1e-12) -> TimelikeReport:
    """Sample Ric(X, X) over random timelike X = d_t + a^i d_i.

    Each sample picks a time in ``t_range``, a mesh node and a g~-unit spatial
    direction; the spatial part is scaled so that f^2 |a|^2 runs over [0, 1),
    i.e. g(X, X) ranges over (-1, 0]. The first sample is the pure time
    direction at the lower end of ``t_range``; the last one sits at the upper end.
    """
    if n_samples < 1:
        raise InvalidParametersError("n_samples must be >= 1")
    if mode not in ("strict", "nonneg"):
        raise InvalidParametersError(f"unknown timelike mode {mode!r}")
    rng = np.random.default_rng(seed)
    m = mesh.m
    g_nodes = mesh.g.reshape(m, m, -1)
    ric_nodes = mesh.ricci.reshape(m, m, -1)
    n_nodes = g_nodes.shape[-1]

    ts = rng.uniform(t_range[0], t_range[1], n_samples)
    ts[0] = t_range[0]
    if n_samples > 1:
        ts[-1] = t_range[1]
    idx = rng.integers(0, n_nodes, n_samples)
    dirs = rng.normal(size=(n_samples, m))
    frac = rng.uniform(0.0, 1.0, n_samples)
    frac[0] = 0.0
    vals = np.empty(n_samples)
    for k in range(n_samples):
        g = g_nodes[:, :, idx[k]]
        curv = ambient_ricci(w, ts[k], g, ric_nodes[:, :, idx[k]])
        f = eval_warp(w, ts[k])[0]
        d = dirs[k] / np.sqrt(dirs[k] @ g @ dirs[k])
        a = d * np.sqrt(frac[k]) / f
        x = np.concatenate(([1.0], a))
        vals[k] = x @ curv.matrix() @ x
    lo, hi = float(vals.min()), float(vals.max())
    if lo > 0:
        verdict = "positive"
    elif lo >= -tol:
        verdict = "nonnegative"
    elif hi > tol:
        verdict = "mixed-sign"
    else:
        verdict = "negative"
    passed = lo > 0 if mode == "strict" else lo >= -tol
    return TimelikeReport(lo, hi, n_samples, mode, passed, verdict)


def ricci_from_christoffel_field(christoffel_at, point, step: float) -> np.ndarray:
    """Ricci tensor assembled from a Christoffel table field by central differences.

    ``christoffel_at(point)`` returns the table at a coordinate point (shape
    (n, n, n)). Uses R_bc = d_a G^a_bc - d_b G^a_ac + G^e_bc G^a_ae - G^e_ac G^a_be.
    """
    point = np.asarray(point, dtype=float)
    n = point.size
    gam = christoffel_at(point)
    dgam = np.zeros((n,) + gam.shape)
    for a in range(n):
        e = np.zeros(n)
        e[a] = step
        dgam[a] = (christoffel_at(point + e) - christoffel_at(point - e)) / (2 * step)
    term1 = np.einsum("aabc->bc", dgam)
    term2 = np.einsum("baac->bc", dgam)
    term3 = np.einsum("ebc,aae->bc", gam, gam)
    term4 = np.einsum("eac,abe->bc", gam, gam)
    return term1 - term2 + term3 - term4
