import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from grwflow.graph import snapshot_from_jets
from grwflow.warp import WarpingFunction

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WARPS = [
    WarpingFunction("constant", 1.0),
    WarpingFunction("constant", 1.7),
    WarpingFunction("sinusoidal", 2.0, 0.5, 1.0),
    WarpingFunction("sinusoidal", 1.2, -0.9, 2.3),
    WarpingFunction("tanh", 2.0, 1.0),
    WarpingFunction("tanh", 0.8, -0.5),
]


def fitted_order(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _batch_last(a):
    return np.moveaxis(a, 0, -1)


def random_jets(rng, n, m=None, warp=None, tilt=0.95, hpre=False):
    """A batch of n independent random space-like 2-jets over random base data.

    Returns (warp, jets dict, snapshot). The base metric is a random SPD
    matrix, its Christoffel symbols come from random metric derivatives, and
    the gradient is scaled to a random fraction (< tilt) of the light cone.
    """
    m = m if m is not None else int(rng.integers(1, 3))
    warp = warp if warp is not None else WARPS[int(rng.integers(len(WARPS)))]
    A = rng.normal(size=(n, m, m))
    g = np.einsum("nij,nkj->nik", A, A) + 0.3 * np.eye(m)
    dg = rng.normal(scale=0.5, size=(n, m, m, m))  # dg[n, a, i, j] = d_a g_ij
    dg = 0.5 * (dg + np.swapaxes(dg, 2, 3))
    low = 0.5 * (np.einsum("nijk->nkij", dg) + np.einsum("njik->nkij", dg) - dg)
    ginv = np.linalg.inv(g)
    gam = np.einsum("nlk,nkij->nlij", ginv, low)
    R = rng.normal(size=(n, m, m))
    ric = 0.5 * (R + np.swapaxes(R, 1, 2))
    u = rng.uniform(-3, 3, n)
    f = warp(u)[0]
    d = rng.normal(size=(n, m))
    norm = np.sqrt(np.einsum("ni,nij,nj->n", d, ginv, d))
    frac = rng.uniform(0, tilt, n)
    du = d / norm[:, None] * (frac * f)[:, None]
    S = rng.normal(scale=2.0, size=(n, m, m))
    d2u = 0.5 * (S + np.swapaxes(S, 1, 2))
    jets = dict(u=u, du=_batch_last(du), d2u=_batch_last(d2u), g=_batch_last(g), ginv=_batch_last(ginv),
                gam=_batch_last(gam), ric=_batch_last(ric), dg=_batch_last(dg))
    snap = snapshot_from_jets(warp, jets["u"], jets["du"], jets["d2u"], jets["g"], jets["ginv"],
                              jets["gam"], jets["ric"])
    if hpre:
        jets["hpre"] = rng.normal(size=n)
        jets["dhpre"] = rng.normal(size=(m, n))
    return warp, jets, snap


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
