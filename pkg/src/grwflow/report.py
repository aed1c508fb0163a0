"""Decay fit and convergence verdict for a monitor series."""
from __future__ import annotations

import numpy as np

from .errors import MissingDataError

ZERO_TOL = 1e-13


def decay_fit(s, err):
    """Least-squares fit of log(err) = slope * s + intercept; returns (slope, intercept, r2, npts)."""
    s, err = np.asarray(s, dtype=float), np.asarray(err, dtype=float)
    keep = err > 0
    s, y = s[keep], np.log(err[keep])
    if s.size < 2:
        return None
    slope, intercept = np.polyfit(s, y, 1)
    resid = y - (slope * s + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2, int(s.size)


def summarize_series(data: np.ndarray, threshold: float = 1e-5) -> dict:
    """Verdict block for an array with the series columns (s first, sup|H - Hpre| fifth)."""
    if data.shape[0] < 10:
        raise MissingDataError(f"series has {data.shape[0]} rows; at least 10 are needed")
    s, err = data[:, 0], data[:, 4]
    out = {"rows": int(data.shape[0]), "threshold": threshold, "final_s": float(s[-1]),
           "final_sup_H_err": float(err[-1]), "fit": None}
    if np.all(err <= ZERO_TOL):
        out.update(converged=True, converged_at=float(s[0]), verdict=f"converged at s={s[0]:g}",
                   fit_skipped="series identically zero")
        return out
    tail = slice(data.shape[0] // 2, None)
    fit = decay_fit(s[tail], err[tail])
    if fit is None:
        out["fit_skipped"] = "fewer than two positive samples in the trailing half"
    else:
        slope, intercept, r2, npts = fit
        out["fit"] = {"slope": slope, "intercept": intercept, "r2": r2, "points": npts,
                      "window": [float(s[tail][0]), float(s[-1])]}
    below = np.nonzero(err <= threshold)[0]
    converged = bool(err[-1] <= threshold)
    out["converged"] = converged
    out["converged_at"] = float(s[below[0]]) if converged and below.size else None
    out["verdict"] = (f"converged at s={out['converged_at']:g}" if converged else
                      f"not converged (final sup|H - Hpre| = {err[-1]:.3e} > {threshold:g})")
    return out
