"""Power-law slope fitting for convergence curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NotPositive


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    window: tuple


def fit_rate(ks, values, window=None) -> RateFit:
    """Least-squares fit of log(value) vs log(k) over a window [k_lo, k_hi].

    Returns the slope (the empirical rate exponent), log-space intercept,
    and r^2 of the fit.
    """
    ks = np.asarray(ks, dtype=float)
    vs = np.asarray(values, dtype=float)
    if window is not None:
        lo, hi = window
        mask = (ks >= lo) & (ks <= hi)
    else:
        mask = ks > 0
    mask &= ks > 0
    ks, vs = ks[mask], vs[mask]
    if len(ks) < 8:
        raise InsufficientData(
            f"need >= 8 checkpoints in the fit window, got {len(ks)}")
    if np.any(vs <= 0):
        raise NotPositive("curve has nonpositive values inside the fit window")
    lx, ly = np.log(ks), np.log(vs)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=r2, n_points=len(ks),
                   window=(float(ks.min()), float(ks.max())))


def fit_rate_csv(path, window=None, column: str = "lyapunov") -> RateFit:
    """fit_rate applied to one column of a curve CSV (header row required)."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    if column not in (data.dtype.names or ()):
        raise InsufficientData(f"column {column!r} not present in {path}")
    return fit_rate(data["k"], data[column], window=window)
