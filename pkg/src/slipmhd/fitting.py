"""Least-squares power-law fits on log-log data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RateFit", "fit_rate"]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n: int

    def predict(self, x):
        return math.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_rate(points) -> RateFit:
    """Fit y = C x^s by ordinary least squares on (log x, log y)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected (x, y) pairs")
    if len(pts) < 3:
        raise ValueError("need at least three points for a rate fit")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("rate fits need positive finite data")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("x values are all equal")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, len(pts))
