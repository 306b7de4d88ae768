"""Closed-form degrees-of-freedom results and two-user DoF regions."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

STRATEGIES = ("rs", "zfbf", "tdma", "sumu")


def clamp_alpha(alpha):
    """Clamp a CSIT exponent into ``[0, 1]``; values above 1 already give full DoF."""
    if alpha > 1.0 or alpha < 0.0:
        warnings.warn(f"CSIT exponent {alpha} clamped to [0, 1]", stacklevel=3)
    return float(min(1.0, max(0.0, alpha)))


def _check_users(K):
    if int(K) != K or K < 1:
        raise DomainError(f"user count must be a positive integer, got {K}")


def rs_sum_dof(K, alpha):
    """Sum DoF of RS: ``K*alpha`` from private streams plus ``1 - alpha`` common."""
    _check_users(K)
    a = clamp_alpha(alpha)
    return K * a + (1.0 - a)


def zf_sum_dof(K, alpha):
    _check_users(K)
    return K * clamp_alpha(alpha)


def two_cell_dof(alpha):
    """Sum DoF of the two-cell, two-antenna coordinated setting."""
    a = clamp_alpha(alpha)
    return {"zf": 2.0 * a, "rs": 1.0 + a}


def convex_hull(points):
    """Counter-clockwise hull (monotone chain); tolerates collinear and
    repeated points, which degenerate regions such as ``alpha = 0`` produce."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class DofRegion:
    vertices: list
    strategy: str
    alpha: float

    def contains(self, d1, d2, tol=1e-12):
        """Vectorized point-in-polygon test (boundary counts as inside)."""
        d1, d2 = np.broadcast_arrays(np.asarray(d1, float), np.asarray(d2, float))
        V = self.vertices
        if len(V) == 1:
            return (np.abs(d1 - V[0][0]) <= tol) & (np.abs(d2 - V[0][1]) <= tol)
        if len(V) == 2:
            (x0, y0), (x1, y1) = V
            t = ((d1 - x0) * (x1 - x0) + (d2 - y0) * (y1 - y0)) / ((x1 - x0) ** 2 + (y1 - y0) ** 2)
            t = np.clip(t, 0.0, 1.0)
            return np.hypot(d1 - x0 - t * (x1 - x0), d2 - y0 - t * (y1 - y0)) <= tol
        inside = np.ones(d1.shape, dtype=bool)
        for (x0, y0), (x1, y1) in zip(V, V[1:] + V[:1]):
            inside &= (x1 - x0) * (d2 - y0) - (y1 - y0) * (d1 - x0) >= -tol
        return inside

    def max_sum(self):
        return max(x + y for x, y in self.vertices)


def dof_region_two_user(strategy, alpha) -> DofRegion:
    """Achievable two-user DoF polygon for ``strategy`` at CSIT exponent ``alpha``."""
    a = clamp_alpha(alpha)
    tdma = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    zfbf = [(0.0, 0.0), (a, 0.0), (0.0, a), (a, a)]
    if strategy == "tdma":
        pts = tdma
    elif strategy == "zfbf":
        pts = zfbf
    elif strategy == "sumu":
        pts = tdma + zfbf
    elif strategy == "rs":
        pts = tdma + [(1.0, a), (a, 1.0)]
    else:
        raise DomainError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return DofRegion(convex_hull(pts), strategy, a)


def region_rows(regions):
    for reg in regions:
        for i, (d1, d2) in enumerate(reg.vertices):
            yield {"strategy": reg.strategy, "alpha": reg.alpha, "vertex_index": i, "d1": d1, "d2": d2}


def write_regions_csv(regions, path):
    """Export polygon vertices with columns ``strategy,alpha,vertex_index,d1,d2``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "alpha", "vertex_index", "d1", "d2"])
        for r in region_rows(regions):
            w.writerow([r["strategy"], f"{r['alpha']:.17g}", r["vertex_index"],
                        f"{r['d1']:.17g}", f"{r['d2']:.17g}"])
