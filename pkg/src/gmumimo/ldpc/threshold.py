"""Decoding threshold of a group of transfer curves against a channel."""

from __future__ import annotations

import numpy as np

from ..channel import SnrPoint
from ..se import TransferPair
from ..errors import ParameterError

INFEASIBLE = float("inf")


def _group_average(curves, grid: np.ndarray) -> np.ndarray:
    vals = np.zeros(grid.size)
    for c in curves:
        vals += np.asarray(c(grid), dtype=float)
    return vals / len(curves)


def se_threshold(
    group_curves,
    spectrum: np.ndarray,
    n: int,
    lo_db: float = -5.0,
    hi_db: float = 15.0,
    resolution_db: float = 0.01,
    margin: float = 0.0,
    tail_tol: float = 1e-3,
    scan_points: int = 1500,
) -> float:
    """Smallest snr (dB) at which the group-averaged curve clears varphi_L.

    Feasibility at a candidate snr requires the averaged curve to sit below
    varphi_L by at least `margin` on (0, snr) and to have decayed below
    `tail_tol` at and beyond snr.  Returns +inf when even `hi_db` fails.
    """
    if not group_curves:
        raise ParameterError("need at least one transfer curve")
    lo_grid = np.geomspace(1e-4, 10 ** (hi_db / 10.0) * 1.2, scan_points)
    avg = _group_average(group_curves, lo_grid)

    def feasible(db: float) -> bool:
        snr = 10.0 ** (db / 10.0)
        pair = TransferPair(spectrum, n, SnrPoint.from_db(db))
        inside = lo_grid < snr
        varphi = pair.varphi_L_approx(lo_grid[inside])
        if np.any(avg[inside] >= varphi - margin):
            return False
        if np.any(avg[~inside] > tail_tol):
            return False
        # confirm the tightest nodes against the exact transfer
        gaps = varphi - avg[inside]
        for idx in np.argsort(gaps)[:8]:
            r = lo_grid[inside][idx]
            if avg[inside][idx] >= pair.varphi_L(float(r)) - margin:
                return False
        return True

    if feasible(lo_db):
        return lo_db
    if not feasible(hi_db):
        return INFEASIBLE
    lo, hi = lo_db, hi_db
    while hi - lo > resolution_db:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
