"""Degree-distribution search against a target decoder curve.

Differential evolution over the variable-edge simplex with the check side
fixed; candidates are scored by the cheap density-evolution curve and the
winner is re-scored by Monte-Carlo measurement.  The goal is the largest
design rate whose curve stays below the target everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import differential_evolution

from ..constellation import Constellation, MmseCurve, make_constellation
from ..errors import ParameterError
from .degrees import DegreeDistribution, design_rate
from .dens_evo import ga_de_curve
from .measure import TransferCurveEstimate, measure_transfer_curve

_MIN_FRACTION = 5e-3


@dataclass(frozen=True)
class OptimizedDegrees:
    dd: DegreeDistribution
    rate: float
    feasible: bool
    fitness: float
    measured: TransferCurveEstimate | None = None


def _support(d_v_max: int) -> list[int]:
    base = [2, 3, 4, 6, 8, 12, 20, 35, 60, 100, 200, 400, 700, 1000]
    return [d for d in base if d <= d_v_max] or [2, min(3, d_v_max)]


def _candidate(weights: np.ndarray, support, mu_fixed) -> DegreeDistribution | None:
    w = np.maximum(np.asarray(weights, dtype=float), 0.0)
    if w.sum() <= 0:
        return None
    w = w / w.sum()
    lam = {d: float(f) for d, f in zip(support, w) if f >= _MIN_FRACTION}
    total = sum(lam.values())
    if not lam:
        return None
    lam = {d: f / total for d, f in lam.items()}
    dd = DegreeDistribution(lam=lam, mu=dict(mu_fixed))
    if design_rate(dd) <= 0.0 or design_rate(dd) >= 1.0:
        return None
    return dd


def optimize_degrees(
    target: MmseCurve,
    mu_fixed: dict[int, float],
    d_v_max: int,
    n_eval: int,
    budget: int,
    seed: int,
    constellation: Constellation | None = None,
    measure_trials: int = 8,
) -> OptimizedDegrees:
    """Search lambda for the highest-rate ensemble under `target`.

    `budget` caps objective evaluations; `n_eval` is the block length of the
    final Monte-Carlo re-score (0 skips it).  An all-infeasible search
    returns its best effort with `feasible=False`.
    """
    if np.any(np.diff(target.values) > target.rise_tol):
        raise ParameterError("target curve must be monotone decreasing")
    if any(f < 0 for f in mu_fixed.values()) or abs(sum(mu_fixed.values()) - 1) > 1e-6:
        raise ParameterError("mu_fixed must be a distribution")
    const = constellation or make_constellation("qpsk")
    support = _support(d_v_max)
    grid = target.rho_grid[target.rho_grid > 0]
    tvals = np.asarray(target(grid), dtype=float)

    def score(weights: np.ndarray) -> float:
        dd = _candidate(weights, support, mu_fixed)
        if dd is None:
            return 10.0
        curve = ga_de_curve(dd, grid, const)
        violation = float(np.max(curve - tvals))
        if violation > 0.0:
            return 1.0 + violation
        return -design_rate(dd)

    popsize = max(8, min(16, budget // (2 * len(support)) or 8))
    maxiter = max(1, budget // (popsize * len(support)))
    result = differential_evolution(
        score,
        bounds=[(0.0, 1.0)] * len(support),
        seed=int(seed),
        popsize=popsize,
        maxiter=maxiter,
        tol=1e-8,
        polish=False,
        init="sobol",
    )
    best = _candidate(result.x, support, mu_fixed)
    fitness = float(result.fun)
    if best is None or fitness > 0.0:
        # best effort: return the least-violating candidate even if infeasible
        if best is None:
            best = DegreeDistribution(lam={2: 0.5, 3: 0.5}, mu=dict(mu_fixed))
        return OptimizedDegrees(
            dd=best, rate=design_rate(best), feasible=False, fitness=fitness
        )
    measured = None
    if n_eval > 0:
        bps = const.bits_per_symbol
        n_code = n_eval - (n_eval % bps)
        measured = measure_transfer_curve(
            best, const, grid, n_code, measure_trials, seed
        )
    return OptimizedDegrees(
        dd=best,
        rate=design_rate(best),
        feasible=True,
        fitness=fitness,
        measured=measured,
    )
