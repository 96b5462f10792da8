"""Gaussian-approximation density evolution (optimizer fitness only).

Bit LLRs out of a Gray QPSK demapper at symbol quality rho are N(2 rho,
4 rho) for the transmitted bit, so the classic one-dimensional mean
recursion applies.  The approximation is known to be biased for strongly
irregular ensembles; every reported threshold therefore comes from the
Monte-Carlo curve measurement, never from here.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from ..errors import ParameterError
from .degrees import DegreeDistribution

_M_GRID = np.geomspace(1e-9, 4e4, 6000)
_MAX_ITERS = 4000
_REL_TOL = 1e-10


@lru_cache(maxsize=1)
def _tables():
    x, w = roots_hermite(160)
    w = w / np.sqrt(np.pi)
    m = _M_GRID
    arg = 0.5 * (m[:, None] + np.sqrt(4.0 * m)[:, None] * (np.sqrt(2.0) * x)[None, :])
    th = np.tanh(arg)
    phi = np.clip(1.0 - th @ w, 1e-300, 1.0)
    t2 = np.clip(1.0 - (th**2) @ w, 0.0, 1.0)
    return np.log(m), np.log(phi), t2


def _phi(m):
    lm, lphi, _ = _tables()
    m = np.maximum(np.asarray(m, dtype=float), _M_GRID[0])
    return np.exp(np.interp(np.log(m), lm, lphi))


def _phi_inv(y):
    lm, lphi, _ = _tables()
    y = np.asarray(y, dtype=float)
    out = np.exp(np.interp(np.log(np.clip(y, 1e-290, 1.0)), lphi[::-1], lm[::-1]))
    out[np.asarray(y) >= 1.0] = 0.0
    return out


def _app_mmse(m):
    lm, _, t2 = _tables()
    m = np.maximum(np.asarray(m, dtype=float), _M_GRID[0])
    return np.interp(np.log(m), lm, t2)


def ga_de_point(dd: DegreeDistribution, rho: float) -> float:
    """Predicted symbol MMSE after unbounded decoding at quality rho."""
    lam_d = np.fromiter(dd.lam.keys(), dtype=float)
    lam_f = np.fromiter(dd.lam.values(), dtype=float)
    mu_d = np.fromiter(dd.mu.keys(), dtype=float)
    mu_f = np.fromiter(dd.mu.values(), dtype=float)
    m0 = 2.0 * rho
    mc = 0.0
    for _ in range(_MAX_ITERS):
        s = float(np.sum(lam_f * _phi(m0 + (lam_d - 1.0) * mc)))
        t = float(np.sum(mu_f * (1.0 - s) ** (mu_d - 1.0)))
        mc_new = float(_phi_inv(np.array([1.0 - t]))[0])
        if mc_new >= _M_GRID[-1]:
            return 0.0
        if abs(mc_new - mc) <= _REL_TOL * max(1.0, mc):
            mc = mc_new
            break
        mc = mc_new
    node_w = lam_f / lam_d
    node_w /= node_w.sum()
    return float(np.sum(node_w * _app_mmse(m0 + lam_d * mc)))


def ga_de_curve(dd: DegreeDistribution, rho_grid, constellation=None) -> np.ndarray:
    """Predicted Omega_C over a rho grid (QPSK bit-LLR model)."""
    if constellation is not None and not constellation.gaussian:
        if constellation.bits_per_symbol != 2 or constellation.rails is None:
            raise ParameterError(
                "density-evolution fitness supports the QPSK bit-LLR model only"
            )
    return np.array([ga_de_point(dd, float(r)) for r in np.asarray(rho_grid)])
