"""Discrete constellations, their MMSE functions, and soft demapping.

The MMSE function of a constellation S is

    Omega_S(rho) = 1 - (1/pi) int |sum_l s_l w_l(y)|^2 / (|S| sum_l w_l(y)) dy,
    w_l(y) = exp(-|y - sqrt(rho) s_l|^2),

evaluated by Gauss-Hermite quadrature over the complex plane.  Constellations
that factor into two independent real rails (QPSK, square QAM) are integrated
rail-wise, which is the same integral after separation of variables.  The
Gaussian "constellation" is a sentinel with the closed form 1/(1+rho).

All rates derived from these curves are in nats; conversion to bits happens
at the CLI boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .errors import ContractError, NumericError, ParameterError

GH_ORDER_START = 16
GH_ORDER_CAP = 512
GH_AGREE_TOL = 1e-8


@lru_cache(maxsize=None)
def _gh_nodes(order: int):
    x, w = roots_hermite(order)
    return x, w


@dataclass(frozen=True)
class Constellation:
    """Unit-average-power symbol set with Gray bit labels.

    `bit_map[k]` holds the bits of point k, most significant first.  For
    rail-separable sets `rails` stores (levels, labels) per real axis so the
    2-D integrals and demappers can factor.
    """

    name: str
    points: np.ndarray
    bit_map: np.ndarray
    gaussian: bool = False
    rails: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.gaussian:
            return
        k = len(self.points)
        if k < 2 or k & (k - 1):
            raise ParameterError(f"|S| must be a power of two, got {k}")
        power = float(np.mean(np.abs(self.points) ** 2))
        if abs(power - 1.0) > 1e-12:
            raise ParameterError(f"constellation power {power} != 1")
        if self.bit_map.shape != (k, self.bits_per_symbol):
            raise ParameterError("bit_map shape mismatch")

    @property
    def bits_per_symbol(self) -> int:
        if self.gaussian:
            raise ParameterError("gaussian sentinel carries no bit labels")
        return int(np.log2(len(self.points)))

    def entropy_nats(self) -> float:
        return float(np.log(len(self.points)))


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _pam_gray_levels(nlevels: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude levels -(L-1)..(L-1) step 2 with Gray labels, unnormalized."""
    amps = np.arange(-(nlevels - 1), nlevels, 2, dtype=float)
    width = int(np.log2(nlevels))
    labels = np.array([_bits(_gray(i), width) for i in range(nlevels)])
    return amps, labels


def make_constellation(name: str) -> Constellation:
    """Factory for qpsk / 8psk / 16qam / gaussian."""
    key = name.strip().lower()
    if key == "gaussian":
        return Constellation(
            name="GAUSSIAN",
            points=np.zeros(0, dtype=complex),
            bit_map=np.zeros((0, 0), dtype=int),
            gaussian=True,
        )
    if key == "qpsk":
        amps, labels = _pam_gray_levels(2)
        scale = 1.0 / np.sqrt(2.0)
    elif key == "16qam":
        amps, labels = _pam_gray_levels(4)
        scale = 1.0 / np.sqrt(10.0)
    elif key == "8psk":
        pts = np.exp(2j * np.pi * np.arange(8) / 8.0)
        bit_map = np.array([_bits(_gray(i), 3) for i in range(8)])
        return Constellation(name="8PSK", points=pts, bit_map=bit_map)
    else:
        raise ParameterError(f"unknown constellation {name!r}")
    levels = amps * scale
    npam = len(levels)
    width = labels.shape[1]
    points = np.empty(npam * npam, dtype=complex)
    bit_map = np.empty((npam * npam, 2 * width), dtype=int)
    for i in range(npam):          # in-phase rail, first bit group
        for q in range(npam):
            idx = i * npam + q
            points[idx] = levels[i] + 1j * levels[q]
            bit_map[idx, :width] = labels[i]
            bit_map[idx, width:] = labels[q]
    rails = (levels.copy(), labels.copy())
    return Constellation(
        name=key.upper(), points=points, bit_map=bit_map, rails=rails
    )


# ---------------------------------------------------------------------------
# MMSE function
# ---------------------------------------------------------------------------

def _mmse_2d_fixed(points: np.ndarray, rho: float, order: int) -> float:
    x, w = _gh_nodes(order)
    z = (x[:, None] + 1j * x[None, :]).ravel()
    wt = np.outer(w, w).ravel() / np.pi
    s = points
    sq = np.sqrt(rho)
    total = 0.0
    for sk in s:
        y = sq * sk + z
        logw = -np.abs(y[:, None] - sq * s[None, :]) ** 2
        m = logw.max(axis=1, keepdims=True)
        e = np.exp(logw - m)
        xhat = (e @ s) / e.sum(axis=1)
        total += float(np.sum(wt * np.abs(xhat) ** 2))
    return 1.0 - total / len(s)


def _mmse_rail_fixed(levels: np.ndarray, rho: float, order: int) -> float:
    # One real rail: y = sqrt(rho) p + n, n ~ N(0, 1/2); GH weight exp(-n^2).
    x, w = _gh_nodes(order)
    wt = w / np.sqrt(np.pi)
    sq = np.sqrt(rho)
    total = 0.0
    for pk in levels:
        y = sq * pk + x
        logw = -((y[:, None] - sq * levels[None, :]) ** 2)
        m = logw.max(axis=1, keepdims=True)
        e = np.exp(logw - m)
        xhat = (e @ levels) / e.sum(axis=1)
        total += float(np.sum(wt * xhat**2))
    ev2 = float(np.mean(levels**2))
    return ev2 - total / len(levels)


def _adaptive(evaluate, rho: float) -> float:
    order = GH_ORDER_START
    prev = evaluate(rho, order)
    while order < GH_ORDER_CAP:
        order *= 2
        cur = evaluate(rho, order)
        if abs(cur - prev) <= GH_AGREE_TOL:
            return min(max(cur, 0.0), 1.0)
        prev = cur
    raise NumericError(
        f"MMSE quadrature did not converge at rho={rho} by order {GH_ORDER_CAP}"
    )


def mmse_of(constellation: Constellation, rho: float) -> float:
    """Omega_S(rho) by adaptive Gauss-Hermite quadrature (closed form for
    the Gaussian sentinel)."""
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho}")
    if constellation.gaussian:
        return 1.0 / (1.0 + rho)
    if rho == 0.0:
        return 1.0
    if constellation.rails is not None:
        levels = constellation.rails[0]
        rail = _adaptive(
            lambda r, o: _mmse_rail_fixed(levels, r, o), rho
        )
        return min(2.0 * rail, 1.0)
    return _adaptive(
        lambda r, o: _mmse_2d_fixed(constellation.points, r, o), rho
    )


def mmse_of_2d(constellation: Constellation, rho: float) -> float:
    """Force the generic complex-plane quadrature (test oracle for the
    rail-separated fast path)."""
    if constellation.gaussian:
        return 1.0 / (1.0 + rho)
    if rho == 0.0:
        return 1.0
    return _adaptive(
        lambda r, o: _mmse_2d_fixed(constellation.points, r, o), rho
    )


class MmseFunction:
    """Memoized callable Omega_S for the state-evolution sweeps."""

    def __init__(self, constellation: Constellation):
        self.constellation = constellation
        self._cache: dict[float, float] = {}

    @property
    def gaussian(self) -> bool:
        return self.constellation.gaussian

    def entropy_nats(self) -> float:
        return self.constellation.entropy_nats()

    def __call__(self, rho: float) -> float:
        if self.constellation.gaussian:
            return 1.0 / (1.0 + rho)
        v = self._cache.get(rho)
        if v is None:
            v = mmse_of(self.constellation, rho)
            self._cache[rho] = v
        return v


# ---------------------------------------------------------------------------
# Tabulated curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MmseCurve:
    """Monotone rho -> MMSE table, piecewise linear in log(rho).

    The segment touching rho = 0 interpolates linearly in rho.  Evaluation
    below the grid returns the first value; above the grid the last value.
    Monte-Carlo estimates may relax `rise_tol` to their sampling noise.
    """

    rho_grid: np.ndarray
    values: np.ndarray
    rise_tol: float = 1e-8

    def __post_init__(self):
        g, v = self.rho_grid, self.values
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ParameterError("grid/values must be 1-D, equal length >= 2")
        if np.any(np.diff(g) <= 0):
            raise ParameterError("rho grid must be strictly increasing")
        if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise ParameterError("curve values must lie in [0, 1]")
        if np.any(np.diff(v) > self.rise_tol):
            raise NumericError("curve is not non-increasing beyond tolerance")

    def __call__(self, rho) -> float | np.ndarray:
        rho = np.asarray(rho, dtype=float)
        g, v = self.rho_grid, self.values
        pos = g > 0
        out = np.empty(rho.shape or (1,))
        r = np.atleast_1d(rho)
        # log-space interpolation over the positive part of the grid
        gp, vp = g[pos], v[pos]
        safe = np.clip(r, gp[0], gp[-1])
        out[:] = np.interp(np.log(safe), np.log(gp), vp)
        if g[0] == 0.0:
            low = r < gp[0]
            out[low] = np.interp(r[low], [0.0, gp[0]], [v[0], vp[0]])
        else:
            out[r < g[0]] = v[0]
        out[r > g[-1]] = v[-1]
        return float(out[0]) if rho.ndim == 0 else out

    def integral(self) -> float:
        """Exact integral of the interpolant over the grid span."""
        g, v = self.rho_grid, self.values
        total = 0.0
        for i in range(len(g) - 1):
            r0, r1 = g[i], g[i + 1]
            v0, v1 = v[i], v[i + 1]
            if r0 == 0.0:
                total += 0.5 * (v0 + v1) * (r1 - r0)
                continue
            dl = np.log(r1 / r0)
            slope = (v1 - v0) / dl
            total += v0 * (r1 - r0) + slope * (r1 * dl - (r1 - r0))
        return float(total)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rho", "mmse"])
            for r, v in zip(self.rho_grid, self.values):
                writer.writerow([repr(r), repr(v)])

    @classmethod
    def from_csv(cls, path) -> "MmseCurve":
        rows = _read_curve_csv(path, ("rho", "mmse"))
        return cls(rho_grid=rows[0], values=rows[1])


def _read_curve_csv(path, columns):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[: len(columns)]] != list(columns):
            raise ContractError(f"curve CSV must start with header {','.join(columns)}")
        cols = [[] for _ in columns]
        for row in reader:
            if not row:
                continue
            for i in range(len(columns)):
                cols[i].append(float(row[i]))
    return [np.asarray(c) for c in cols]


def tabulate_mmse(
    constellation: Constellation,
    rho_min: float,
    rho_max: float,
    points: int,
) -> MmseCurve:
    """Log-spaced Omega_S table (rho = 0 prepended when rho_min = 0)."""
    if not (0 <= rho_min < rho_max):
        raise ParameterError("need 0 <= rho_min < rho_max")
    if points < 16:
        raise ParameterError("need at least 16 grid points")
    if rho_min == 0.0:
        grid = np.geomspace(min(1e-4, rho_max / points), rho_max, points)
        grid = np.concatenate([[0.0], grid])
    else:
        grid = np.geomspace(rho_min, rho_max, points)
    values = np.array([mmse_of(constellation, r) for r in grid])
    if np.any(np.diff(values) > GH_AGREE_TOL):
        raise NumericError(
            "tabulated MMSE increased beyond quadrature tolerance; raise the order cap"
        )
    values = np.minimum.accumulate(values)
    return MmseCurve(rho_grid=grid, values=values)


# ---------------------------------------------------------------------------
# Demapping under the scalar observation model r = x + rho^{-1/2} z
# ---------------------------------------------------------------------------

def _log_weights(constellation: Constellation, r: complex, rho: float) -> np.ndarray:
    d = -rho * np.abs(r - constellation.points) ** 2
    return d - d.max()


def posterior_mean_var(
    constellation: Constellation, r: complex, rho: float
) -> tuple[complex, float]:
    """Exact symbol posterior mean and variance for a uniform prior."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    logw = _log_weights(constellation, r, rho)
    w = np.exp(logw)
    w /= w.sum()
    mean = complex(np.sum(w * constellation.points))
    var = float(np.sum(w * np.abs(constellation.points) ** 2) - abs(mean) ** 2)
    return mean, max(var, 0.0)


def bit_llrs(constellation: Constellation, r: complex, rho: float) -> np.ndarray:
    """Per-bit LLRs, positive meaning bit 0 more likely."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    logw = _log_weights(constellation, r, rho)
    nbits = constellation.bits_per_symbol
    out = np.empty(nbits)
    for b in range(nbits):
        mask = constellation.bit_map[:, b] == 0
        l0 = _logsumexp(logw[mask])
        l1 = _logsumexp(logw[~mask])
        out[b] = l0 - l1
    return out


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    return float(m + np.log(np.sum(np.exp(a - m))))


def batch_bit_llrs(
    constellation: Constellation, r: np.ndarray, rho: float
) -> np.ndarray:
    """Vectorized bit_llrs over an array of observations; shape (..., bits)."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    flat = np.asarray(r).ravel()
    d = -rho * np.abs(flat[:, None] - constellation.points[None, :]) ** 2
    d -= d.max(axis=1, keepdims=True)
    nbits = constellation.bits_per_symbol
    out = np.empty((flat.size, nbits))
    for b in range(nbits):
        mask = constellation.bit_map[:, b] == 0
        m0 = d[:, mask]
        m1 = d[:, ~mask]
        a0 = m0.max(axis=1)
        a1 = m1.max(axis=1)
        out[:, b] = (a0 + np.log(np.exp(m0 - a0[:, None]).sum(axis=1))) - (
            a1 + np.log(np.exp(m1 - a1[:, None]).sum(axis=1))
        )
    return out.reshape(np.asarray(r).shape + (nbits,))


def batch_posterior_mean_var(
    constellation: Constellation, r: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior_mean_var over an array of observations."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    flat = np.asarray(r).ravel()
    d = -rho * np.abs(flat[:, None] - constellation.points[None, :]) ** 2
    d -= d.max(axis=1, keepdims=True)
    w = np.exp(d)
    w /= w.sum(axis=1, keepdims=True)
    mean = w @ constellation.points
    var = w @ (np.abs(constellation.points) ** 2) - np.abs(mean) ** 2
    shape = np.asarray(r).shape
    return mean.reshape(shape), np.maximum(var, 0.0).reshape(shape)


def symbols_from_bits(constellation: Constellation, bits: np.ndarray) -> np.ndarray:
    """Map a bit array (..., bits_per_symbol) to constellation points."""
    nbits = constellation.bits_per_symbol
    weights = 1 << np.arange(nbits - 1, -1, -1)
    labels = constellation.bit_map @ weights
    lut = np.empty(1 << nbits, dtype=complex)
    lut[labels] = constellation.points
    idx = np.asarray(bits) @ weights
    return lut[idx]


def soft_symbols_from_bit_llrs(
    constellation: Constellation, llrs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior symbol mean/variance from per-bit LLRs, bits independent.

    Works for any labeling; for Gray rail constellations it reduces to the
    per-rail soft symbol.
    """
    nbits = constellation.bits_per_symbol
    llrs = np.asarray(llrs)
    # p(bit = 0) per position
    p0 = 1.0 / (1.0 + np.exp(-np.clip(llrs, -60, 60)))
    k = len(constellation.points)
    probs = np.ones(llrs.shape[:-1] + (k,))
    for b in range(nbits):
        zero = constellation.bit_map[:, b] == 0
        pb = p0[..., b : b + 1]
        probs *= np.where(zero[None, :], pb, 1.0 - pb)
    mean = probs @ constellation.points
    var = probs @ (np.abs(constellation.points) ** 2) - np.abs(mean) ** 2
    return mean, np.maximum(var, 0.0)
