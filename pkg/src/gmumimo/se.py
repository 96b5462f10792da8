"""State-evolution transfer functions, fixed points, and capacity formulas.

For a channel with spectrum {e_i} at a given snr the linear detector is
summarized by

    phi_L(v)    = 1/Omega_L(1/v) - 1/v          (MSE -> SNR transfer)
    varphi_L(r) = 1/(r + 1/phi_L_inv(r))        (variational form)

with the generalized inverse phi_L_inv equal to 1 below phi_L(1), the proper
inverse on [phi_L(1), snr], and 0 above snr.  The constrained sum capacity is
anchored at the fixed point Omega_S(rho*) = varphi_L(rho*):

    C_sum = log|B(v*)| + N (log Omega_S(rho*) + int_0^rho* Omega_S)

with B(v) = I/v + snr A^H A, evaluated from the spectrum.  All rates and
capacities are in nats.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .channel import ChannelMatrix, SnrPoint, omega_L
from .constellation import MmseCurve, MmseFunction
from .errors import ContractError, ModelError, NumericError, ParameterError

_COINCIDENCE_TOL = 1e-9
_BRACKET_GRID = 512


class TransferPair:
    """phi_L / varphi_L for one (spectrum, snr) pair.

    Monotonicity of phi_L in v is verified at construction; a violation
    flags a pathological spectrum/snr combination.
    """

    def __init__(self, spectrum: np.ndarray, n: int, snr: SnrPoint | float):
        if not isinstance(snr, SnrPoint):
            snr = SnrPoint.from_linear(float(snr))
        self.spectrum = np.asarray(spectrum, dtype=float)
        if self.spectrum.size == 0 or np.any(self.spectrum <= 0):
            raise ModelError("spectrum must be non-empty and positive")
        self.n = int(n)
        self.snr_point = snr
        self.snr = snr.snr
        self.phi_at_1 = self.phi_L(1.0)
        # coarse monotone table used for bracketing scans
        self._v_grid = np.geomspace(1e-12, 1.0, 4096)
        self._phi_grid = self.phi_L(self._v_grid)
        if np.any(np.diff(self._phi_grid) > 1e-9 * max(self.snr, 1.0)):
            raise ModelError(
                "phi_L is not monotone non-increasing in v; "
                "spectrum/snr outside the model's regime"
            )

    @classmethod
    def from_channel(cls, chan: ChannelMatrix, snr) -> "TransferPair":
        return cls(chan.spectrum, chan.n, snr)

    def omega_L(self, rho):
        return omega_L(self.spectrum, self.n, self.snr, rho)

    def phi_L(self, v):
        """SNR produced by the LD when fed variance v; phi_L(0) = snr.

        Evaluated as (1 - rh*Omega_L(rh))/Omega_L(rh) with rh = 1/v, using
        the cancellation-free form of the numerator.
        """
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.full(arr.shape, self.snr)
        pos = arr > 0
        if np.any(pos):
            rh = 1.0 / arr[pos][..., None]
            se2 = self.snr * self.spectrum**2
            numer = np.sum(se2 / (se2 + rh), axis=-1) / self.n
            out[pos] = numer / self.omega_L(1.0 / arr[pos])
        return float(out[0]) if np.ndim(v) == 0 else out

    def phi_L_inverse(self, rho: float) -> float:
        """Generalized inverse: 1 below phi_L(1), bisection in the middle,
        0 above snr."""
        if rho < 0:
            raise ParameterError("rho must be >= 0")
        if rho <= self.phi_at_1:
            return 1.0
        if rho > self.snr:
            return 0.0
        lo, hi = 1e-300, 1.0
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            if self.phi_L(mid) > rho:
                lo = mid
            else:
                hi = mid
            if hi / lo < 1.0 + 1e-15:
                break
        v = np.sqrt(lo * hi)
        # relative residual check; a flat phi_L cannot be inverted tighter
        res = abs(self.phi_L(v) - rho)
        if res > 1e-8 * max(rho, 1.0):
            raise NumericError(f"phi_L inverse stalled at rho={rho} (residual {res})")
        return v

    def varphi_L(self, rho: float) -> float:
        """Variational LD transfer: 1/(1+rho) below phi_L(1), 0 above snr."""
        if rho < 0:
            raise ParameterError("rho must be >= 0")
        if rho <= self.phi_at_1:
            return 1.0 / (1.0 + rho)
        if rho > self.snr:
            return 0.0
        v = self.phi_L_inverse(rho)
        if v <= 0.0:
            return 0.0
        return 1.0 / (rho + 1.0 / v)

    def varphi_L_approx(self, rho) -> np.ndarray:
        """Table-interpolated varphi_L for bracketing scans (not exact)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        # phi grid is decreasing in v; build an increasing view for interp
        phi = self._phi_grid[::-1]
        v = self._v_grid[::-1]
        vi = np.interp(rho, phi, v, left=1.0, right=0.0)
        low = rho <= self.phi_at_1
        out = np.where(low, 1.0 / (1.0 + rho), 0.0)
        mid = (~low) & (rho <= self.snr) & (vi > 0)
        out[mid] = 1.0 / (rho[mid] + 1.0 / vi[mid])
        out[rho > self.snr] = 0.0
        return out


@dataclass(frozen=True)
class FixedPoint:
    """Crossing of Omega_S and varphi_L; `degenerate` marks the boundary
    convention used when the curves coincide or never cross."""

    rho_star: float
    v_star: float
    degenerate: bool = False
    multiple: bool = False


@dataclass(frozen=True)
class CapacityReport:
    sum_capacity_nats: float
    per_antenna_nats: float
    fixed_point: FixedPoint
    snr: SnrPoint

    @property
    def per_antenna_bits(self) -> float:
        return self.per_antenna_nats / np.log(2.0)


def _omega_integral(omega_s, a: float, b: float) -> float:
    """int_a^b Omega_S: segment-exact for tabulated curves, adaptive
    quadrature for callables."""
    if b <= a:
        return 0.0
    if isinstance(omega_s, MmseCurve):
        return _curve_integral_between(omega_s, a, b)
    val, _ = integrate.quad(
        omega_s, a, b, limit=400, epsabs=1e-12, epsrel=1e-12
    )
    return val


def _curve_integral_between(curve: MmseCurve, a: float, b: float) -> float:
    g = curve.rho_grid
    nodes = np.unique(np.concatenate([[a, b], g[(g > a) & (g < b)]]))
    total = 0.0
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        v0 = curve(lo)
        v1 = curve(hi)
        if lo == 0.0:
            total += 0.5 * (v0 + v1) * (hi - lo)
            continue
        dl = np.log(hi / lo)
        if dl <= 0:
            continue
        slope = (v1 - v0) / dl
        total += v0 * (hi - lo) + slope * (hi * dl - (hi - lo))
    return total


def find_fixed_point(pair: TransferPair, omega_s) -> FixedPoint:
    """Locate Omega_S(rho) = varphi_L(rho) on (0, snr] by bisection.

    Near rho = 0 every unit-power constellation coincides with 1/(1+rho) to
    second order, so sign decisions use a tolerance band; a curve that never
    definitely crosses yields the boundary point rho* = snr with the
    degenerate flag.
    """
    snr = pair.snr
    grid = np.geomspace(max(1e-6 * snr, 1e-9), snr * (1.0 - 1e-12), _BRACKET_GRID)
    os_vals = np.array([float(omega_s(r)) for r in grid])
    vp_vals = pair.varphi_L_approx(grid)
    gv = os_vals - vp_vals
    neg = gv < -_COINCIDENCE_TOL
    pos = gv > _COINCIDENCE_TOL

    def g_exact(r):
        return float(omega_s(r)) - pair.varphi_L(r)

    crossings = []
    last_neg = None
    for i in range(grid.size):
        if neg[i]:
            last_neg = i
        elif pos[i] and last_neg is not None:
            crossings.append((grid[last_neg], grid[i]))
            last_neg = None
    if not crossings:
        rho_star = snr
        v = float(omega_s(rho_star))
        v_star = 1.0 / (1.0 / v - rho_star) if v > 0 else np.inf
        return FixedPoint(rho_star, v_star, degenerate=True)
    lo, hi = crossings[0]
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if g_exact(mid) < 0:
            lo = mid
        else:
            hi = mid
    rho_star = 0.5 * (lo + hi)
    os_star = float(omega_s(rho_star))
    v_star = 1.0 / (1.0 / os_star - rho_star)
    return FixedPoint(rho_star, v_star, multiple=len(crossings) > 1)


def uniqueness_scan(pair: TransferPair, omega_s, nodes: int = 4096) -> int:
    """Count definite sign changes of Omega_S - varphi_L on (0, snr);
    > 1 means the unique-fixed-point premise is violated."""
    grid = np.geomspace(max(1e-6 * pair.snr, 1e-9), pair.snr * (1 - 1e-12), nodes)
    gv = np.array([float(omega_s(r)) for r in grid]) - pair.varphi_L_approx(grid)
    count = 0
    state = 0  # -1 definitely below, +1 definitely above
    for val in gv:
        if val < -_COINCIDENCE_TOL:
            cur = -1
        elif val > _COINCIDENCE_TOL:
            cur = 1
        else:
            continue
        if state == -1 and cur == 1:
            count += 1
        state = cur
    return count


def log_det_b(spectrum: np.ndarray, n: int, snr: float, v: float) -> float:
    """log|I/v + snr A^H A| from the spectrum."""
    if v <= 0:
        raise ParameterError(f"v must be positive, got {v}")
    e2 = np.asarray(spectrum) ** 2
    t = e2.size
    return float(np.sum(np.log(1.0 / v + snr * e2)) + (n - t) * np.log(1.0 / v))


def sum_capacity(pair: TransferPair, omega_s, fp: FixedPoint) -> CapacityReport:
    """Constrained sum capacity from the fixed point (nats)."""
    if not np.isfinite(fp.v_star) or fp.v_star <= 0:
        raise ParameterError("invalid fixed point: v* must be positive finite")
    logdet = log_det_b(pair.spectrum, pair.n, pair.snr, fp.v_star)
    os_star = float(omega_s(fp.rho_star))
    integral = _omega_integral(omega_s, 0.0, fp.rho_star)
    total = logdet + pair.n * (np.log(os_star) + integral)
    return CapacityReport(
        sum_capacity_nats=total,
        per_antenna_nats=total / pair.n,
        fixed_point=fp,
        snr=pair.snr_point,
    )


def _varphi_integral(pair: TransferPair, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    pts = [p for p in (pair.phi_at_1,) if a < p < b]
    val, _ = integrate.quad(
        pair.varphi_L, a, b, points=pts or None,
        limit=500, epsabs=1e-12, epsrel=1e-12,
    )
    return val


def achievable_avg_rate(pair: TransferPair, omega_s, fp: FixedPoint | None = None) -> float:
    """Area of min{Omega_S, varphi_L} on [0, snr] (nats per antenna)."""
    if fp is None:
        fp = find_fixed_point(pair, omega_s)
    if fp.degenerate:
        # coincident or non-crossing curves: integrate the min directly
        f = lambda r: min(float(omega_s(r)), pair.varphi_L(r))
        pts = [p for p in (pair.phi_at_1,) if 0 < p < pair.snr]
        val, _ = integrate.quad(
            f, 0.0, pair.snr, points=pts or None,
            limit=500, epsabs=1e-12, epsrel=1e-12,
        )
        return val
    head = _omega_integral(omega_s, 0.0, fp.rho_star)
    tail = _varphi_integral(pair, fp.rho_star, pair.snr)
    return head + tail


def envelope_curve(pair: TransferPair, omega_s, fp: FixedPoint, grid: np.ndarray) -> MmseCurve:
    """Tabulated min{Omega_S, varphi_L}, zero at and beyond snr."""
    grid = np.unique(np.concatenate([grid, [fp.rho_star, pair.snr]]))
    vals = np.array(
        [
            min(float(omega_s(r)), pair.varphi_L(r)) if r < pair.snr else 0.0
            for r in grid
        ]
    )
    vals = np.minimum.accumulate(vals)
    return MmseCurve(rho_grid=grid, values=vals)


def omega_ax(pair: TransferPair, omega_s, fp: FixedPoint) -> tuple[float, float]:
    """Measurement MMSE at snr by its two fixed-point expressions:
    (rho* Omega_S(rho*)/snr, (1 - Omega_L(1/v*)/v*)/snr)."""
    via_rho = fp.rho_star * float(omega_s(fp.rho_star)) / pair.snr
    via_omega = (1.0 - pair.omega_L(1.0 / fp.v_star) / fp.v_star) / pair.snr
    return via_rho, via_omega


def group_capacity(
    pair: TransferPair, omega_s, chan: ChannelMatrix, group_columns
) -> float:
    """Rate bound (nats) for the users owning `group_columns` of A."""
    cols = np.asarray(group_columns, dtype=int)
    if cols.size == 0:
        raise ParameterError("group column set must be non-empty")
    sub = chan.entries[:, cols]
    spec = np.linalg.svd(sub, compute_uv=False)
    spec = spec[spec > 1e-300]
    if spec.size == 0:
        raise ModelError("subset spectrum has rank 0")
    nq = cols.size
    sub_pair = TransferPair(spec, nq, pair.snr_point)
    fp = find_fixed_point(sub_pair, omega_s)
    logdet = log_det_b(spec, nq, pair.snr, fp.v_star)
    os_star = float(omega_s(fp.rho_star))
    integral = _omega_integral(omega_s, 0.0, fp.rho_star)
    return logdet + nq * (np.log(os_star) + integral)


def turbo_lmmse_rate(pair: TransferPair, omega_s) -> float:
    """Matched-transfer rate of the extrinsic LMMSE baseline (nats/antenna).

    Gaussian signaling is the equality regime and returns the
    MU-OAMP/VAMP achievable rate directly.
    """
    if getattr(omega_s, "gaussian", False):
        return achievable_avg_rate(pair, omega_s)
    if isinstance(omega_s, MmseCurve):
        raise ParameterError(
            "turbo_lmmse_rate needs a constellation MMSE callable with log|S|"
        )
    log_s = omega_s.entropy_nats()

    def integrand(r):
        return float(omega_s(r + pair.phi_L(float(omega_s(r)))))

    # tail cutoff: integrand < 1e-10 (integrand is below Omega_S(r))
    hi = max(4.0 * pair.snr, 4.0)
    while integrand(hi) > 1e-10 and hi < 1e7:
        hi *= 2.0
    val, _ = integrate.quad(
        integrand, 0.0, hi, limit=800, epsabs=1e-11, epsrel=1e-10
    )
    return log_s - val


def code_rate_from_curve(omega_c: MmseCurve, tail_tol: float = 1e-4) -> float:
    """Lemma-3 style rate integral (nats); the curve must have decayed to
    ~zero at its last node."""
    if omega_c.values[-1] > tail_tol:
        raise ContractError(
            f"curve tail {omega_c.values[-1]:.3g} has not vanished "
            f"(tolerance {tail_tol:g}); extend the grid"
        )
    return omega_c.integral()


def se_trajectory(pair: TransferPair, omega_s, iters: int) -> list[tuple[float, float]]:
    """Predicted (v_s, v_r) per iteration starting from the unit prior."""
    out = []
    v_s = 1.0
    for _ in range(iters):
        rho = pair.phi_L(v_s)
        v_r = 1.0 / rho
        out.append((v_s, v_r))
        omega = float(omega_s(rho))
        denom = 1.0 / omega - rho
        if denom <= 0:
            break
        v_s = 1.0 / denom
    return out


def capacity_vs_snr(
    spectrum: np.ndarray, n: int, omega_s, snr_db_grid
) -> list[tuple[float, float]]:
    """(snr_db, per-antenna bits) rows for the capacity sweep CSV."""
    rows = []
    for db in snr_db_grid:
        pair = TransferPair(spectrum, n, SnrPoint.from_db(db))
        fp = find_fixed_point(pair, omega_s)
        rep = sum_capacity(pair, omega_s, fp)
        rows.append((float(db), rep.per_antenna_bits))
    return rows


def write_capacity_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snr_db", "per_antenna_bits"])
        for db, bits in rows:
            w.writerow([repr(db), repr(bits)])


def write_rate_region_csv(path, rows) -> None:
    """rows: (b, R1_bits, R2_bits)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["b", "R1_bits", "R2_bits"])
        for b, r1, r2 in rows:
            w.writerow([repr(b), repr(r1), repr(r2)])
