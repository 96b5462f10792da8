"""Group-asymmetric rate allocation over the decoder-MMSE envelope.

Groups share the aggregate envelope v(rho) = min{Omega_S, varphi_L} through
the gamma parameterization

    gamma_i (1/v_i - c*) = gamma_g (1/v_g - c*),      c* = 1/Omega_S(rho*),

equivalently v_i = (b_ig / v_g + c_ig)^-1 with b_ig = gamma_g/gamma_i and
c_ig = (1 - b_ig) c*.  Below the fixed point every group rides Omega_S; above
it the split solves the mean constraint, then a clip-and-redistribute pass
enforces v_g <= Omega_S per node while preserving the mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .constellation import MmseCurve
from .errors import ModelError, ParameterError
from .se import FixedPoint, TransferPair, find_fixed_point

_MEAN_TOL = 1e-10
_CAP_SLACK = 1e-12


@dataclass(frozen=True)
class GroupPlan:
    """Allocation parameters for G groups."""

    gammas: np.ndarray
    c_star: float
    antennas_per_group: np.ndarray
    users_per_group: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ParameterError("gammas must be a non-empty vector")
        if np.any(g <= 0):
            raise ParameterError("all gammas must be positive")
        if self.c_star <= 0:
            raise ParameterError("c_star must be positive")
        if len(self.antennas_per_group) != g.size or len(self.users_per_group) != g.size:
            raise ParameterError("per-group arrays must match the group count")

    @property
    def g_count(self) -> int:
        return self.gammas.size

    def b_matrix(self) -> np.ndarray:
        """b_ig = gamma_g / gamma_i (b_gg = 1)."""
        g = self.gammas
        return g[None, :] / g[:, None]

    @classmethod
    def two_group_from_b(
        cls, b: float, c_star: float, antennas_per_group, users_per_group=None
    ) -> "GroupPlan":
        """Two groups with gamma_1 = 1, gamma_2 = 1/b (so b_21 = b)."""
        if b <= 0:
            raise ParameterError("b must be positive")
        users = users_per_group if users_per_group is not None else (1, 1)
        return cls(
            gammas=np.array([1.0, 1.0 / b]),
            c_star=c_star,
            antennas_per_group=np.asarray(antennas_per_group, dtype=int),
            users_per_group=np.asarray(users, dtype=int),
        )

    @classmethod
    def from_fixed_point(
        cls, gammas, omega_s, fp: FixedPoint, antennas_per_group, users_per_group=None
    ) -> "GroupPlan":
        g = np.asarray(gammas, dtype=float)
        users = users_per_group if users_per_group is not None else np.ones(g.size, int)
        return cls(
            gammas=g,
            c_star=1.0 / float(omega_s(fp.rho_star)),
            antennas_per_group=np.asarray(antennas_per_group, dtype=int),
            users_per_group=np.asarray(users, dtype=int),
        )


@dataclass(frozen=True)
class GroupCurves:
    """Per-group variance curves on a shared grid plus their envelope."""

    rho_grid: np.ndarray
    envelope: np.ndarray
    group_values: np.ndarray  # shape (G, len(grid))

    def curve(self, g: int) -> MmseCurve:
        return MmseCurve(
            rho_grid=self.rho_grid,
            values=np.minimum.accumulate(np.maximum(self.group_values[g], 0.0)),
        )

    def envelope_curve(self) -> MmseCurve:
        return MmseCurve(rho_grid=self.rho_grid, values=self.envelope)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["rho", "envelope"]
                + [f"v_{g + 1}" for g in range(self.group_values.shape[0])]
            )
            for i, r in enumerate(self.rho_grid):
                w.writerow(
                    [repr(r), repr(self.envelope[i])]
                    + [repr(v) for v in self.group_values[:, i]]
                )


def split_variances(v: float, plan: GroupPlan) -> np.ndarray:
    """Solve zeta_g(v_g) = v for the anchor group, map to all groups.

    zeta is monotone increasing on (0, 1/c*], so bisection always lands;
    outside that range the allocation is infeasible for this (v, gamma).
    """
    if not (0.0 < v <= 1.0):
        raise ParameterError(f"v must be in (0, 1], got {v}")
    cs = plan.c_star
    if v > 1.0 / cs + 1e-12:
        raise ParameterError(
            f"no solution: mean target {v} exceeds 1/c* = {1.0 / cs}"
        )
    b = plan.b_matrix()[:, 0]  # anchor group 0: b_i0
    c = (1.0 - b) * cs

    def mean_of(v0: float) -> float:
        return float(np.mean(1.0 / (b / v0 + c)))

    lo, hi = 1e-300, 1.0 / cs
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if mean_of(mid) < v:
            lo = mid
        else:
            hi = mid
    v0 = np.sqrt(lo * hi)
    out = 1.0 / (b / v0 + c)
    if abs(float(np.mean(out)) - v) > _MEAN_TOL * max(v, 1.0):
        raise ParameterError(
            f"allocation infeasible: mean residual {abs(np.mean(out) - v):.3g} at v={v}"
        )
    return out


def _redistribute(values: np.ndarray, cap: float) -> np.ndarray:
    """Clip entries above `cap` and share the excess equally among entries
    with strict headroom; mean is preserved exactly."""
    v = values.copy()
    total = v.sum()
    if total > cap * v.size * (1.0 + 1e-9):
        raise ModelError(
            f"total variance {total} exceeds G * Omega_S = {cap * v.size}; "
            "envelope inconsistency upstream"
        )
    for _ in range(v.size + 1):
        over = v > cap + _CAP_SLACK
        if not np.any(over):
            return v
        excess = float(np.sum(v[over] - cap))
        v[over] = cap
        under = v < cap - _CAP_SLACK
        if not np.any(under):
            # all at the cap; only consistent when the excess is roundoff
            if excess > 1e-9:
                raise ModelError("no headroom left while excess remains")
            return v
        v[under] += excess / int(np.count_nonzero(under))
    raise ModelError("clip/redistribute failed to terminate")


def build_raw_curves(
    pair: TransferPair,
    omega_s,
    plan: GroupPlan,
    fp: FixedPoint | None = None,
    grid_points: int = 2048,
) -> GroupCurves:
    """Per-group curves from the gamma split before the cap adjustment."""
    if fp is None:
        fp = find_fixed_point(pair, omega_s)
    snr = pair.snr
    grid = np.unique(
        np.concatenate(
            [np.geomspace(min(1e-5, snr * 1e-4), snr, grid_points), [fp.rho_star, snr]]
        )
    )
    grid = grid[grid <= snr]
    env = np.empty(grid.size)
    vals = np.empty((plan.g_count, grid.size))
    for i, r in enumerate(grid):
        os_r = float(omega_s(r))
        if r >= snr:
            env[i] = 0.0
            vals[:, i] = 0.0
        elif r < fp.rho_star:
            env[i] = os_r
            vals[:, i] = os_r
        else:
            v = min(os_r, pair.varphi_L(r))
            env[i] = v
            vals[:, i] = split_variances(v, plan) if v > 0 else 0.0
    env = np.minimum.accumulate(env)
    return GroupCurves(rho_grid=grid, envelope=env, group_values=vals)


def adjust_curves(raw: GroupCurves, omega_s) -> GroupCurves:
    """Enforce v_g <= Omega_S per node by clip-and-redistribute rounds.

    The post-adjustment curves are re-checked for monotonicity in rho; a
    violation means the requested allocation is not decoder-realizable and
    aborts rather than being smoothed away.
    """
    vals = raw.group_values.copy()
    for i, r in enumerate(raw.rho_grid):
        cap = float(omega_s(r))
        col = vals[:, i]
        if np.any(col > cap + _CAP_SLACK):
            vals[:, i] = _redistribute(col, cap)
    for g in range(vals.shape[0]):
        rises = np.diff(vals[g]) > 1e-8
        if np.any(rises):
            idx = int(np.argmax(rises))
            raise ModelError(
                f"adjusted curve for group {g} increases at rho="
                f"{raw.rho_grid[idx + 1]:.4g}; allocation not realizable"
            )
    return GroupCurves(rho_grid=raw.rho_grid, envelope=raw.envelope, group_values=vals)


def group_curves(
    pair: TransferPair,
    omega_s,
    plan: GroupPlan,
    fp: FixedPoint | None = None,
    grid_points: int = 2048,
) -> GroupCurves:
    """Raw split followed by the cap adjustment."""
    return adjust_curves(build_raw_curves(pair, omega_s, plan, fp, grid_points), omega_s)


@dataclass(frozen=True)
class RateTuple:
    per_antenna_nats: np.ndarray   # rate of one antenna in each group
    group_rates_nats: np.ndarray   # scaled by antennas per group
    sum_rate_nats: float

    @property
    def group_rates_bits(self) -> np.ndarray:
        return self.group_rates_nats / np.log(2.0)

    @property
    def sum_rate_bits(self) -> float:
        return float(self.sum_rate_nats / np.log(2.0))


def group_rate_tuple(curves: GroupCurves, plan: GroupPlan) -> RateTuple:
    """Integrate each adjusted curve and scale by the antennas it spans."""
    per_antenna = np.array(
        [curves.curve(g).integral() for g in range(plan.g_count)]
    )
    group_rates = per_antenna * plan.antennas_per_group
    return RateTuple(
        per_antenna_nats=per_antenna,
        group_rates_nats=group_rates,
        sum_rate_nats=float(np.sum(group_rates)),
    )


def write_rate_tuple_csv(path, plan: GroupPlan, rates: RateTuple) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "antennas", "rate_bits"])
        for g in range(plan.g_count):
            w.writerow(
                [g + 1, int(plan.antennas_per_group[g]), repr(rates.group_rates_bits[g])]
            )


def extreme_point_curves(
    pair: TransferPair,
    omega_s,
    chan,
    group1_columns,
    fp: FixedPoint | None = None,
    grid_points: int = 2048,
) -> GroupCurves:
    """Two-group corner point: group 1 rides min{Omega_S, varphi_{L,1}} built
    from its own sub-channel, group 2 takes the envelope complement."""
    cols = np.asarray(group1_columns, dtype=int)
    if cols.size == 0 or cols.size >= chan.n:
        raise ParameterError("group 1 must own a proper non-empty column subset")
    if fp is None:
        fp = find_fixed_point(pair, omega_s)
    sub = chan.entries[:, cols]
    spec = np.linalg.svd(sub, compute_uv=False)
    spec = spec[spec > 1e-300]
    if spec.size == 0:
        raise ModelError("group-1 sub-channel has rank 0")
    sub_pair = TransferPair(spec, cols.size, pair.snr_point)
    snr = pair.snr
    grid = np.unique(
        np.concatenate(
            [
                np.geomspace(min(1e-5, snr * 1e-4), snr, grid_points),
                [fp.rho_star, snr, min(sub_pair.snr, snr)],
            ]
        )
    )
    grid = grid[grid <= snr]
    env = np.empty(grid.size)
    v1 = np.empty(grid.size)
    for i, r in enumerate(grid):
        if r >= snr:
            env[i] = 0.0
            v1[i] = 0.0
            continue
        os_r = float(omega_s(r))
        env[i] = min(os_r, pair.varphi_L(r))
        v1[i] = min(os_r, sub_pair.varphi_L(r))
    env = np.minimum.accumulate(env)
    v2 = 2.0 * env - v1
    if np.any(v2 < -1e-9):
        idx = int(np.argmin(v2))
        raise ModelError(
            f"extreme point unreachable: complement curve negative at "
            f"rho={grid[idx]:.4g} ({v2[idx]:.3g})"
        )
    return GroupCurves(
        rho_grid=grid, envelope=env, group_values=np.vstack([v1, np.maximum(v2, 0.0)])
    )
