"""Edge-perspective degree distributions and their realized node counts."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ParameterError

_FRACTION_TOL = 1e-6


@dataclass(frozen=True)
class DegreeDistribution:
    """Edge fractions lambda_d (variables) and mu_d (checks)."""

    lam: dict[int, float]
    mu: dict[int, float]

    def __post_init__(self):
        for name, dist in (("lambda", self.lam), ("mu", self.mu)):
            if not dist:
                raise ParameterError(f"{name} distribution is empty")
            for d, frac in dist.items():
                if d < 2:
                    raise ParameterError(f"{name} degree {d} < 2")
                if frac < 0:
                    raise ParameterError(f"{name}_{d} negative")
            total = sum(dist.values())
            if abs(total - 1.0) > _FRACTION_TOL:
                raise ParameterError(f"{name} fractions sum to {total}, not 1")

    @property
    def max_var_degree(self) -> int:
        return max(self.lam)

    @property
    def max_chk_degree(self) -> int:
        return max(self.mu)

    def inv_degree_sums(self) -> tuple[float, float]:
        lv = sum(f / d for d, f in self.lam.items())
        lc = sum(f / d for d, f in self.mu.items())
        return lv, lc


def design_rate(dd: DegreeDistribution) -> float:
    """1 - (sum mu_d/d) / (sum lambda_d/d)."""
    lv, lc = dd.inv_degree_sums()
    return 1.0 - lc / lv


def node_counts(dd: DegreeDistribution, n: int) -> tuple[dict[int, int], dict[int, int]]:
    """Integer variable/check node counts per degree for block length n.

    Variable counts are largest-remainder rounded to exactly n nodes; the
    check total is anchored to the design rate and each check degree count
    rounded within 1.  Whatever edge imbalance remains after the rounding
    freedoms is absorbed by retyping a single check node, so the realized
    rate stays within the 0.002 contract even for very spread-out degree
    sets (a degree-1000 tail shifts hundreds of edges per rounding step).
    """
    if any(d > n for d in list(dd.lam) + list(dd.mu)):
        raise ParameterError("a degree exceeds the block length")
    lv, lc = dd.inv_degree_sums()
    m = int(round(n / lv * lc))
    chk_frac = {d: (f / d) / lc for d, f in dd.mu.items()}
    nc = dict(_round_counts({d: m * f for d, f in chk_frac.items()}, m))
    capacity = sum(d * c for d, c in nc.items())

    # variable floor/ceil combination closest to the check capacity
    targets = {d: (n / lv) * f / d for d, f in dd.lam.items()}
    floors = {d: int(np.floor(t)) for d, t in targets.items()}
    n_ceils = n - sum(floors.values())
    if n_ceils < 0 or n_ceils > len(targets):
        nv = dict(_round_counts(targets, n))
    else:
        degs = sorted(targets)
        best_combo, best_gap = None, None
        for combo in _combinations(degs, n_ceils):
            ev = sum(d * floors[d] for d in degs) + sum(combo)
            gap = abs(ev - capacity)
            if best_gap is None or gap < best_gap:
                best_combo, best_gap = combo, gap
        nv = dict(floors)
        for d in best_combo:
            nv[d] += 1
    ev = sum(d * c for d, c in nv.items())

    residual = ev - capacity
    if residual != 0:
        nc = _absorb_slack_check(nc, residual)
    assert sum(d * c for d, c in nc.items()) == ev
    assert sum(nv.values()) == n
    return {d: c for d, c in nv.items() if c > 0}, {d: c for d, c in nc.items() if c > 0}


def _combinations(items, r):
    from itertools import combinations

    if r == 0:
        yield ()
        return
    yield from combinations(items, r)


def _absorb_slack_check(nc: dict[int, int], residual: int) -> dict[int, int]:
    """Adjust one or two check nodes so the edge totals match exactly."""
    out = dict(nc)
    for _ in range(64):
        if residual == 0:
            break
        retyped = False
        for d in sorted(out, key=lambda d: -d if residual < 0 else d):
            nd = d + residual
            if out.get(d, 0) >= 1 and nd >= 2 and nd != d:
                out[d] -= 1
                out[nd] = out.get(nd, 0) + 1
                residual = 0
                retyped = True
                break
        if retyped:
            break
        if residual < 0:
            # no small-enough degree to shrink: drop one large check
            d = max(d for d in out if out[d] >= 1)
            out[d] -= 1
            residual += d
        elif residual >= 2:
            out[residual] = out.get(residual, 0) + 1
            residual = 0
        else:
            raise ParameterError(
                f"cannot realize distribution: unresolvable edge residual {residual}"
            )
    if residual != 0:
        raise ParameterError(
            f"cannot realize distribution: unresolvable edge residual {residual}"
        )
    return {k: v for k, v in out.items() if v > 0}


def _round_counts(targets: dict[int, float], total: int) -> dict[int, int]:
    floors = {d: int(np.floor(t)) for d, t in targets.items()}
    remainder = total - sum(floors.values())
    if remainder < 0:
        # floor overshoot can only come from rounding `total` itself
        for d in sorted(targets, key=lambda d: targets[d] - floors[d]):
            while remainder < 0 and floors[d] > 0:
                floors[d] -= 1
                remainder += 1
    order = sorted(targets, key=lambda d: floors[d] - targets[d])
    for d in order[:remainder]:
        floors[d] += 1
    return {d: c for d, c in floors.items() if c > 0}


def write_degree_file(dd: DegreeDistribution, path) -> None:
    """Text format: lines 'v d frac' and 'c d frac'."""
    with open(path, "w") as fh:
        for d in sorted(dd.lam):
            fh.write(f"v {d} {dd.lam[d]!r}\n")
        for d in sorted(dd.mu):
            fh.write(f"c {d} {dd.mu[d]!r}\n")


def load_degree_file(path) -> DegreeDistribution:
    lam: dict[int, float] = {}
    mu: dict[int, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("v", "c"):
                raise ParameterError(f"{path}:{lineno}: expected 'v|c degree frac'")
            d = int(parts[1])
            frac = float(parts[2])
            (lam if parts[0] == "v" else mu)[d] = frac
    return DegreeDistribution(lam=lam, mu=mu)


# Shipped ensembles for the two-group systems: keys are (channel kappa,
# allocation point); each value lists one degree file per group.
FIXTURE_SETS = {
    "k10_sym": ["mu_k10_sym.dd"],
    "k10_b100": ["mu_k10_b100_g1.dd", "mu_k10_b100_g2.dd"],
    "k10_b02": ["mu_k10_b02_g1.dd", "mu_k10_b02_g2.dd"],
    "k50_f": ["mu_k50_f.dd"],
    "k50_q1": ["mu_k50_q1_g1.dd", "mu_k50_q1_g2.dd"],
    "k50_q2": ["mu_k50_q2_g1.dd", "mu_k50_q2_g2.dd"],
}


def fixture_path(filename: str):
    return resources.files("gmumimo.fixtures").joinpath(filename)


def load_fixture(set_name: str) -> list[DegreeDistribution]:
    try:
        files = FIXTURE_SETS[set_name]
    except KeyError:
        raise ParameterError(
            f"unknown fixture set {set_name!r}; have {sorted(FIXTURE_SETS)}"
        ) from None
    return [load_degree_file(fixture_path(f)) for f in files]
