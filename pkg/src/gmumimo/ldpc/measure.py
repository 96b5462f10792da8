"""Monte-Carlo measurement of decoder MMSE transfer curves.

Under the scalar surrogate model r = x + rho^{-1/2} z the per-antenna
decoder MMSE at observation quality rho is the mean squared error of the
APP symbol estimate after demapping and sum-product decoding.  Measuring
here instead of inside the full receiver is exact in the state-evolution
sense and orders of magnitude cheaper.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..constellation import (
    Constellation,
    MmseCurve,
    batch_bit_llrs,
    soft_symbols_from_bit_llrs,
    symbols_from_bits,
)
from ..errors import ParameterError
from .decoder import spa_decode_batch
from .degrees import DegreeDistribution
from .graph import LdpcCode, build_graph

_BATCH = 32
_STABILITY_TOL = 1e-4


@dataclass(frozen=True)
class TransferCurveEstimate:
    curve: MmseCurve
    stderr: np.ndarray
    trials: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.stderr)):
            raise ParameterError("standard errors must be finite")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "mmse", "stderr", "trials"])
            for r, v, s, t in zip(
                self.curve.rho_grid, self.curve.values, self.stderr, self.trials
            ):
                w.writerow([repr(r), repr(v), repr(s), int(t)])

    @classmethod
    def from_csv(cls, path) -> "TransferCurveEstimate":
        from ..constellation import _read_curve_csv

        rho, mmse, stderr, trials = _read_curve_csv(
            path, ("rho", "mmse", "stderr", "trials")
        )
        return cls(
            curve=MmseCurve(rho_grid=rho, values=mmse, rise_tol=np.inf),
            stderr=stderr,
            trials=trials.astype(int),
        )


def measure_code_mmse(
    code: LdpcCode,
    constellation: Constellation,
    rho: float,
    trials: int,
    rng: np.random.Generator,
    max_iters: int = 200,
) -> tuple[float, float]:
    """(mean squared error, standard error) of the APP symbol estimate."""
    if rho <= 0:
        raise ParameterError("rho must be positive")
    bps = constellation.bits_per_symbol
    if code.n % bps:
        raise ParameterError(f"code length {code.n} not divisible by {bps} bits/symbol")
    nsym = code.n // bps
    per_trial = []
    done = 0
    while done < trials:
        nb = min(_BATCH, trials - done)
        info = rng.integers(0, 2, size=(nb, code.k), dtype=np.uint8)
        cw = code.encode(info)                                   # (nb, n)
        bits = cw.reshape(nb, nsym, bps)
        x = symbols_from_bits(constellation, bits)               # (nb, nsym)
        noise = (
            rng.standard_normal((nb, nsym)) + 1j * rng.standard_normal((nb, nsym))
        ) / np.sqrt(2.0)
        r = x + noise / np.sqrt(rho)
        llrs = batch_bit_llrs(constellation, r, rho)             # (nb, nsym, bps)
        res = spa_decode_batch(
            code,
            np.ascontiguousarray(llrs.reshape(nb, code.n).T),
            max_iters=max_iters,
            stability_tol=_STABILITY_TOL,
        )
        app = res.app_llrs.T.reshape(nb, nsym, bps)
        xhat, _ = soft_symbols_from_bit_llrs(constellation, app)
        per_trial.extend(np.mean(np.abs(x - xhat) ** 2, axis=1).tolist())
        done += nb
    vals = np.asarray(per_trial)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, stderr


def measure_transfer_curve(
    dd: DegreeDistribution,
    constellation: Constellation,
    rho_grid,
    n: int,
    trials: int,
    seed: int,
    max_iters: int = 200,
    code: LdpcCode | None = None,
) -> TransferCurveEstimate:
    """Measure Omega_C over `rho_grid` with `trials` codewords per node."""
    rho_grid = np.asarray(rho_grid, dtype=float)
    if np.any(np.diff(rho_grid) <= 0):
        raise ParameterError("rho grid must be strictly increasing")
    if code is None:
        code = build_graph(dd, n, seed)
    values = np.empty(rho_grid.size)
    errs = np.empty(rho_grid.size)
    for i, rho in enumerate(rho_grid):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D736572, i]))
        values[i], errs[i] = measure_code_mmse(
            code, constellation, float(rho), trials, rng, max_iters
        )
    curve = MmseCurve(
        rho_grid=rho_grid, values=np.clip(values, 0.0, 1.0), rise_tol=np.inf
    )
    return TransferCurveEstimate(
        curve=curve, stderr=errs, trials=np.full(rho_grid.size, trials)
    )
