"""Command-line frontend.

Subcommands mirror the analysis pipeline: channel generation, MMSE curves,
capacity/region/rate computations, code tooling, and the BER harness.  SNR
is always dB on this surface and rates are reported in bits; every run
writes a JSON manifest next to its outputs before the results land.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import allocation as alloc
from . import se
from .channel import (
    SnrPoint,
    gen_iid_gaussian,
    gen_ill_conditioned,
    load as load_channel,
    save as save_channel,
)
from .constellation import MmseCurve, MmseFunction, make_constellation, mmse_of, tabulate_mmse
from .errors import FormatError, GmuError, ModelError, NumericError, ParameterError
from .ldpc import (
    build_graph,
    design_rate,
    load_degree_file,
    load_fixture,
    measure_transfer_curve,
    optimize_degrees,
    se_threshold,
    write_degree_file,
)
from .simharness import (
    ExperimentConfig,
    desk_scale_config,
    run_ber,
    write_ber_csv,
    write_manifest,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LN2 = float(np.log(2.0))


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, out: Path, name: str, extra=None) -> None:
    payload = {
        "command": name,
        "argv": sys.argv[1:],
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        payload.update(extra)
    (out / f"{name}_manifest.json").write_text(
        json.dumps(payload, indent=2, default=str)
    )


def _load_pair(args) -> tuple[se.TransferPair, object]:
    chan = load_channel(args.channel)
    pair = se.TransferPair(chan.spectrum, chan.n, SnrPoint.from_db(args.snr_db))
    return pair, chan


def _omega(args):
    return MmseFunction(make_constellation(args.mod))


def _snr_list(args) -> list[float]:
    if getattr(args, "snr_sweep", None):
        a, b, step = (float(x) for x in args.snr_sweep.split(":"))
        count = int(round((b - a) / step)) + 1
        return [a + i * step for i in range(count)]
    if getattr(args, "snr_db", None) is None:
        raise ParameterError("need --snr-db or --snr-sweep")
    return [args.snr_db]


# ---------------------------------------------------------------- commands

def cmd_chan_gen(args) -> int:
    out = _out_dir(args)
    if args.iid:
        chan = gen_iid_gaussian(args.m, args.n, args.seed)
    else:
        chan = gen_ill_conditioned(args.m, args.n, args.kappa, args.seed)
    _manifest(args, out, "chan_gen")
    save_channel(chan, out / args.name)
    print(f"wrote {out / args.name} (M={chan.m}, N={chan.n})")
    return EXIT_OK


def cmd_mmse_curve(args) -> int:
    out = _out_dir(args)
    const = make_constellation(args.mod)
    if args.rho is not None:
        print(f"{mmse_of(const, args.rho):.12g}")
        return EXIT_OK
    curve = tabulate_mmse(const, args.rho_min, args.rho_max, args.points)
    _manifest(args, out, "mmse_curve")
    path = out / f"mmse_{args.mod}.csv"
    curve.to_csv(path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_se_capacity(args) -> int:
    out = _out_dir(args)
    omega_s = _omega(args)
    chan = load_channel(args.channel)
    rows = []
    for db in _snr_list(args):
        pair = se.TransferPair(chan.spectrum, chan.n, SnrPoint.from_db(db))
        fp = se.find_fixed_point(pair, omega_s)
        rep = se.sum_capacity(pair, omega_s, fp)
        rows.append((db, rep.per_antenna_bits))
        print(
            f"snr {db:.3f} dB: per-antenna {rep.per_antenna_bits:.6f} bits "
            f"(sum {rep.sum_capacity_nats / LN2:.3f} bits, rho*={fp.rho_star:.5f})"
        )
    _manifest(args, out, "se_capacity")
    se.write_capacity_csv(out / "capacity_vs_snr.csv", rows)
    return EXIT_OK


def cmd_se_region(args) -> int:
    out = _out_dir(args)
    omega_s = _omega(args)
    pair, chan = _load_pair(args)
    fp = se.find_fixed_point(pair, omega_s)
    bs = [float(x) for x in args.b_list.split(",")]
    half = chan.n // 2
    rows = []
    for b in bs:
        plan = alloc.GroupPlan.two_group_from_b(
            b, 1.0 / float(omega_s(fp.rho_star)), (half, chan.n - half)
        )
        curves = alloc.group_curves(pair, omega_s, plan, fp)
        rates = alloc.group_rate_tuple(curves, plan)
        r1, r2 = rates.group_rates_bits
        rows.append((b, r1, r2))
        print(f"b={b:g}: R1={r1:.2f} R2={r2:.2f} (sum {r1 + r2:.2f} bits)")
    _manifest(args, out, "se_region")
    se.write_rate_region_csv(out / "rate_region.csv", rows)
    return EXIT_OK


def cmd_se_turbo_rate(args) -> int:
    omega_s = _omega(args)
    pair, _ = _load_pair(args)
    rate = se.turbo_lmmse_rate(pair, omega_s)
    ach = se.achievable_avg_rate(pair, omega_s)
    print(
        f"turbo-lmmse {rate / LN2:.6f} bits/antenna; "
        f"orthogonalized receiver {ach / LN2:.6f}"
    )
    return EXIT_OK


def cmd_alloc_plan(args) -> int:
    out = _out_dir(args)
    omega_s = _omega(args)
    pair, chan = _load_pair(args)
    fp = se.find_fixed_point(pair, omega_s)
    c_star = 1.0 / float(omega_s(fp.rho_star))
    if args.gammas:
        gammas = np.array([float(x) for x in args.gammas.split(",")])
        g = gammas.size
        antennas = np.full(g, chan.n // g)
        antennas[-1] += chan.n - antennas.sum()
        plan = alloc.GroupPlan(
            gammas=gammas,
            c_star=c_star,
            antennas_per_group=antennas,
            users_per_group=np.ones(g, dtype=int),
        )
    else:
        half = chan.n // 2
        plan = alloc.GroupPlan.two_group_from_b(
            args.b, c_star, (half, chan.n - half)
        )
    curves = alloc.group_curves(pair, omega_s, plan, fp)
    rates = alloc.group_rate_tuple(curves, plan)
    _manifest(args, out, "alloc_plan")
    curves.to_csv(out / "group_curves.csv")
    alloc.write_rate_tuple_csv(out / "rate_tuple.csv", plan, rates)
    for g in range(plan.g_count):
        print(
            f"group {g + 1}: {plan.antennas_per_group[g]} antennas, "
            f"rate {rates.group_rates_bits[g]:.2f} bits"
        )
    print(f"sum rate {rates.sum_rate_bits:.2f} bits")
    return EXIT_OK


def _dd_from_arg(spec: str):
    if spec.startswith("fixture:"):
        rest = spec.split(":", 1)[1]
        if ":" in rest:
            name, idx = rest.split(":")
            return load_fixture(name)[int(idx)]
        return load_fixture(rest)[0]
    return load_degree_file(spec)


def cmd_code_rate(args) -> int:
    for spec in args.dd:
        dd = _dd_from_arg(spec)
        print(f"{spec}: design rate {design_rate(dd):.4f}")
    return EXIT_OK


def cmd_code_measure(args) -> int:
    out = _out_dir(args)
    const = make_constellation(args.mod)
    grid = np.geomspace(args.rho_min, args.rho_max, args.points)
    _manifest(args, out, "code_measure")
    for i, spec in enumerate(args.dd):
        dd = _dd_from_arg(spec)
        est = measure_transfer_curve(
            dd, const, grid, args.n, args.trials, args.seed + i
        )
        path = out / f"transfer_curve_g{i + 1}.csv"
        est.to_csv(path)
        print(f"wrote {path} (rate {design_rate(dd):.4f})")
    return EXIT_OK


def cmd_code_threshold(args) -> int:
    const = make_constellation(args.mod)
    chan = load_channel(args.channel)
    grid = np.geomspace(args.rho_min, args.rho_max, args.points)
    curves = []
    for i, spec in enumerate(args.dd):
        dd = _dd_from_arg(spec)
        est = measure_transfer_curve(
            dd, const, grid, args.n, args.trials, args.seed + i
        )
        curves.append(est.curve)
    th = se_threshold(curves, chan.spectrum, chan.n)
    print(f"threshold {th:.2f} dB" if np.isfinite(th) else "threshold: infeasible")
    return EXIT_OK


def cmd_code_optimize(args) -> int:
    out = _out_dir(args)
    target = MmseCurve.from_csv(args.target)
    mu_fixed = {}
    for item in args.mu.split(","):
        d, frac = item.split(":")
        mu_fixed[int(d)] = float(frac)
    result = optimize_degrees(
        target,
        mu_fixed,
        d_v_max=args.dv_max,
        n_eval=args.n_eval,
        budget=args.budget,
        seed=args.seed,
    )
    _manifest(args, out, "code_optimize", {"feasible": result.feasible})
    path = out / "optimized.dd"
    write_degree_file(result.dd, path)
    print(
        f"wrote {path}: rate {result.rate:.4f} "
        f"({'feasible' if result.feasible else 'INFEASIBLE best effort'})"
    )
    return EXIT_OK


def cmd_ber_run(args) -> int:
    out = _out_dir(args)
    if args.config:
        config = ExperimentConfig.from_toml(args.config)
    else:
        config = desk_scale_config(
            snr_db_list=tuple(_snr_list(args)),
            trial_budget=args.trials,
            receivers=tuple(args.receivers.split(",")),
        )
    write_manifest(out / "ber_manifest.json", config)
    records = run_ber(
        config,
        progress=lambda r: print(
            f"snr {r.snr_db:.2f} dB [{r.receiver}]: "
            f"ber {['%.3g' % b for b in r.per_group_ber]} "
            f"({r.trials} trials, {r.seconds:.0f}s)"
        ),
    )
    write_ber_csv(out / "ber_results.csv", records)
    print(f"wrote {out / 'ber_results.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gmumimo",
        description="Constrained capacity, code design, and link simulation "
        "for generalized multi-user MIMO",
    )
    sub = p.add_subparsers(dest="group", required=True)

    chan = sub.add_parser("chan", help="channel artifacts").add_subparsers(
        dest="cmd", required=True
    )
    g = chan.add_parser("gen", help="generate and save a channel matrix")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--kappa", type=float, default=1.0)
    g.add_argument("--iid", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default="chan.bin")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_chan_gen)

    mmse = sub.add_parser("mmse", help="constellation MMSE").add_subparsers(
        dest="cmd", required=True
    )
    g = mmse.add_parser("curve", help="evaluate or tabulate Omega_S")
    g.add_argument("--mod", required=True)
    g.add_argument("--rho", type=float, default=None)
    g.add_argument("--rho-min", type=float, default=1e-3)
    g.add_argument("--rho-max", type=float, default=100.0)
    g.add_argument("--points", type=int, default=512)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_mmse_curve)

    sep = sub.add_parser("se", help="state-evolution analysis").add_subparsers(
        dest="cmd", required=True
    )
    g = sep.add_parser("capacity", help="constrained capacity at snr points")
    _common_se_args(g)
    g.add_argument("--snr-sweep", default=None, help="A:B:STEP in dB")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_se_capacity)
    g = sep.add_parser("region", help="two-group rate region over b values")
    _common_se_args(g)
    g.add_argument("--b-list", default="0.2,1,2.5,100")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_se_region)
    g = sep.add_parser("turbo-rate", help="extrinsic-baseline achievable rate")
    _common_se_args(g)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_se_turbo_rate)

    al = sub.add_parser("alloc", help="group rate allocation").add_subparsers(
        dest="cmd", required=True
    )
    g = al.add_parser("plan", help="per-group curves and rates")
    _common_se_args(g)
    g.add_argument("--b", type=float, default=1.0)
    g.add_argument("--gammas", default=None, help="comma list for G groups")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_alloc_plan)

    code = sub.add_parser("code", help="LDPC tooling").add_subparsers(
        dest="cmd", required=True
    )
    g = code.add_parser("rate", help="design rate of degree files")
    g.add_argument("--dd", nargs="+", required=True)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_code_rate)
    g = code.add_parser("measure", help="Monte-Carlo transfer curves")
    _common_code_args(g)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_code_measure)
    g = code.add_parser("threshold", help="decoding threshold vs a channel")
    _common_code_args(g)
    g.add_argument("--channel", required=True)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_code_threshold)
    g = code.add_parser("optimize", help="search degree distributions")
    g.add_argument("--target", required=True, help="target curve CSV")
    g.add_argument("--mu", required=True, help="check side, e.g. 8:0.8,25:0.2")
    g.add_argument("--dv-max", type=int, default=200)
    g.add_argument("--n-eval", type=int, default=0)
    g.add_argument("--budget", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_code_optimize)

    ber = sub.add_parser("ber", help="link simulation").add_subparsers(
        dest="cmd", required=True
    )
    g = ber.add_parser("run", help="BER sweep (desk preset or TOML config)")
    g.add_argument("--config", default=None, help="TOML experiment file")
    g.add_argument("--snr-db", type=float, default=None)
    g.add_argument("--snr-sweep", default=None)
    g.add_argument("--trials", type=int, default=50)
    g.add_argument("--receivers", default="oamp,turbo")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=0, help="0 = library default")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_ber_run)

    return p


def _common_se_args(g) -> None:
    g.add_argument("--channel", required=True, help="channel .bin path")
    g.add_argument("--mod", default="qpsk")
    g.add_argument("--snr-db", type=float, default=None)


def _common_code_args(g) -> None:
    g.add_argument("--dd", nargs="+", required=True)
    g.add_argument("--mod", default="qpsk")
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--trials", type=int, default=200)
    g.add_argument("--rho-min", type=float, default=0.02)
    g.add_argument("--rho-max", type=float, default=8.0)
    g.add_argument("--points", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ParameterError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ModelError, GmuError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
