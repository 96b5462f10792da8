"""Monte-Carlo link-level experiments: encode, modulate, channel, receive.

A run is fully described by an `ExperimentConfig` (TOML on disk); every
random draw goes through named child seeds so records are bit-reproducible.
The channel matrix is quasi-static: fixed per configuration, fresh noise per
trial.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .channel import ChannelMatrix, gen_iid_gaussian, gen_ill_conditioned
from .constellation import make_constellation, symbols_from_bits
from .errors import ParameterError
from .ldpc import build_graph, load_degree_file, load_fixture
from .receiver import GroupLayout, mu_oamp_vamp, turbo_lmmse

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class ExperimentConfig:
    n_tx: int
    n_rx: int
    kappa: float | None          # None selects the IID Gaussian channel
    channel_seed: int
    constellation: str
    antennas_per_group: tuple
    degree_files: tuple          # one per group: path or fixture set member
    snr_db_list: tuple
    code_length: int
    slots: int
    max_outer_iters: int = 50
    spa_iters: int = 60
    trial_budget: int = 200
    error_event_floor: int = 100
    csi_error_stdvar: float = 0.0
    noise_seed: int = 1
    data_seed: int = 2
    graph_seed: int = 3
    receivers: tuple = ("oamp", "turbo")

    def __post_init__(self):
        if sum(self.antennas_per_group) != self.n_tx:
            raise ParameterError(
                f"antennas {self.antennas_per_group} do not sum to N={self.n_tx}"
            )
        if len(self.degree_files) != len(self.antennas_per_group):
            raise ParameterError("one degree file per group required")
        if not self.snr_db_list:
            raise ParameterError("snr sweep is empty")
        const = make_constellation(self.constellation)
        bps = const.bits_per_symbol
        for na in self.antennas_per_group:
            if (na * self.slots * bps) % self.code_length:
                raise ParameterError(
                    f"group of {na} antennas x {self.slots} slots x {bps} bits "
                    f"is not a whole number of length-{self.code_length} codewords"
                )

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        try:
            return cls(
                n_tx=raw["n_tx"],
                n_rx=raw["n_rx"],
                kappa=raw.get("kappa"),
                channel_seed=raw.get("channel_seed", 0),
                constellation=raw.get("constellation", "qpsk"),
                antennas_per_group=tuple(raw["antennas_per_group"]),
                degree_files=tuple(raw["degree_files"]),
                snr_db_list=tuple(raw["snr_db_list"]),
                code_length=raw["code_length"],
                slots=raw["slots"],
                max_outer_iters=raw.get("max_outer_iters", 50),
                spa_iters=raw.get("spa_iters", 60),
                trial_budget=raw.get("trial_budget", 200),
                error_event_floor=raw.get("error_event_floor", 100),
                csi_error_stdvar=raw.get("csi_error_stdvar", 0.0),
                noise_seed=raw.get("noise_seed", 1),
                data_seed=raw.get("data_seed", 2),
                graph_seed=raw.get("graph_seed", 3),
                receivers=tuple(raw.get("receivers", ("oamp", "turbo"))),
            )
        except KeyError as exc:
            raise ParameterError(f"missing config key {exc}") from exc


def desk_scale_config(**overrides) -> ExperimentConfig:
    """N=64, M=43, kappa=10 preset: minutes instead of hours per sweep."""
    base = dict(
        n_tx=64,
        n_rx=43,
        kappa=10.0,
        channel_seed=11,
        constellation="qpsk",
        antennas_per_group=(32, 32),
        degree_files=("fixture:k10_sym", "fixture:k10_sym"),
        snr_db_list=(4.0,),
        code_length=9984,
        slots=156,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def paper_scale_config(**overrides) -> ExperimentConfig:
    """N=500, M=333 geometry with length-1e5 codewords (hours per point)."""
    base = dict(
        n_tx=500,
        n_rx=333,
        kappa=10.0,
        channel_seed=11,
        constellation="qpsk",
        antennas_per_group=(250, 250),
        degree_files=("fixture:k10_sym", "fixture:k10_sym"),
        snr_db_list=(3.9,),
        code_length=100000,
        slots=400,
        trial_budget=20,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass
class BerRecord:
    snr_db: float
    receiver: str
    per_group_ber: list
    per_group_bler: list
    trials: int
    error_events: int
    seconds: float

    def as_dict(self):
        return asdict(self)


def _resolve_degrees(spec_str: str):
    if spec_str.startswith("fixture:"):
        name = spec_str.split(":", 1)[1]
        if ":" in name:
            set_name, idx = name.split(":")
            return load_fixture(set_name)[int(idx)]
        return load_fixture(name)[0]
    return load_degree_file(spec_str)


def build_channel(config: ExperimentConfig) -> ChannelMatrix:
    if config.kappa is None:
        return gen_iid_gaussian(config.n_rx, config.n_tx, config.channel_seed)
    return gen_ill_conditioned(
        config.n_rx, config.n_tx, config.kappa, config.channel_seed
    )


def apply_csi_error(
    chan: ChannelMatrix, stdvar: float, seed: int
) -> ChannelMatrix:
    """Receiver-side channel estimate: A + E with IID CN(0, stdvar^2) E."""
    if stdvar < 0:
        raise ParameterError("stdvar must be >= 0")
    if stdvar == 0.0:
        return chan
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x637369]))
    e = stdvar * (
        rng.standard_normal((chan.m, chan.n))
        + 1j * rng.standard_normal((chan.m, chan.n))
    ) / np.sqrt(2.0)
    entries = chan.entries + e
    u, s, vh = np.linalg.svd(entries, full_matrices=True)
    return ChannelMatrix(
        entries=entries, spectrum=s, m=chan.m, n=chan.n, u=u, v=vh, normalized=False
    )


@dataclass
class _Link:
    chan: ChannelMatrix
    chan_rx: ChannelMatrix
    groups: list
    codewords_per_group: list
    constellation: object
    bps: int


def _prepare(config: ExperimentConfig) -> _Link:
    const = make_constellation(config.constellation)
    chan = build_channel(config)
    chan_rx = apply_csi_error(chan, config.csi_error_stdvar, config.channel_seed + 1)
    groups = []
    ncws = []
    for g, (na, dspec) in enumerate(
        zip(config.antennas_per_group, config.degree_files)
    ):
        dd = _resolve_degrees(dspec)
        code = build_graph(dd, config.code_length, config.graph_seed + g)
        layout = GroupLayout(code=code, antennas=na)
        ncws.append(layout.codewords_per_group(config.slots, const.bits_per_symbol))
        groups.append(layout)
    return _Link(
        chan=chan,
        chan_rx=chan_rx,
        groups=groups,
        codewords_per_group=ncws,
        constellation=const,
        bps=const.bits_per_symbol,
    )


def _one_trial(link: _Link, config, snr: float, trial: int, receiver: str):
    const = link.constellation
    rng_data = np.random.default_rng(
        np.random.SeedSequence([config.data_seed, trial])
    )
    rng_noise = np.random.default_rng(
        np.random.SeedSequence([config.noise_seed, trial])
    )
    x = np.empty((config.n_tx, config.slots), dtype=complex)
    true_bits = []
    a0 = 0
    for layout, ncw in zip(link.groups, link.codewords_per_group):
        code = layout.code
        info = rng_data.integers(0, 2, size=(ncw, code.k), dtype=np.uint8)
        cw = code.encode(info)
        sym = symbols_from_bits(
            const, cw.reshape(ncw, -1, link.bps)
        ).reshape(layout.antennas, config.slots)
        x[a0 : a0 + layout.antennas] = sym
        true_bits.append(info)
        a0 += layout.antennas
    noise = (
        rng_noise.standard_normal((config.n_rx, config.slots))
        + 1j * rng_noise.standard_normal((config.n_rx, config.slots))
    ) / np.sqrt(2.0)
    y = link.chan.entries @ x + noise / np.sqrt(snr)
    fn = mu_oamp_vamp if receiver == "oamp" else turbo_lmmse
    res = fn(
        y,
        link.chan_rx,
        link.groups,
        const,
        snr,
        max_iters=config.max_outer_iters,
        spa_iters=config.spa_iters,
        true_bits=true_bits,
    )
    group_errs = []
    group_blk = []
    for g, truth in enumerate(true_bits):
        got = res.bits_per_group[g] if res.bits_per_group else np.ones_like(truth)
        errs = int(np.sum(got != truth))
        group_errs.append(errs)
        group_blk.append(int(np.any(got != truth, axis=1).sum()))
    return group_errs, group_blk, [t.size for t in true_bits]


def run_ber(config: ExperimentConfig, progress=None) -> list[BerRecord]:
    """Sweep snr points; each stops at `error_event_floor` bit errors or the
    trial budget, whichever comes first."""
    link = _prepare(config)
    records = []
    for snr_db in config.snr_db_list:
        snr = 10.0 ** (snr_db / 10.0)
        for receiver in config.receivers:
            t0 = time.time()
            bit_errs = np.zeros(len(link.groups), dtype=np.int64)
            blk_errs = np.zeros(len(link.groups), dtype=np.int64)
            bits_total = np.zeros(len(link.groups), dtype=np.int64)
            blocks_total = np.zeros(len(link.groups), dtype=np.int64)
            trials = 0
            while trials < config.trial_budget:
                ge, gb, gn = _one_trial(link, config, snr, trials, receiver)
                bit_errs += ge
                blk_errs += gb
                bits_total += gn
                blocks_total += link.codewords_per_group
                trials += 1
                if int(bit_errs.sum()) >= config.error_event_floor:
                    break
            rec = BerRecord(
                snr_db=float(snr_db),
                receiver=receiver,
                per_group_ber=(bit_errs / bits_total).tolist(),
                per_group_bler=(blk_errs / blocks_total).tolist(),
                trials=trials,
                error_events=int(bit_errs.sum()),
                seconds=time.time() - t0,
            )
            records.append(rec)
            if progress is not None:
                progress(rec)
    return records


def write_ber_csv(path, records: list[BerRecord]) -> None:
    import csv

    groups = len(records[0].per_group_ber) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["snr_db", "receiver", "trials", "error_events", "seconds"]
            + [f"ber_g{g + 1}" for g in range(groups)]
            + [f"bler_g{g + 1}" for g in range(groups)]
        )
        for r in records:
            w.writerow(
                [r.snr_db, r.receiver, r.trials, r.error_events, f"{r.seconds:.3f}"]
                + [repr(b) for b in r.per_group_ber]
                + [repr(b) for b in r.per_group_bler]
            )


def write_manifest(path, config: ExperimentConfig, extra: dict | None = None) -> None:
    payload = {"config": asdict(config)}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, default=str))
