"""Tanner graph construction (PEG-style) and GF(2) encoding support."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from .degrees import DegreeDistribution, design_rate, node_counts

_RATE_SLACK = 0.002
# stop 4-cycle screening for a variable after this many placed edges;
# hub nodes cannot stay 4-cycle-free anyway and the scan cost explodes
_CYCLE_SCREEN_LIMIT = 8
_SAMPLE_TRIES = 24


@dataclass
class LdpcCode:
    """Realized LDPC instance with edge arrays and an encoder.

    Edges are stored twice: sorted by variable (`edge_chk`, `var_ptr`) and as
    a permutation grouping them by check (`chk_perm`, `chk_ptr`).
    """

    n: int
    m: int
    k: int
    edge_chk: np.ndarray
    edge_var: np.ndarray
    var_ptr: np.ndarray
    chk_ptr: np.ndarray
    chk_perm: np.ndarray
    info_cols: np.ndarray
    pivot_cols: np.ndarray
    parity_gen: np.ndarray = field(repr=False)  # uint8 (rank, k): p = G u mod 2
    dd: DegreeDistribution | None = None

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def n_edges(self) -> int:
        return self.edge_chk.size

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Map info bits (..., k) to codewords (..., n)."""
        u = np.atleast_2d(np.asarray(info_bits, dtype=np.uint8))
        if u.shape[-1] != self.k:
            raise ParameterError(f"expected {self.k} info bits, got {u.shape[-1]}")
        parity = (u.astype(np.float32) @ self.parity_gen.T.astype(np.float32)) % 2.0
        out = np.zeros(u.shape[:-1] + (self.n,), dtype=np.uint8)
        out[..., self.info_cols] = u
        out[..., self.pivot_cols] = parity.astype(np.uint8)
        return out if np.asarray(info_bits).ndim > 1 else out[0]

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        """Parity of every check (0 = satisfied)."""
        b = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        flat = b.reshape(-1, self.n)
        contrib = flat[:, self.edge_var[self.chk_perm]]
        syn = np.zeros((flat.shape[0], self.m), dtype=np.uint8)
        for c in range(self.m):
            lo, hi = self.chk_ptr[c], self.chk_ptr[c + 1]
            syn[:, c] = np.bitwise_xor.reduce(contrib[:, lo:hi], axis=1)
        syn = syn.reshape(b.shape[:-1] + (self.m,))
        return syn if np.asarray(bits).ndim > 1 else syn[0]

    def var_degrees(self) -> np.ndarray:
        return np.diff(self.var_ptr)

    def chk_degrees(self) -> np.ndarray:
        return np.diff(self.chk_ptr)


class _SlotSampler:
    """Uniform sampling over remaining check slots (configuration model).

    Capacity weighting is realized by rejection against the current maximum
    remaining capacity; exhausted checks leave the open list in O(1).
    """

    def __init__(self, cap: np.ndarray, rng):
        self.cap = cap
        self.rng = rng
        self.open = [int(c) for c in np.flatnonzero(cap > 0)]
        self.pos = {c: i for i, c in enumerate(self.open)}
        self.max_cap = int(cap.max()) if cap.size else 0
        self._since_refresh = 0

    def consume(self, c: int) -> None:
        self.cap[c] -= 1
        if self.cap[c] == 0:
            i = self.pos.pop(c)
            last = self.open[-1]
            self.open[i] = last
            if last != c:
                self.pos[last] = i
            self.open.pop()
        self._since_refresh += 1
        if self._since_refresh >= 1024:
            self._since_refresh = 0
            self.max_cap = int(self.cap[self.open].max()) if self.open else 0

    def sample(self, blocked, soft_blocked=None) -> int | None:
        if not self.open:
            return None
        for _ in range(12 * _SAMPLE_TRIES):
            c = self.open[self.rng.integers(len(self.open))]
            if self.rng.random() * self.max_cap >= self.cap[c]:
                continue
            if c in blocked:
                continue
            if soft_blocked is not None and c in soft_blocked:
                continue
            return int(c)
        # systematic fallback, slot-weight order no longer matters
        clean, dirty = None, None
        for c in self.open:
            if c in blocked:
                continue
            if soft_blocked is not None and c in soft_blocked:
                if dirty is None:
                    dirty = int(c)
                continue
            clean = int(c)
            break
        return clean if clean is not None else dirty


def build_graph(dd: DegreeDistribution, n: int, seed: int) -> LdpcCode:
    """Progressive edge placement with 4-cycle avoidance where possible."""
    nv, nc = node_counts(dd, n)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x67726170]))

    var_deg = np.repeat(np.fromiter(nv.keys(), int), np.fromiter(nv.values(), int))
    rng.shuffle(var_deg)
    chk_deg = np.repeat(np.fromiter(nc.keys(), int), np.fromiter(nc.values(), int))
    rng.shuffle(chk_deg)
    m = chk_deg.size
    if np.any(var_deg > m):
        raise ParameterError("a variable degree exceeds the check count")

    order = np.argsort(var_deg, kind="stable")  # ascending: protect low degrees
    sampler = _SlotSampler(chk_deg.astype(np.int64).copy(), rng)
    var_adj: list[list[int]] = [[] for _ in range(n)]
    chk_adj: list[list[int]] = [[] for _ in range(m)]

    for v in order:
        d = int(var_deg[v])
        mine = var_adj[v]
        for j in range(d):
            taken = set(mine)
            soft = None
            if 0 < j and len(mine) <= _CYCLE_SCREEN_LIMIT:
                soft = set()
                for c in mine:
                    for v2 in chk_adj[c]:
                        if v2 != v:
                            soft.update(var_adj[v2])
                soft -= taken
            chosen = sampler.sample(taken, soft)
            if chosen is None:
                _swap_in_edge(v, var_adj, chk_adj, sampler, rng)
                continue
            mine.append(chosen)
            chk_adj[chosen].append(v)
            sampler.consume(chosen)

    return _finalize(var_adj, chk_adj, n, m, dd)


def _swap_in_edge(v, var_adj, chk_adj, sampler, rng) -> None:
    """Every check with remaining capacity already touches v: free a slot on
    a full check v does not touch by moving one of its members to an open
    check, then give that freed slot to v."""
    open_list = list(sampler.open)
    mine = set(var_adj[v])
    blocked = mine | set(open_list)
    order = rng.permutation(len(chk_adj))
    for c_fresh in order:
        c_fresh = int(c_fresh)
        if c_fresh in blocked or not chk_adj[c_fresh]:
            continue
        members = chk_adj[c_fresh]
        for di in rng.permutation(len(members))[:50]:
            donor = members[int(di)]
            if donor == v:
                continue
            donor_adj = set(var_adj[donor])
            for c_open in open_list:
                if c_open in donor_adj:
                    continue
                chk_adj[c_fresh].remove(donor)
                var_adj[donor].remove(c_fresh)
                var_adj[donor].append(c_open)
                chk_adj[c_open].append(donor)
                sampler.consume(c_open)
                var_adj[v].append(c_fresh)
                chk_adj[c_fresh].append(v)
                return
    raise ParameterError("infeasible distribution: edge swap failed")


def _finalize(var_adj, chk_adj, n, m, dd) -> LdpcCode:
    for v in range(n):
        if len(set(var_adj[v])) != len(var_adj[v]):
            raise ParameterError(f"duplicate edge at variable {v}")
    var_ptr = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        var_ptr[v + 1] = var_ptr[v] + len(var_adj[v])
    n_edges = int(var_ptr[-1])
    edge_chk = np.empty(n_edges, dtype=np.int64)
    edge_var = np.empty(n_edges, dtype=np.int64)
    for v in range(n):
        lo = var_ptr[v]
        edge_chk[lo : lo + len(var_adj[v])] = var_adj[v]
        edge_var[lo : lo + len(var_adj[v])] = v
    chk_perm = np.argsort(edge_chk, kind="stable").astype(np.int64)
    chk_sorted = edge_chk[chk_perm]
    chk_ptr = np.zeros(m + 1, dtype=np.int64)
    np.add.at(chk_ptr, chk_sorted + 1, 1)
    chk_ptr = np.cumsum(chk_ptr)

    h_packed = _pack_h(var_adj, n, m)
    info_cols, pivot_cols, parity_gen = _gf2_encoder(h_packed, n, m)
    code = LdpcCode(
        n=n,
        m=m,
        k=info_cols.size,
        edge_chk=edge_chk,
        edge_var=edge_var,
        var_ptr=var_ptr,
        chk_ptr=chk_ptr.astype(np.int64),
        chk_perm=chk_perm,
        info_cols=info_cols,
        pivot_cols=pivot_cols,
        parity_gen=parity_gen,
        dd=dd,
    )
    if abs(code.rate - design_rate(dd)) > _RATE_SLACK:
        raise ParameterError(
            f"realized rate {code.rate:.4f} deviates from design "
            f"{design_rate(dd):.4f} by more than {_RATE_SLACK}"
        )
    return code


def _pack_h(var_adj, n, m) -> np.ndarray:
    words = (n + 63) // 64
    h = np.zeros((m, words), dtype=np.uint64)
    for v, checks in enumerate(var_adj):
        w, b = divmod(v, 64)
        bit = np.uint64(1) << np.uint64(b)
        for c in checks:
            h[c, w] ^= bit
    return h


def _gf2_encoder(h: np.ndarray, n: int, m: int):
    """Reduced row echelon over GF(2); returns (info_cols, pivot_cols, G)
    with parity = G @ info mod 2."""
    rows = h.copy()
    pivot_cols_list: list[int] = []
    r = 0
    for col in range(n):
        w, b = divmod(col, 64)
        bit = np.uint64(1) << np.uint64(b)
        block = np.flatnonzero(rows[r:, w] & bit)
        if block.size == 0:
            continue
        sel = r + block[0]
        if sel != r:
            rows[[r, sel]] = rows[[sel, r]]
        hits = np.flatnonzero(rows[:, w] & bit)
        hits = hits[hits != r]
        rows[hits] ^= rows[r]
        pivot_cols_list.append(col)
        r += 1
        if r == m:
            break
    pivot_cols = np.asarray(pivot_cols_list, dtype=np.int64)
    info_cols = np.setdiff1d(np.arange(n, dtype=np.int64), pivot_cols)
    rank = r
    gen = np.zeros((rank, info_cols.size), dtype=np.uint8)
    for j, col in enumerate(info_cols):
        w, b = divmod(int(col), 64)
        bit = np.uint64(1) << np.uint64(b)
        gen[:, j] = (rows[:rank, w] & bit != 0).astype(np.uint8)
    return info_cols, pivot_cols, gen
