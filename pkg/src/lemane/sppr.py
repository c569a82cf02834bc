"""Supervised personalized PageRank: exact dense kernel and generalized push."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .graph import CsrGraph
from .schedule import Schedule

DENSE_CAP = 20_000


class DenseCapError(ValueError):
    """The graph is too large for an n x n dense proximity matrix."""


def exact_sppr(g: CsrGraph, s: Schedule, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense truncated supervised PPR ``S_L = sum_l phi(l) P^l``.

    Row ``i`` is the stop distribution of walks started at ``i``. Walk mass
    reaching a dangling node stops there in full.
    """
    if g.n > cap:
        raise DenseCapError(f"n={g.n} exceeds dense cap {cap}; use generalized_push instead")
    P = g.transition_matrix()
    dangling = g.out_degrees == 0
    S = np.zeros((g.n, g.n))
    R = np.eye(g.n)
    for a in s.alphas:
        S += a * R
        if dangling.any():
            S[:, dangling] += (1.0 - a) * R[:, dangling]
        R = (1.0 - a) * (R @ P)
    return S


def hop_mass_products(g: CsrGraph, G: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Inner products of ``G`` with the hop-``l`` walk matrices ``P^l``.

    Returns ``(live, dead)`` where ``live[l] = <G, P^l restricted to
    non-dangling columns>`` and ``dead[l]`` is the same over dangling
    columns. ``S_L`` is linear in these with schedule-dependent weights,
    which is what the training backward pass needs.
    """
    P = g.transition_matrix()
    dangling = g.out_degrees == 0
    live = np.empty(L + 1)
    dead = np.zeros(L + 1)
    B = np.eye(g.n)
    for l in range(L + 1):
        prod = G * B
        if dangling.any():
            dead[l] = prod[:, dangling].sum()
            live[l] = prod[:, ~dangling].sum()
        else:
            live[l] = prod.sum()
        if l < L:
            B = B @ P
    return live, dead


@dataclass(frozen=True)
class SparseVector:
    n: int
    indices: np.ndarray
    values: np.ndarray

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.indices] = self.values
        return out

    def __len__(self):
        return int(self.indices.size)


@dataclass(frozen=True)
class PushState:
    """Diagnostics of one push run.

    ``residues[k]`` maps node -> residue still parked at hop ``k`` (below the
    push threshold). Mass that survives hop ``L`` is ``discarded_mass``.
    """

    residues: list
    pushes: int
    discarded_mass: float

    @property
    def residual_mass(self) -> float:
        return float(sum(sum(r.values()) for r in self.residues))


def _graph_arrays(g: CsrGraph):
    return g.row_offsets, g.col_indices, g.out_degrees.astype(np.int64)


def _check(g: CsrGraph, delta: float):
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def generalized_push(g: CsrGraph, source: int, delta: float, s: Schedule) -> tuple[SparseVector, PushState]:
    """Approximate row ``source`` of the supervised PPR matrix.

    While some hop-``k`` residue at ``v`` exceeds ``delta * d_out(v)`` (hop
    ``k <= L``) it is converted: ``alpha_k`` of it becomes estimate at ``v``
    and the rest spreads evenly to the out-neighbours at hop ``k + 1``.
    """
    _check(g, delta)
    if not 0 <= source < g.n:
        raise IndexError(f"source {source} out of range")
    offsets, cols, deg = _graph_arrays(g)
    n = g.n
    alphas = np.ascontiguousarray(s.alphas)

    def run(rec_cap):
        ws = (np.zeros(n), np.zeros(n, dtype=np.bool_), np.empty(n, dtype=np.int64),
              np.zeros(n), np.empty(n, dtype=np.int64), np.zeros(n),
              np.empty(n, dtype=np.int64), np.zeros(n, dtype=np.bool_))
        rec = (np.empty(rec_cap, dtype=np.int64), np.empty(rec_cap, dtype=np.int64), np.empty(rec_cap))
        out = _kernels.push_source(offsets, cols, deg, alphas, float(delta), int(source), *ws, *rec)
        return out, ws[0], ws[2], rec

    (n_pi, pushes, discarded, _, n_left), _, _, _ = run(0)
    (n_pi, pushes, discarded, _, _), pi, pi_nodes, (rh, rn, rv) = run(n_left)
    idx = np.sort(pi_nodes[:n_pi])
    residues = [dict() for _ in range(s.L + 1)]
    for k, v, r in zip(rh.tolist(), rn.tolist(), rv.tolist()):
        residues[k][v] = r
    return SparseVector(n, idx, pi[idx]), PushState(residues, int(pushes), float(discarded))


@dataclass(frozen=True)
class PushStats:
    pushes: np.ndarray
    discarded: np.ndarray
    leftover: np.ndarray


def push_all_sources(g: CsrGraph, delta: float, s: Schedule, threads: int = 1,
                     chunk: int = 256, return_stats: bool = False):
    """Run the push from every node; row ``u`` of the result is the estimate
    vector of source ``u``.

    Sources are split into fixed chunks that may run on ``threads`` worker
    threads; each row is computed independently, so the output does not
    depend on the thread count.
    """
    _check(g, delta)
    offsets, cols, deg = _graph_arrays(g)
    alphas = np.ascontiguousarray(s.alphas)
    starts = list(range(0, g.n, chunk))

    def work(lo):
        src = np.arange(lo, min(lo + chunk, g.n), dtype=np.int64)
        return _kernels.push_rows(offsets, cols, deg, alphas, float(delta), src)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(lo) for lo in starts]

    row_len = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(row_len, out=indptr[1:])
    indices = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    values = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    mat = sp.csr_matrix((values, indices, indptr), shape=(g.n, g.n))
    if not return_stats:
        return mat
    stats = PushStats(*(np.concatenate([p[i] for p in parts]) for i in (3, 4, 5)))
    return mat, stats


def dump_push_vector(vec: SparseVector, source: int, path) -> None:
    """Write ``source node value`` triples, one per stored entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for v, x in zip(vec.indices.tolist(), vec.values.tolist()):
            fh.write(f"{source} {v} {x:.17g}\n")
