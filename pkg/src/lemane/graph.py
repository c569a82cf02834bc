"""Graph ingestion, CSR storage, BFS subgraph sampling and edge splits."""

from __future__ import annotations

import re
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

_MAGIC = b"SPPRG1"


class GraphFormatError(ValueError):
    """Raised for unreadable or malformed graph files."""


@dataclass(frozen=True, eq=False)
class CsrGraph:
    """Directed graph in compressed sparse row form.

    Undirected graphs store every edge in both directions, so ``m`` counts
    each undirected edge twice. Rows are sorted and free of parallel edges.
    Row ``u`` of the transition matrix gives ``1 / out_degree(u)`` to each
    stored neighbour; rows of dangling nodes are empty.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    directed: bool = True
    _degree: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        cols = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        if offsets.shape != (self.n + 1,) or offsets[0] != 0 or offsets[-1] != cols.size:
            raise ValueError("row_offsets inconsistent with node/edge counts")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n):
            raise ValueError("column index out of range")
        degree = np.diff(offsets)
        owner = np.repeat(np.arange(self.n, dtype=np.int64), degree)
        if np.any((np.diff(cols) <= 0) & (owner[1:] == owner[:-1])):
            raise ValueError("columns must be strictly increasing within each row")
        if not self.directed:
            # rows are sorted, so owner*n+col is already ascending
            if not np.array_equal(owner * self.n + cols, np.sort(cols * self.n + owner)):
                raise ValueError("undirected graph must store both directions of every edge")
        offsets.flags.writeable = False
        cols.flags.writeable = False
        degree.flags.writeable = False
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "_degree", degree)

    @property
    def m(self) -> int:
        return int(self.col_indices.size)

    @property
    def out_degrees(self) -> np.ndarray:
        return self._degree

    def out_degree(self, u: int) -> int:
        return int(self._degree[u])

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def edges(self) -> np.ndarray:
        """All stored (u, v) pairs as an ``(m, 2)`` array in CSR order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self._degree)
        return np.column_stack([src, self.col_indices])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.size and row[i] == v)

    def edge_keys(self) -> np.ndarray:
        """Sorted int64 keys ``u * n + v``; handy for vectorised membership tests."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self._degree)
        return src * self.n + self.col_indices

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.m)
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def transition_matrix(self) -> sp.csr_matrix:
        """Row-stochastic ``P = D^-1 A`` with zero rows at dangling nodes."""
        inv = np.zeros(self.n)
        nz = self._degree > 0
        inv[nz] = 1.0 / self._degree[nz]
        data = np.repeat(inv, self._degree)
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    def same_edges(self, other: "CsrGraph") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"CsrGraph(n={self.n}, m={self.m}, {kind})"


@dataclass(frozen=True)
class NodeMapping:
    sub_to_orig: np.ndarray

    @property
    def orig_to_sub(self) -> dict[int, int]:
        return {int(o): i for i, o in enumerate(self.sub_to_orig)}

    def __len__(self):
        return int(self.sub_to_orig.size)


@dataclass(frozen=True)
class EdgeSplit:
    train_graph: CsrGraph
    test_pos: np.ndarray
    test_neg: np.ndarray


def from_edges(n: int, edges, directed: bool = True) -> CsrGraph:
    """Build a graph from an iterable / array of (u, v) pairs.

    Duplicates are collapsed and self-loops kept. For ``directed=False``
    every pair is also stored reversed.
    """
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError("edge endpoint out of range")
    if not directed:
        arr = np.concatenate([arr, arr[:, ::-1]])
    keys = np.unique(arr[:, 0] * n + arr[:, 1])
    src, dst = np.divmod(keys, n) if n else (keys, keys)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return CsrGraph(n, offsets, dst, directed)


_N_HEADER = re.compile(r"^#\s*n=(\d+)\b")


def load_edge_list(path, directed: bool, n: int | None = None) -> CsrGraph:
    """Read a whitespace-separated ``u v`` edge list.

    Lines starting with ``#`` or ``%`` are comments. Node ids must be
    non-negative integers. The node count is the largest of ``n``, a
    ``# n=<count>`` header (as written by ``write_edge_list``) and one more
    than the largest id seen, so trailing isolated nodes survive a round trip.
    """
    pairs = []
    declared = n or 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s[0] in "#%":
                hit = _N_HEADER.match(s)
                if hit:
                    declared = max(declared, int(hit.group(1)))
                continue
            parts = s.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {s!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id")
            pairs.append((u, v))
    if not pairs:
        raise GraphFormatError(f"{path}: no edges")
    arr = np.array(pairs, dtype=np.int64)
    return from_edges(max(int(arr.max()) + 1, declared), arr, directed)


def write_edge_list(g: CsrGraph, path) -> None:
    """Write a graph back out; undirected graphs emit each edge once (u <= v)."""
    e = g.edges()
    if not g.directed:
        e = e[e[:, 0] <= e[:, 1]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m} directed={int(g.directed)}\n")
        np.savetxt(fh, e, fmt="%d")


def save_binary(g: CsrGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQ", g.n, g.m))
        fh.write(g.row_offsets.astype("<u8").tobytes())
        fh.write(g.col_indices.astype("<u8").tobytes())


def load_binary(path, directed: bool | None = None) -> CsrGraph:
    """Load the ``SPPRG1`` cache. The format has no direction flag, so
    ``directed=None`` infers it from edge symmetry."""
    raw = Path(path).read_bytes()
    if raw[:6] != _MAGIC:
        raise GraphFormatError(f"{path}: bad magic")
    n, m = struct.unpack_from("<QQ", raw, 6)
    off = 22
    need = off + 8 * (n + 1) + 8 * m
    if len(raw) != need:
        raise GraphFormatError(f"{path}: truncated or oversized payload")
    offsets = np.frombuffer(raw, dtype="<u8", count=n + 1, offset=off).astype(np.int64)
    cols = np.frombuffer(raw, dtype="<u8", count=m, offset=off + 8 * (n + 1)).astype(np.int64)
    g = CsrGraph(int(n), offsets, cols, True)
    if directed is None:
        directed = not is_symmetric(g)
    return CsrGraph(g.n, g.row_offsets, g.col_indices, directed)


def is_symmetric(g: CsrGraph) -> bool:
    return np.array_equal(g.edge_keys(), transpose(g).edge_keys())


def transpose(g: CsrGraph) -> CsrGraph:
    """Reverse every edge. Rows of the result come out sorted."""
    e = g.edges()
    order = np.lexsort((e[:, 0], e[:, 1]))
    dst = e[order, 0]
    offsets = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(e[:, 1], minlength=g.n), out=offsets[1:])
    return CsrGraph(g.n, offsets, dst, g.directed)


def induced_subgraph(g: CsrGraph, nodes) -> tuple[CsrGraph, NodeMapping]:
    nodes = np.asarray(nodes, dtype=np.int64)
    local = np.full(g.n, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    e = g.edges()
    lu, lv = local[e[:, 0]], local[e[:, 1]]
    keep = (lu >= 0) & (lv >= 0)
    sub = from_edges(nodes.size, np.column_stack([lu[keep], lv[keep]]), directed=True)
    sub = CsrGraph(sub.n, sub.row_offsets, sub.col_indices, g.directed)
    return sub, NodeMapping(nodes)


def sample_bfs_subgraph(g: CsrGraph, n_s: int, rng: np.random.Generator) -> tuple[CsrGraph, NodeMapping]:
    """BFS-based sampler: restart from a uniformly random unvisited node
    until ``min(n_s, n)`` nodes are visited, then take the induced subgraph.

    Nodes are labelled in visit order.
    """
    if n_s < 1:
        raise ValueError("n_s must be positive")
    quota = min(n_s, g.n)
    visited = np.zeros(g.n, dtype=bool)
    order: list[int] = []
    offsets, cols = g.row_offsets, g.col_indices
    for src in rng.permutation(g.n):
        if len(order) >= quota:
            break
        if visited[src]:
            continue
        visited[src] = True
        order.append(int(src))
        queue = deque([int(src)])
        while queue and len(order) < quota:
            u = queue.popleft()
            for v in cols[offsets[u]:offsets[u + 1]]:
                if not visited[v]:
                    visited[v] = True
                    order.append(int(v))
                    queue.append(int(v))
                    if len(order) >= quota:
                        break
    return induced_subgraph(g, order)


def remove_edges_split(g: CsrGraph, ratio: float, rng: np.random.Generator,
                       max_attempts: int | None = None) -> EdgeSplit:
    """Hide ``floor(ratio * E)`` edges for testing and draw as many non-edges.

    ``E`` counts undirected edges once. Negatives are distinct pairs
    ``u != v`` that are not edges of ``g``; for undirected graphs they are
    unordered and reported with ``u < v``.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    e = g.edges()
    if not g.directed:
        e = e[e[:, 0] <= e[:, 1]]
    k = int(np.floor(ratio * len(e)))
    pick = np.zeros(len(e), dtype=bool)
    pick[rng.choice(len(e), size=k, replace=False)] = True
    test_pos = e[pick]
    train = from_edges(g.n, e[~pick], directed=g.directed)

    existing = set(g.edge_keys().tolist())
    chosen: dict[int, tuple[int, int]] = {}
    attempts = 0
    limit = max_attempts if max_attempts is not None else 100 * k + 1000
    while len(chosen) < k:
        if attempts >= limit:
            raise ValueError(f"could only find {len(chosen)} of {k} non-edges; graph too dense")
        batch = rng.integers(0, g.n, size=(max(2 * (k - len(chosen)), 16), 2))
        for u, v in batch:
            attempts += 1
            if u == v:
                continue
            if not g.directed and u > v:
                u, v = v, u
            key = int(u) * g.n + int(v)
            if key in existing or key in chosen:
                continue
            chosen[key] = (int(u), int(v))
            if len(chosen) == k or attempts >= limit:
                break
    test_neg = np.array(list(chosen.values()), dtype=np.int64).reshape(-1, 2)
    return EdgeSplit(train, test_pos.reshape(-1, 2), test_neg)


def stochastic_block_model(sizes, p_in: float, p_out: float, rng: np.random.Generator) -> tuple[CsrGraph, np.ndarray]:
    """Undirected SBM without self-loops. Returns the graph and block labels."""
    sizes = np.asarray(sizes, dtype=np.int64)
    labels = np.repeat(np.arange(sizes.size), sizes)
    n = int(sizes.sum())
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    g = from_edges(n, np.column_stack([iu[keep], ju[keep]]), directed=False)
    return g, labels
