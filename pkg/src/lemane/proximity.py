"""Sparse proximity assembly ``S(u, v) = pi_u(v) + pi^T_v(u)`` and its log transform."""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .graph import CsrGraph, transpose
from .schedule import Schedule
from .sppr import push_all_sources


def _keep_above(mat: sp.csr_matrix, delta: float) -> sp.csr_matrix:
    out = mat.copy()
    out.data[out.data <= delta] = 0.0
    out.eliminate_zeros()
    return out


def assemble_proximity(g: CsrGraph, delta: float, s: Schedule, threads: int = 1) -> sp.csr_matrix:
    """Push on ``g`` and on its transpose, keep estimates strictly above
    ``delta`` and add them up: forward estimates at ``(u, v)``, transpose
    estimates of source ``u`` at ``(v, u)``.

    Both passes run for undirected graphs too.
    """
    fwd = _keep_above(push_all_sources(g, delta, s, threads=threads), delta)
    bwd = _keep_above(push_all_sources(transpose(g), delta, s, threads=threads), delta)
    S = (fwd + bwd.T).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    return S


def log_transform(S: sp.csr_matrix, delta: float) -> sp.csr_matrix:
    """Replace each stored value ``x`` by ``ln(x / delta)``; the pattern is kept."""
    if S.nnz and S.data.min() <= delta:
        raise ValueError("log_transform needs every stored value above delta")
    M = S.copy().tocsr()
    M.data = np.log(M.data / delta)
    return M


def surviving_delta(g: CsrGraph, delta: float, s: Schedule, tries: int = 12) -> float | None:
    """Largest of ``delta/10, delta/100, ...`` whose proximity matrix keeps at
    least one entry, or ``None`` if none does within ``tries`` decades."""
    cand = delta
    for _ in range(tries):
        cand /= 10.0
        fwd = push_all_sources(g, cand, s)
        if fwd.nnz and fwd.data.max() > cand:
            return cand
    return None


def write_matrix(M: sp.spmatrix, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), comment=comment, precision=17)


def read_matrix(path) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(str(path)))
