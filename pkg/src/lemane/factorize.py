"""SVD backends and embedding extraction ``X = U sqrt(S)``, ``Y = V sqrt(S)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdTriple:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True)
class EmbeddingPair:
    X: np.ndarray
    Y: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return np.hstack([self.X, self.Y])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def canonicalize_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip column pairs so the largest-magnitude entry of each ``U`` column is positive."""
    if U.shape[1] == 0:
        return U, V
    peak = U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])]
    flip = np.where(peak < 0, -1.0, 1.0)
    return U * flip, V * flip


def _check_rank(shape, d):
    if not 1 <= d <= min(shape):
        raise ValueError(f"rank {d} outside 1..{min(shape)}")


def full_svd(M: np.ndarray) -> SvdTriple:
    """Complete SVD of a dense matrix with canonical signs."""
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64), full_matrices=False)
    U, V = canonicalize_signs(U, Vt.T)
    return SvdTriple(U, s, V)


def dense_svd(M, d: int) -> SvdTriple:
    """Top-``d`` singular triples via LAPACK."""
    if sp.issparse(M):
        M = M.toarray()
    _check_rank(M.shape, d)
    t = full_svd(M)
    return SvdTriple(t.U[:, :d].copy(), t.sigma[:d].copy(), t.V[:, :d].copy())


def _orth(A: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(A)
    return Q


def randomized_sparse_svd(M, d: int, oversampling: int = 10, power_iters: int = 2,
                          rng: np.random.Generator | None = None) -> SvdTriple:
    """Randomized range-finder SVD with power iterations.

    ``M`` is only touched through products with dense blocks, so a sparse
    matrix costs ``O(nnz * (d + oversampling) * (power_iters + 1))`` plus a
    small dense SVD.
    """
    _check_rank(M.shape, d)
    if oversampling < 2:
        raise ValueError("oversampling must be at least 2")
    if power_iters < 0:
        raise ValueError("power_iters must be non-negative")
    rng = np.random.default_rng() if rng is None else rng
    M = sp.csr_matrix(M) if sp.issparse(M) else np.asarray(M, dtype=np.float64)
    MT = M.T.tocsr() if sp.issparse(M) else M.T
    width = min(d + oversampling, min(M.shape))
    omega = rng.standard_normal((M.shape[1], width))
    Q = _orth(M @ omega)
    for _ in range(power_iters):
        Q = _orth(MT @ Q)
        Q = _orth(M @ Q)
    B = np.asarray(MT @ Q).T
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U, V = canonicalize_signs(Q @ Ub[:, :d], Vt[:d].T)
    return SvdTriple(U, s[:d].copy(), V)


def embed_from_svd(t: SvdTriple) -> EmbeddingPair:
    """Scale singular vectors by ``sqrt(sigma)``.

    Columns whose singular value is numerically zero (below
    ``RANK_TOL * sigma_max``) come out as zero columns.
    """
    if np.any(t.sigma < 0):
        raise ValueError("negative singular value")
    root = np.sqrt(t.sigma)
    if t.sigma.size and t.sigma.max() > 0:
        root = np.where(t.sigma < RANK_TOL * t.sigma.max(), 0.0, root)
    return EmbeddingPair(t.U * root, t.V * root)


def factorize(M, d: int, backend: str = "auto", dense_cap: int = 5000,
              rng: np.random.Generator | None = None, **kwargs) -> SvdTriple:
    if backend == "auto":
        backend = "dense" if max(M.shape) <= dense_cap else "randomized"
    if backend == "dense":
        return dense_svd(M, d)
    if backend == "randomized":
        return randomized_sparse_svd(M, d, rng=rng, **kwargs)
    raise ValueError(f"unknown SVD backend {backend!r}")


def write_embedding(path, E: np.ndarray, side: str) -> None:
    """TSV: header ``#lemane d=<d> side=<X|Y>`` then ``node<TAB>values``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#lemane d={E.shape[1]} side={side}\n")
        for i, row in enumerate(E):
            fh.write(str(i) + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def read_embedding(path) -> tuple[np.ndarray, str]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#lemane"):
            raise ValueError(f"{path}: missing embedding header")
        fields = dict(tok.split("=", 1) for tok in header.split()[1:])
        d = int(fields["d"])
        rows = {}
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != d + 1:
                raise ValueError(f"{path}: row with {len(parts) - 1} values, expected {d}")
            rows[int(parts[0])] = [float(x) for x in parts[1:]]
    n = max(rows) + 1 if rows else 0
    E = np.zeros((n, d))
    for i, vals in rows.items():
        E[i] = vals
    return E, fields.get("side", "?")
