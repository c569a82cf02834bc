"""End-to-end embedding from a learned schedule."""

from __future__ import annotations

import numpy as np

from .factorize import EmbeddingPair, embed_from_svd, factorize
from .graph import CsrGraph
from .proximity import assemble_proximity, surviving_delta, log_transform
from .schedule import Schedule


class EmptyProximityError(ValueError):
    pass


def embed_graph(g: CsrGraph, s: Schedule, delta: float, d: int, rng: np.random.Generator,
                backend: str = "auto", dense_cap: int = 5000, threads: int = 1,
                oversampling: int = 10, power_iters: int = 2) -> EmbeddingPair:
    """Sparse proximity via push on ``g`` and its transpose, ``ln(S/delta)``,
    rank-``d`` SVD, then ``X = U sqrt(S)``, ``Y = V sqrt(S)``."""
    S = assemble_proximity(g, delta, s, threads=threads)
    if S.nnz == 0:
        best = surviving_delta(g, delta, s)
        hint = f"delta={best:g} keeps entries" if best else "no delta down to 1e-12 smaller helps"
        raise EmptyProximityError(f"no proximity entry exceeds delta={delta:g}; {hint}")
    M = log_transform(S, delta)
    kwargs = {} if backend == "dense" else dict(oversampling=oversampling, power_iters=power_iters)
    if backend == "auto" and max(M.shape) <= dense_cap:
        kwargs = {}
    t = factorize(M, d, backend=backend, dense_cap=dense_cap, rng=rng, **kwargs)
    return embed_from_svd(t)
