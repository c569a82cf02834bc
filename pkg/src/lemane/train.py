"""Learning the stopping schedule on (sampled) subgraphs.

Forward: exact supervised PPR -> drop entries below delta -> ``ln(S/delta)``
-> SVD -> ``X = U sqrt(S)``, ``Y = V sqrt(S)`` -> task loss. The backward pass
is written out by hand: closed-form loss gradients, the SVD differential,
the log and the polynomial dependence of ``S`` on the schedule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .factorize import RANK_TOL, EmbeddingPair, SvdTriple, full_svd
from .graph import CsrGraph, sample_bfs_subgraph
from .schedule import ALPHA_FLOOR, Schedule, parse_init
from .sppr import DENSE_CAP, exact_sppr, hop_mass_products

log = logging.getLogger(__name__)

GAP_FLAG = 1e-6

# Per-dataset settings reported for the method (link prediction / classification).
PRESETS = {
    "wikipedia-link": dict(task="link", init="poisson:5", learning_rate=0.001, delta=1e-5, beta=0.01, gamma=1.0),
    "wikivote-link": dict(task="link", init="poisson:1", learning_rate=0.5, delta=1e-6, beta=0.5, gamma=1.0),
    "blogcatalog-link": dict(task="link", init="geometric:0.5", learning_rate=0.1, delta=1e-7, beta=0.01, gamma=1.0),
    "slashdot-link": dict(task="link", init="poisson:5", learning_rate=0.001, delta=1e-5, beta=0.1, gamma=1.0),
    "tweibo-link": dict(task="link", init="geometric:0.5", learning_rate=0.01, delta=1e-5, beta=0.1, gamma=1.0),
    "orkut-link": dict(task="link", init="poisson:1", learning_rate=0.01, delta=1e-4, beta=1.0, gamma=1.0),
    "wikipedia-class": dict(task="class", init="poisson:5", learning_rate=0.05, delta=1e-5, beta_c=1.0, gamma_c=0.5),
    "blogcatalog-class": dict(task="class", init="poisson:5", learning_rate=0.01, delta=1e-5, beta_c=1.0, gamma_c=0.5),
    "tweibo-class": dict(task="class", init="poisson:5", learning_rate=0.05, delta=1e-5, beta_c=1.0, gamma_c=3.0,
                         normalize_concat=True),
    "orkut-class": dict(task="class", init="poisson:1", learning_rate=0.5, delta=1e-5, beta_c=1.0, gamma_c=2.0,
                        normalize_concat=True),
}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "link"
    L: int = 15
    d: int = 128
    delta: float = 1e-5
    beta: float = 0.1
    gamma: float = 1.0
    beta_c: float = 1.0
    gamma_c: float = 3.0
    learning_rate: float = 0.01
    max_iters: int = 100
    convergence_tol: float = 1e-4
    window: int = 5
    n_s: int = 5000
    init: str = "poisson:5"
    seed: int = 0
    grad_mode: str = "analytic"
    fd_step: float = 1e-5
    neg_factor: int = 5
    #: "auto" divides the edge loss by n_s on sampled subgraphs and by the
    #: edge count on the full graph; "edges" always uses the edge count
    edge_norm: str = "auto"
    normalize_concat: bool = False
    label_fraction: float = 0.05
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in ("link", "class"):
            raise ValueError(f"task must be 'link' or 'class', not {self.task!r}")
        if self.grad_mode not in ("analytic", "finite_diff"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")
        if self.edge_norm not in ("auto", "edges", "sample"):
            raise ValueError(f"unknown edge_norm {self.edge_norm!r}")
        for name in ("L", "d", "n_s", "window", "neg_factor"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        for name in ("learning_rate", "convergence_tol", "fd_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("beta", "gamma", "beta_c", "gamma_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0 < self.label_fraction < 1:
            raise ValueError("label_fraction must lie in (0, 1)")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "TrainConfig":
        return cls(**{**PRESETS[name], **overrides})


# --------------------------------------------------------------------------
# labels

@dataclass(frozen=True)
class LabelSet:
    """Node labels as a sparse ``n x n_c`` indicator matrix.

    ``train_nodes`` is the small labelled sample visible to schedule
    training (drawn once per run).
    """

    indicator: sp.csr_matrix
    names: tuple = ()
    train_nodes: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.indicator.shape[0]

    @property
    def n_c(self) -> int:
        return self.indicator.shape[1]

    def labeled_nodes(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.indicator.indptr) > 0)

    def label_lists(self) -> list[np.ndarray]:
        Y = self.indicator
        return [Y.indices[Y.indptr[i]:Y.indptr[i + 1]] for i in range(self.n)]

    def with_train_sample(self, rng: np.random.Generator, fraction: float = 0.05) -> "LabelSet":
        nodes = self.labeled_nodes()
        k = math.ceil(fraction * nodes.size)
        pick = np.sort(rng.choice(nodes, size=k, replace=False))
        return replace(self, train_nodes=pick)

    def restrict(self, nodes: np.ndarray) -> "LabelSet":
        """Rows for ``nodes`` (subgraph order); training nodes are remapped."""
        sub = self.indicator[nodes]
        train = None
        if self.train_nodes is not None:
            pos = {int(v): i for i, v in enumerate(nodes)}
            train = np.array(sorted(pos[int(v)] for v in self.train_nodes if int(v) in pos), dtype=np.int64)
        return LabelSet(sp.csr_matrix(sub), self.names, train)


def labels_from_lists(lists, n_c: int | None = None, names=()) -> LabelSet:
    rows, cols = [], []
    for u, labs in enumerate(lists):
        for c in labs:
            rows.append(u)
            cols.append(int(c))
    n_c = (max(cols) + 1 if cols else 0) if n_c is None else n_c
    Y = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(lists), n_c))
    Y.data[:] = 1.0
    Y.sum_duplicates()
    Y.data[:] = 1.0
    return LabelSet(Y, tuple(names))


def load_labels(path, n: int | None = None) -> LabelSet:
    """Read ``node label`` lines; a node may appear on several lines."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s[0] in "#%":
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'node label'")
            try:
                node = int(parts[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id") from None
            pairs.append((node, parts[1]))
    if not pairs:
        raise ValueError(f"{path}: no labels")
    tokens = sorted({t for _, t in pairs}, key=lambda t: (0, int(t), t) if t.lstrip("-").isdigit() else (1, 0, t))
    index = {t: i for i, t in enumerate(tokens)}
    size = max(max(u for u, _ in pairs) + 1, n or 0)
    lists = [[] for _ in range(size)]
    for u, t in pairs:
        lists[u].append(index[t])
    return labels_from_lists(lists, len(tokens), tokens)


# --------------------------------------------------------------------------
# loss terms; each returns (value, grad) where grad matches the first args

def _sigmoid_nll(z):
    # -ln sigmoid(z) = ln(1 + e^-z), stable for either sign
    return np.logaddexp(0.0, -z)


def degree_loss(X, Y, deg, grad=False):
    """``(1/n^2) sum_u (x_u . sum_{v != u} y_v - d_out(u))^2``."""
    n = X.shape[0]
    others = Y.sum(axis=0)[None, :] - Y
    r = np.einsum("ij,ij->i", X, others) - deg
    val = float(r @ r) / n ** 2
    if not grad:
        return val
    c = 2.0 / n ** 2
    gX = c * r[:, None] * others
    gY = c * ((r @ X)[None, :] - r[:, None] * X)
    return val, (gX, gY)


def edge_loss(X, Y, edges, norm, grad=False):
    """``-(1/norm) sum_{(u,v) in E} ln sigmoid(x_u . y_v)``."""
    u, v = edges[:, 0], edges[:, 1]
    z = np.einsum("ij,ij->i", X[u], Y[v])
    val = float(_sigmoid_nll(z).sum()) / norm
    if not grad:
        return val
    w = -np.exp(-np.logaddexp(0.0, z)) / norm  # d/dz of -ln sigmoid(z) is sigmoid(z) - 1 = -sigmoid(-z)
    gX = np.zeros_like(X)
    gY = np.zeros_like(Y)
    np.add.at(gX, u, w[:, None] * Y[v])
    np.add.at(gY, v, w[:, None] * X[u])
    return val, (gX, gY)


def _pairwise_sq(Z, pairs):
    diff = Z[pairs[:, 0]] - Z[pairs[:, 1]]
    return diff, float(np.einsum("ij,ij->", diff, diff))


def cluster_loss(Z, groups, neg_pairs, n_c, grad=False):
    """Same-class spread over negative-pair spread.

    Numerator: for each class, the sum of ``||z_u - z_v||^2`` over unordered
    pairs of its members (the Laplacian trace of the complete graph).
    Denominator: ``n_c`` times the same sum over the negative pairs.
    """
    num = 0.0
    g_num = np.zeros_like(Z) if grad else None
    for members in groups:
        if members.size < 2:
            continue
        Zk = Z[members]
        tot = Zk.sum(axis=0)
        num += members.size * float(np.einsum("ij,ij->", Zk, Zk)) - float(tot @ tot)
        if grad:
            np.add.at(g_num, members, 2.0 * (members.size * Zk - tot[None, :]))
    diff, den = _pairwise_sq(Z, neg_pairs)
    if den < 1e-12:
        raise TrainingError("negative pairs have (numerically) zero spread")
    val = num / (n_c * den)
    if not grad:
        return val
    g_den = np.zeros_like(Z)
    np.add.at(g_den, neg_pairs[:, 0], 2.0 * diff)
    np.add.at(g_den, neg_pairs[:, 1], -2.0 * diff)
    return val, (g_num * den - num * g_den) / (n_c * den ** 2)


def softmax_loss(Z, W, b, Ymat, norm, grad=False):
    """``-(1/norm) sum_u sum_k Y_uk ln softmax(Z W + b)_uk``; rows of
    unlabelled (or hidden) nodes in ``Ymat`` are zero."""
    logits = Z @ W + b
    logits = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits).sum(axis=1, keepdims=True))
    logp = logits - lse
    val = -float((Ymat * logp).sum()) / norm
    if not grad:
        return val
    p = np.exp(logp)
    g_logits = (p * Ymat.sum(axis=1, keepdims=True) - Ymat) / norm
    return val, g_logits @ W.T


def loss_link(e: EmbeddingPair, g: CsrGraph, beta: float, gamma: float, norm: float | None = None) -> float:
    norm = g.m if norm is None else norm
    return (beta * degree_loss(e.X, e.Y, g.out_degrees.astype(float))
            + gamma * edge_loss(e.X, e.Y, g.edges(), norm))


def _normalize_rows(A):
    r = np.linalg.norm(A, axis=1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    return A / safe, safe, r[:, 0] > 0


def _normalize_rows_backward(G, Ahat, r, nz):
    out = (G - Ahat * np.einsum("ij,ij->i", Ahat, G)[:, None]) / r
    out[~nz] = 0.0
    return out


@dataclass
class ClassTask:
    """Fixed inputs of the classification loss for one iteration."""

    groups: list
    neg_pairs: np.ndarray
    W: np.ndarray
    b: np.ndarray
    Ymat: np.ndarray
    n_c: int
    norm: float


@dataclass
class LinkTask:
    deg: np.ndarray
    edges: np.ndarray
    norm: float


def loss_class(e: EmbeddingPair, labels: LabelSet, negatives, W, b, beta_c, gamma_c,
               normalize_concat: bool = False) -> float:
    task = class_task(labels, np.asarray(negatives), W, b, visible=None)
    return _class_value_grad(e.X, e.Y, task, beta_c, gamma_c, normalize_concat, grad=False)


def class_task(labels: LabelSet, negatives, W, b, visible=None, norm=None) -> ClassTask:
    """Assemble the classification inputs. ``visible`` restricts which
    labelled nodes the loss may see (default: all)."""
    Y = labels.indicator
    if visible is not None:
        keep = np.zeros(labels.n)
        keep[np.asarray(visible, dtype=np.int64)] = 1.0
        Y = sp.diags(keep) @ Y
    Y = sp.csc_matrix(Y)
    groups = [Y.indices[Y.indptr[k]:Y.indptr[k + 1]].astype(np.int64) for k in range(labels.n_c)]
    return ClassTask(groups, np.asarray(negatives, dtype=np.int64).reshape(-1, 2), np.asarray(W),
                     np.asarray(b, dtype=float), Y.toarray(), labels.n_c,
                     float(labels.n if norm is None else norm))


def _class_value_grad(X, Y, task: ClassTask, beta_c, gamma_c, normalize_concat, grad=True):
    d = X.shape[1]
    Z = np.hstack([X, Y])
    if normalize_concat:
        Xh, rx, nzx = _normalize_rows(X)
        Yh, ry, nzy = _normalize_rows(Y)
        Zc = np.hstack([Xh, Yh])
    else:
        Zc = Z
    if not grad:
        return (beta_c * cluster_loss(Zc, task.groups, task.neg_pairs, task.n_c)
                + gamma_c * softmax_loss(Z, task.W, task.b, task.Ymat, task.norm))
    v1, g1 = cluster_loss(Zc, task.groups, task.neg_pairs, task.n_c, grad=True)
    v2, g2 = softmax_loss(Z, task.W, task.b, task.Ymat, task.norm, grad=True)
    if normalize_concat:
        g1 = np.hstack([_normalize_rows_backward(g1[:, :d], Xh, rx, nzx),
                        _normalize_rows_backward(g1[:, d:], Yh, ry, nzy)])
    gZ = beta_c * g1 + gamma_c * g2
    return beta_c * v1 + gamma_c * v2, (gZ[:, :d], gZ[:, d:])


def _link_value_grad(X, Y, task: LinkTask, beta, gamma, grad=True):
    if not grad:
        return beta * degree_loss(X, Y, task.deg) + gamma * edge_loss(X, Y, task.edges, task.norm)
    v1, (a1, b1) = degree_loss(X, Y, task.deg, grad=True)
    v2, (a2, b2) = edge_loss(X, Y, task.edges, task.norm, grad=True)
    return beta * v1 + gamma * v2, (beta * a1 + gamma * a2, beta * b1 + gamma * b2)


# --------------------------------------------------------------------------
# forward / backward

@dataclass
class ForwardCache:
    graph: CsrGraph
    schedule: Schedule
    S: np.ndarray
    mask: np.ndarray
    M: np.ndarray
    svd: SvdTriple
    d: int
    embedding: EmbeddingPair = field(repr=False)


def forward(sub: CsrGraph, s: Schedule, cfg: TrainConfig) -> tuple[EmbeddingPair, ForwardCache]:
    if cfg.d > sub.n:
        raise TrainingError(f"embedding dimension {cfg.d} exceeds subgraph size {sub.n}")
    S = exact_sppr(sub, s, cap=cfg.dense_cap)
    mask = S >= cfg.delta
    M = np.zeros_like(S)
    M[mask] = np.log(S[mask] / cfg.delta)
    if not np.any(M):
        raise TrainingError("delta too large for subgraph: nothing survives the threshold")
    t = full_svd(M)
    root = np.sqrt(t.sigma[:cfg.d])
    root = np.where(t.sigma[:cfg.d] < RANK_TOL * t.sigma[0], 0.0, root)
    e = EmbeddingPair(t.U[:, :cfg.d] * root, t.V[:, :cfg.d] * root)
    return e, ForwardCache(sub, s, S, mask, M, t, cfg.d, e)


def svd_backward(t: SvdTriple, gU: np.ndarray, gsigma: np.ndarray, gV: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient w.r.t. a square ``M`` from gradients on its leading singular
    triples (``gU``, ``gV`` may have fewer columns than ``U``).

    Returns the gradient and the smallest relative singular-value gap that
    entered the computation. Near-equal pairs are regularized by flooring
    ``|s_j^2 - s_i^2|`` at ``1e-8 * s_max^2``.
    """
    U, s, V = t.U, t.sigma, t.V
    n, k = U.shape[1], gU.shape[1]
    gUf = np.zeros_like(U)
    gVf = np.zeros_like(V)
    gUf[:, :k] = gU
    gVf[:, :k] = gV
    smax2 = s[0] ** 2 if s.size else 1.0
    diff = s[None, :] ** 2 - s[:, None] ** 2
    F = np.sign(diff) / np.maximum(np.abs(diff), 1e-8 * smax2)
    np.fill_diagonal(F, 0.0)
    J = U.T @ gUf
    K = V.T @ gVf
    inner = (F * (J - J.T)) * s[None, :] + s[:, None] * (F * (K - K.T))
    inner[np.diag_indices(n)] += np.concatenate([gsigma, np.zeros(n - k)])
    gM = U @ inner @ V.T

    active = np.flatnonzero(s[:k] >= RANK_TOL * (s[0] if s.size else 1.0))
    min_gap = math.inf
    if active.size and s[0] > 0:
        gaps = np.abs(s[active][:, None] - s[None, :])
        gaps[np.arange(active.size), active] = math.inf
        min_gap = float(gaps.min() / s[0])
    return gM, min_gap


def _schedule_jacobians(alphas):
    """``dphi[l, k] = d phi_l / d alpha_k`` and ``dsurv[l, k] = d c_l / d alpha_k``
    where ``c_l = prod_{j<l} (1 - alpha_j)`` and ``phi_l = alpha_l c_l``."""
    L1 = alphas.size
    one_minus = 1.0 - alphas
    c = np.concatenate([[1.0], np.cumprod(one_minus)[:-1]])
    dsurv = np.zeros((L1, L1))
    for l in range(L1):
        for k in range(l):
            dsurv[l, k] = -np.prod(np.delete(one_minus[:l], k))
    dphi = alphas[:, None] * dsurv
    dphi[np.diag_indices(L1)] += c
    return dphi, dsurv


def schedule_gradient(cache: ForwardCache, gS: np.ndarray) -> np.ndarray:
    """Chain ``dL/dS`` through ``S_L = sum_l phi_l P^l N + c_l P^l D`` (``N``/``D``
    select non-dangling / dangling columns)."""
    a = cache.schedule.alphas
    live, dead = hop_mass_products(cache.graph, gS, a.size - 1)
    dphi, dsurv = _schedule_jacobians(a)
    return live @ dphi + dead @ dsurv


def backward_from_embedding(cache: ForwardCache, gX: np.ndarray, gY: np.ndarray) -> tuple[np.ndarray, float]:
    t, d = cache.svd, cache.d
    sig = t.sigma[:d]
    root = np.sqrt(sig)
    live = sig >= RANK_TOL * t.sigma[0]
    root = np.where(live, root, 0.0)
    U, V = t.U[:, :d], t.V[:, :d]
    gU = gX * root
    gV = gY * root
    gsig = np.zeros(d)
    gsig[live] = ((gX * U).sum(0)[live] + (gY * V).sum(0)[live]) / (2.0 * root[live])
    gM, gap = svd_backward(t, gU, gsig, gV)
    gS = np.zeros_like(cache.S)
    gS[cache.mask] = gM[cache.mask] / cache.S[cache.mask]
    return schedule_gradient(cache, gS), gap


def grad_fd(objective: Callable[[Schedule], float], s: Schedule, h: float = 1e-5) -> np.ndarray:
    """Central differences per stopping probability. Perturbed values are
    clamped to the feasible range and the actual spacing is used."""
    out = np.zeros(s.L + 1)
    for k in range(s.L + 1):
        up = s.alphas.copy()
        dn = s.alphas.copy()
        up[k] += h
        dn[k] -= h
        su, sd = s.replace(up), s.replace(dn)
        width = su.alphas[k] - sd.alphas[k]
        if width <= 0:
            continue
        out[k] = (objective(su) - objective(sd)) / width
    return out


@dataclass
class GradInfo:
    loss: float
    min_gap: float

    @property
    def flagged(self) -> bool:
        return self.min_gap < GAP_FLAG


def task_value_grad(e: EmbeddingPair, task, cfg: TrainConfig, grad=True):
    if isinstance(task, LinkTask):
        return _link_value_grad(e.X, e.Y, task, cfg.beta, cfg.gamma, grad=grad)
    return _class_value_grad(e.X, e.Y, task, cfg.beta_c, cfg.gamma_c, cfg.normalize_concat, grad=grad)


def objective(sub: CsrGraph, task, cfg: TrainConfig) -> Callable[[Schedule], float]:
    def f(s: Schedule) -> float:
        e, _ = forward(sub, s, cfg)
        return task_value_grad(e, task, cfg, grad=False)
    return f


def grad_analytic(cache: ForwardCache, task, cfg: TrainConfig) -> tuple[np.ndarray, GradInfo]:
    val, (gX, gY) = task_value_grad(cache.embedding, task, cfg, grad=True)
    g, gap = backward_from_embedding(cache, gX, gY)
    if gap < GAP_FLAG:
        log.warning("singular value gap %.3g below %.0e; gradient may be unreliable", gap, GAP_FLAG)
    return g, GradInfo(val, gap)


def loss_and_grad(sub: CsrGraph, s: Schedule, task, cfg: TrainConfig) -> tuple[float, np.ndarray, GradInfo]:
    e, cache = forward(sub, s, cfg)
    if cfg.grad_mode == "finite_diff":
        val = task_value_grad(e, task, cfg, grad=False)
        return val, grad_fd(objective(sub, task, cfg), s, cfg.fd_step), GradInfo(val, math.inf)
    g, info = grad_analytic(cache, task, cfg)
    return info.loss, g, info


# --------------------------------------------------------------------------
# training loop

_STAGES = {"sample": 1, "negatives": 2, "svd": 3, "split": 4, "labels": 5, "weights": 6, "eval": 7}


def stage_rng(seed: int, stage: str, *extra: int) -> np.random.Generator:
    """Independent stream for a named stage (and e.g. an iteration number)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STAGES[stage], *map(int, extra)]))


def class_weights(d: int, n_c: int, rng: np.random.Generator) -> np.ndarray:
    bound = 1.0 / math.sqrt(2 * d)
    return rng.uniform(-bound, bound, size=(2 * d, n_c))


def sample_negative_pairs(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` ordered pairs ``u != v`` drawn uniformly from ``n`` nodes."""
    u = rng.integers(0, n, size=count)
    v = rng.integers(0, n - 1, size=count)
    v = v + (v >= u)
    return np.column_stack([u, v])


def link_task(sub: CsrGraph, cfg: TrainConfig, sampled: bool) -> LinkTask:
    if cfg.edge_norm == "edges" or (cfg.edge_norm == "auto" and not sampled):
        norm = max(sub.m, 1)
    else:
        norm = sub.n
    return LinkTask(sub.out_degrees.astype(float), sub.edges(), float(norm))


def train_schedule(g: CsrGraph, labels: LabelSet | None, cfg: TrainConfig,
                   history: list | None = None) -> Schedule:
    """SGD on the stopping probabilities.

    Each iteration draws a fresh BFS subgraph of ``n_s`` nodes (the whole
    graph when ``n_s >= n``), evaluates the task loss there and takes one
    clamped gradient step. Stops when the loss changes by less than
    ``convergence_tol`` (relative) over ``window`` iterations.
    """
    cfg.validate()
    if (cfg.task == "class") != (labels is not None):
        raise ValueError("labels are required for the class task and only for it")
    s = parse_init(cfg.init, cfg.L)
    if labels is not None:
        if labels.n != g.n:
            raise ValueError(f"labels cover {labels.n} nodes, graph has {g.n}")
        if labels.train_nodes is None:
            labels = labels.with_train_sample(stage_rng(cfg.seed, "labels"), cfg.label_fraction)
        W = class_weights(cfg.d, labels.n_c, stage_rng(cfg.seed, "weights"))
        b = np.zeros(labels.n_c)
    sampled = cfg.n_s < g.n
    losses = history if history is not None else []
    for it in range(cfg.max_iters):
        sub, nodes = _draw_subgraph(g, cfg, it, sampled)
        if cfg.task == "link":
            task = link_task(sub, cfg, sampled)
        else:
            local = labels.restrict(nodes)
            negs = sample_negative_pairs(sub.n, cfg.neg_factor * sub.n, stage_rng(cfg.seed, "negatives", it))
            task = class_task(local, negs, W, b, visible=local.train_nodes, norm=sub.n)
        loss, grad, info = loss_and_grad(sub, s, task, cfg)
        losses.append(loss)
        log.info("iter %d loss %.6g |grad| %.3g", it, loss, float(np.abs(grad).max()))
        s = s.replace(np.clip(s.alphas - cfg.learning_rate * grad, ALPHA_FLOOR, 1.0))
        if len(losses) > cfg.window:
            ref = losses[-1 - cfg.window]
            if abs(losses[-1] - ref) <= cfg.convergence_tol * max(abs(ref), 1e-300):
                break
    if cfg.max_iters == 0:
        return s
    return s.replace(s.alphas, init=f"trained[{s.init}]")


def _draw_subgraph(g: CsrGraph, cfg: TrainConfig, it: int, sampled: bool):
    if not sampled:
        if g.n < cfg.d:
            raise TrainingError(f"graph has {g.n} nodes, fewer than d={cfg.d}")
        return g, np.arange(g.n)
    rng = stage_rng(cfg.seed, "sample", it)
    for _ in range(10):
        sub, mapping = sample_bfs_subgraph(g, cfg.n_s, rng)
        if sub.n >= cfg.d:
            return sub, mapping.sub_to_orig
    raise TrainingError(f"sampled subgraph smaller than d={cfg.d} after 10 attempts")
