"""Link-prediction precision and node-classification micro-F1."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .factorize import EmbeddingPair
from .graph import EdgeSplit
from .train import LabelSet


@dataclass(frozen=True)
class EvalReport:
    task: str
    metric: str
    value: float
    split: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def pair_scores(e: EmbeddingPair, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.einsum("ij,ij->i", e.X[pairs[:, 0]], e.Y[pairs[:, 1]])


def precision_at_k(pos_scores, neg_scores, pos_pairs=None, neg_pairs=None) -> float:
    """Fraction of positives among the top ``K = len(pos)`` scored pairs.

    Equal scores are ordered by the ``(u, v)`` pair so the result is
    deterministic.
    """
    pos_scores = np.asarray(pos_scores, dtype=float)
    neg_scores = np.asarray(neg_scores, dtype=float)
    k = pos_scores.size
    if k == 0:
        raise ValueError("no positive pairs")
    scores = np.concatenate([pos_scores, neg_scores])
    is_pos = np.concatenate([np.ones(k, bool), np.zeros(neg_scores.size, bool)])
    if pos_pairs is None:
        order = np.argsort(-scores, kind="stable")
    else:
        pairs = np.concatenate([np.asarray(pos_pairs).reshape(-1, 2), np.asarray(neg_pairs).reshape(-1, 2)])
        order = np.lexsort((pairs[:, 1], pairs[:, 0], -scores))
    return float(is_pos[order[:k]].mean())


def link_precision(e: EmbeddingPair, split: EdgeSplit, seed: int | None = None) -> EvalReport:
    if len(split.test_pos) == 0 or len(split.test_pos) != len(split.test_neg):
        raise ValueError("need equally many (>0) positive and negative test pairs")
    value = precision_at_k(pair_scores(e, split.test_pos), pair_scores(e, split.test_neg),
                           split.test_pos, split.test_neg)
    return EvalReport("link", "precision", value,
                      {"test_pos": int(len(split.test_pos)), "test_neg": int(len(split.test_neg))}, seed)


def micro_f1(predicted, truth) -> float:
    """Micro-averaged F1 over all (node, label) decisions: ``2TP / (2TP + FP + FN)``."""
    if len(predicted) == 0 or len(predicted) != len(truth):
        raise ValueError("predicted and truth must be non-empty and aligned")
    tp = fp = fn = 0
    for p, t in zip(predicted, truth):
        p, t = set(np.atleast_1d(p).tolist()), set(np.atleast_1d(t).tolist())
        hit = len(p & t)
        tp += hit
        fp += len(p) - hit
        fn += len(t) - hit
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def normalized_concat(e: EmbeddingPair) -> np.ndarray:
    """``[x_v / |x_v|, y_v / |y_v|]`` per node; zero rows stay zero."""
    def unit(A):
        r = np.linalg.norm(A, axis=1, keepdims=True)
        return np.divide(A, r, out=np.zeros_like(A), where=r > 0)
    return np.hstack([unit(e.X), unit(e.Y)])


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def fit_one_vs_rest(Z: np.ndarray, T: np.ndarray, l2: float = 1e-4, epochs: int = 200):
    """Independent L2-regularised logistic regressions, one per column of the
    0/1 target matrix ``T``, trained by full-batch gradient descent.

    The bias is not regularised. The step is the inverse Lipschitz constant
    of the averaged log-loss.
    """
    n, p = Z.shape
    C = T.shape[1]
    W = np.zeros((p, C))
    b = np.zeros(C)
    spec = np.linalg.norm(np.hstack([Z, np.ones((n, 1))]), 2) ** 2 if n else 1.0
    step = 1.0 / (spec / (4.0 * max(n, 1)) + l2)
    for _ in range(epochs):
        R = (_sigmoid(Z @ W + b) - T) / n
        W -= step * (Z.T @ R + l2 * W)
        b -= step * R.sum(axis=0)
    return W, b


def predict_top_k(scores: np.ndarray, k: np.ndarray) -> list[np.ndarray]:
    order = np.argsort(-scores, axis=1, kind="stable")
    return [order[i, :max(int(k[i]), 1)] for i in range(scores.shape[0])]


def node_classification(e: EmbeddingPair, labels: LabelSet, train_ratio: float,
                        trained_with_5pct: bool, rng: np.random.Generator,
                        l2: float = 1e-4, epochs: int = 200, seed: int | None = None) -> EvalReport:
    """Micro-F1 of a one-vs-rest logistic regression on normalised, concatenated embeddings.

    With ``trained_with_5pct`` the nodes already used for schedule training
    are part of the classifier's training set, topped up with fresh nodes to
    ``train_ratio`` of the labelled nodes. Each test node is assigned its
    ``k`` highest-scoring labels, ``k`` being its true label count.
    """
    if labels.n != e.n:
        raise ValueError(f"labels cover {labels.n} nodes, embeddings {e.n}")
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must lie in (0, 1)")
    nodes = labels.labeled_nodes()
    n_train = int(round(train_ratio * nodes.size))
    if trained_with_5pct:
        if labels.train_nodes is None:
            raise ValueError("labels carry no schedule-training sample")
        base = np.intersect1d(labels.train_nodes, nodes)
        if n_train <= base.size:
            raise ValueError("train_ratio must exceed the schedule-training fraction")
        pool = rng.permutation(np.setdiff1d(nodes, base))
        extra = n_train - base.size
        train, test = np.concatenate([base, pool[:extra]]), pool[extra:]
    else:
        perm = rng.permutation(nodes)
        train, test = perm[:n_train], perm[n_train:]
    if test.size == 0 or train.size == 0:
        raise ValueError("empty train or test split")

    Z = normalized_concat(e)
    T = labels.indicator.toarray()
    W, b = fit_one_vs_rest(Z[train], T[train], l2=l2, epochs=epochs)
    k = T[test].sum(axis=1)
    predicted = predict_top_k(Z[test] @ W + b, k)
    lists = labels.label_lists()
    value = micro_f1(predicted, [lists[i] for i in test])
    return EvalReport("class", "micro_f1", value,
                      {"train_ratio": train_ratio, "n_train": int(train.size), "n_test": int(test.size),
                       "trained_with_5pct": bool(trained_with_5pct)}, seed)
