from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from lemane.graph import from_edges

DATA = Path(__file__).parent / "data"

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria checks")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def random_graph(rng, n, p, directed=False, connect=True):
    """Erdos-Renyi graph; with ``connect`` a ring is added so no node dangles."""
    A = rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    edges = np.argwhere(A)
    if connect:
        ring = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
        edges = np.vstack([edges, ring])
    return from_edges(n, edges, directed=directed)


def random_schedule_alphas(rng, L):
    return rng.uniform(0.05, 0.95, size=L + 1)


def reference_push(g, source, delta, alphas, check=None):
    """Straightforward hop-ordered push with dict residues.

    ``check(pi, res, discarded)`` is called after every push operation.
    """
    L = len(alphas) - 1
    deg = g.out_degrees
    pi = defaultdict(float)
    res = [defaultdict(float) for _ in range(L + 1)]
    res[0][source] = 1.0
    discarded = 0.0
    pushes = 0
    for k in range(L + 1):
        while True:
            active = [v for v, r in res[k].items() if r > delta * deg[v]]
            if not active:
                break
            for v in sorted(active):
                r = res[k].pop(v)
                pushes += 1
                if deg[v] == 0:
                    pi[v] += r
                else:
                    a = alphas[k]
                    pi[v] += a * r
                    share = (1 - a) * r / deg[v]
                    for u in g.neighbors(v):
                        if k < L:
                            res[k + 1][int(u)] += share
                        else:
                            discarded += share
                if check is not None:
                    check(pi, res, discarded)
    return dict(pi), res, discarded, pushes


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return from_edges(3, [(0, 1), (1, 2)], directed=False)


def relative_error(analytic, fd):
    """Max coordinate relative error, with the denominator floored at a
    thousandth of the largest FD coordinate so near-zero entries do not blow up."""
    analytic, fd = np.asarray(analytic), np.asarray(fd)
    scale = np.maximum(np.abs(fd), 1e-3 * max(np.abs(fd).max(), 1e-300))
    return float((np.abs(analytic - fd) / scale).max())


def gradient_pair(sub, s, task, cfg, h=1e-5):
    """(analytic gradient, central-difference gradient, GradInfo) for one instance."""
    from lemane.train import forward, grad_analytic, grad_fd, objective
    _, cache = forward(sub, s, cfg)
    g, info = grad_analytic(cache, task, cfg)
    return g, grad_fd(objective(sub, task, cfg), s, h), info


def class_instance(rng, n=50, n_c=3, d=8, multi=False):
    """Random graph with random labels, negatives and fixed weights."""
    from lemane.train import class_task, class_weights, labels_from_lists, sample_negative_pairs
    g = random_graph(rng, n, 0.08)
    if multi:
        lists = [sorted(set(rng.integers(0, n_c, size=rng.integers(1, 3)).tolist())) for _ in range(n)]
    else:
        lists = [[int(c)] for c in rng.integers(0, n_c, size=n)]
    labels = labels_from_lists(lists, n_c)
    negs = sample_negative_pairs(n, 5 * n, rng)
    W = class_weights(d, n_c, rng)
    return g, labels, negs, W, class_task(labels, negs, W, np.zeros(n_c))
