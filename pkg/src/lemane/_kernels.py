"""Numba kernels for the generalized push.

Residues of hop ``k`` only receive mass from pushes at hop ``k - 1``, so the
kernel sweeps hops in ascending order and each (hop, node) pair is examined
exactly once. Two dense residue buffers (current hop, next hop) suffice.
Workspace arrays are returned to all-zero / all-False on exit.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def push_source(offsets, cols, deg, alphas, delta, source,
                pi, pi_mark, pi_nodes,
                cur_r, cur_nodes, nxt_r, nxt_nodes, nxt_mark,
                rec_hop, rec_node, rec_val):
    """Run one push from ``source``.

    Estimates land in ``pi`` with touched nodes listed in ``pi_nodes``; the
    caller must clear ``pi``/``pi_mark`` afterwards. Residues left below the
    threshold are written to the ``rec_*`` buffers while they have room.

    Returns ``(n_pi, pushes, discarded_mass, leftover_mass, n_leftover)``.
    """
    L = alphas.size - 1
    record = rec_hop.size
    n_pi = 0
    n_left = 0
    pushes = 0
    discarded = 0.0
    leftover = 0.0
    cur_nodes[0] = source
    cur_r[source] = 1.0
    n_cur = 1
    for k in range(L + 1):
        a = alphas[k]
        rest_frac = 1.0 - a
        n_nxt = 0
        for i in range(n_cur):
            v = cur_nodes[i]
            r = cur_r[v]
            cur_r[v] = 0.0
            d = deg[v]
            if r > delta * d:
                pushes += 1
                if not pi_mark[v]:
                    pi_mark[v] = True
                    pi_nodes[n_pi] = v
                    n_pi += 1
                if d == 0:
                    # dangling: the walk is absorbed here
                    pi[v] += r
                    continue
                pi[v] += a * r
                rest = rest_frac * r
                if k == L:
                    discarded += rest
                    continue
                if rest == 0.0:
                    continue
                inc = rest / d
                for j in range(offsets[v], offsets[v + 1]):
                    u = cols[j]
                    if not nxt_mark[u]:
                        nxt_mark[u] = True
                        nxt_nodes[n_nxt] = u
                        n_nxt += 1
                    nxt_r[u] += inc
            elif r > 0.0:
                leftover += r
                if n_left < record:
                    rec_hop[n_left] = k
                    rec_node[n_left] = v
                    rec_val[n_left] = r
                n_left += 1
        for i in range(n_nxt):
            nxt_mark[nxt_nodes[i]] = False
        cur_r, nxt_r = nxt_r, cur_r
        cur_nodes, nxt_nodes = nxt_nodes, cur_nodes
        n_cur = n_nxt
    return n_pi, pushes, discarded, leftover, n_left


@njit(cache=True, nogil=True)
def push_rows(offsets, cols, deg, alphas, delta, sources):
    """Push from every node in ``sources``; rows come back column-sorted.

    Returns ``(row_len, indices, values, pushes, discarded, leftover)``.
    """
    n = deg.size
    pi = np.zeros(n)
    pi_mark = np.zeros(n, dtype=np.bool_)
    pi_nodes = np.empty(n, dtype=np.int64)
    cur_r = np.zeros(n)
    nxt_r = np.zeros(n)
    cur_nodes = np.empty(n, dtype=np.int64)
    nxt_nodes = np.empty(n, dtype=np.int64)
    nxt_mark = np.zeros(n, dtype=np.bool_)
    no_i = np.empty(0, dtype=np.int64)
    no_f = np.empty(0)

    n_src = sources.size
    row_len = np.zeros(n_src, dtype=np.int64)
    pushes = np.zeros(n_src, dtype=np.int64)
    discarded = np.zeros(n_src)
    leftover = np.zeros(n_src)
    cap = max(1024, 4 * n_src)
    out_idx = np.empty(cap, dtype=np.int64)
    out_val = np.empty(cap)
    nnz = 0
    for t in range(n_src):
        n_pi, p, disc, left, _ = push_source(
            offsets, cols, deg, alphas, delta, sources[t],
            pi, pi_mark, pi_nodes, cur_r, cur_nodes, nxt_r, nxt_nodes, nxt_mark,
            no_i, no_i, no_f)
        if nnz + n_pi > cap:
            while nnz + n_pi > cap:
                cap *= 2
            grown_idx = np.empty(cap, dtype=np.int64)
            grown_val = np.empty(cap)
            grown_idx[:nnz] = out_idx[:nnz]
            grown_val[:nnz] = out_val[:nnz]
            out_idx = grown_idx
            out_val = grown_val
        nodes = np.sort(pi_nodes[:n_pi])
        for i in range(n_pi):
            v = nodes[i]
            out_idx[nnz] = v
            out_val[nnz] = pi[v]
            pi[v] = 0.0
            pi_mark[v] = False
            nnz += 1
        row_len[t] = n_pi
        pushes[t] = p
        discarded[t] = disc
        leftover[t] = left
    return row_len, out_idx[:nnz].copy(), out_val[:nnz].copy(), pushes, discarded, leftover
