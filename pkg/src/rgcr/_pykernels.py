"""Pure Python / numpy implementations of the hot graph kernels.

These mirror ``_ckernels.pyx`` one-to-one and are used when the compiled
extension is unavailable (or when ``RGCR_PURE_PYTHON=1``). All arrays are
CSR adjacency (``indptr``, ``indices``) with int64 entries.
"""
from collections import deque

import numpy as np


def bfs_truncated(indptr, indices, src, radius):
    """Nodes within ``radius`` hops of ``src`` and their distances.

    A negative radius means no truncation. Output is in BFS discovery order.
    """
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[src] = 0
    order = [src]
    queue = deque([src])
    while queue:
        u = queue.popleft()
        du = dist[u]
        if 0 <= radius <= du:
            continue
        for v in indices[indptr[u]:indptr[u + 1]]:
            if dist[v] < 0:
                dist[v] = du + 1
                order.append(int(v))
                queue.append(int(v))
    nodes = np.asarray(order, dtype=np.int64)
    return nodes, dist[nodes]


def ball_sizes(indptr, indices, radius):
    n = len(indptr) - 1
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        nodes, _ = bfs_truncated(indptr, indices, i, radius)
        out[i] = len(nodes)
    return out


def one_hop_max_labels(indptr, indices, x):
    """Center of each node: argmax of ``x`` over the closed neighborhood.

    Ties go to the smaller node id.
    """
    n = len(indptr) - 1
    x = np.asarray(x, dtype=np.float64)
    deg = np.diff(indptr)
    rows = np.repeat(np.arange(n, dtype=np.int64), deg)
    # candidates (row, node) for the closed neighbourhood
    cand_row = np.concatenate([np.arange(n, dtype=np.int64), rows])
    cand_node = np.concatenate([np.arange(n, dtype=np.int64), indices.astype(np.int64)])
    # sort by row, then by descending x, then ascending node id
    order = np.lexsort((cand_node, -x[cand_node], cand_row))
    first = np.searchsorted(cand_row[order], np.arange(n), side="left")
    return cand_node[order][first].astype(np.int64)


def three_net_labels(indptr, indices, order):
    """Greedy distance-3 seeds along ``order``; nearest-seed labels.

    Each node gets the id of its nearest seed; ties go to the smaller seed id.
    """
    n = len(indptr) - 1
    marked = np.zeros(n, dtype=bool)
    seeds = []
    for s in order:
        s = int(s)
        if marked[s]:
            continue
        seeds.append(s)
        marked[s] = True
        for u in indices[indptr[s]:indptr[s + 1]]:
            marked[u] = True
            for v in indices[indptr[u]:indptr[u + 1]]:
                marked[v] = True
    label = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, -1, dtype=np.int64)
    frontier = sorted(seeds)
    for s in frontier:
        label[s] = s
        dist[s] = 0
    d = 0
    while frontier:
        nxt = []
        for u in frontier:
            lu = label[u]
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = d + 1
                    label[v] = lu
                    nxt.append(int(v))
                elif dist[v] == d + 1 and lu < label[v]:
                    label[v] = lu
        frontier = nxt
        d += 1
    return label


def adjacent_clusters(indptr, indices, labels):
    """CSR (aptr, aidx) of the sorted distinct labels over each closed neighborhood."""
    n = len(indptr) - 1
    labels = np.asarray(labels, dtype=np.int64)
    deg = np.diff(indptr)
    rows = np.concatenate([np.arange(n, dtype=np.int64), np.repeat(np.arange(n, dtype=np.int64), deg)])
    labs = np.concatenate([labels, labels[indices]])
    nlab = int(labels.max()) + 1 if n else 1
    key = np.unique(rows * nlab + labs)
    r = key // nlab
    aidx = (key % nlab).astype(np.int64)
    aptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(aptr, r + 1, 1)
    return np.cumsum(aptr), aidx


def pair_intersections(aptr, aidx, rows, cols):
    """|A_i ∩ A_j| for each listed pair, with A given as sorted CSR sets."""
    out = np.zeros(len(rows), dtype=np.int64)
    for t in range(len(rows)):
        a = aidx[aptr[rows[t]]:aptr[rows[t] + 1]]
        b = aidx[aptr[cols[t]]:aptr[cols[t] + 1]]
        out[t] = np.intersect1d(a, b, assume_unique=True).size
    return out


def accumulate_joint(aptr, aidx, nclusters, same1, same0, opp, weight, j11, j10, j00):
    """Add weight * P(E_i^a, E_j^b | c) for every ordered pair into dense accumulators.

    same1[r] / same0[r]: probability that r given clusters all carry arm 1 / arm 0.
    opp[r1, r0]: probability that r1 given clusters carry arm 1 and r0 others arm 0.
    """
    import scipy.sparse as sp

    n = len(aptr) - 1
    inc = sp.csr_array((np.ones(len(aidx)), aidx, aptr), shape=(n, max(nclusters, 1)))
    inter = (inc @ inc.T).toarray().astype(np.int64)
    m = np.diff(aptr)
    union = m[:, None] + m[None, :] - inter
    j11 += weight * np.asarray(same1)[union]
    j00 += weight * np.asarray(same0)[union]
    j10 += weight * np.where(inter > 0, 0.0, np.asarray(opp)[m[:, None], m[None, :]])
