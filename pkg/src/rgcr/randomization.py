"""Cluster-level treatment assignment and full-neighborhood exposure probabilities.

Two cluster-level designs are supported:

* ``independent``: every cluster is treated independently with probability p.
* ``complete``: clusters are paired by a uniform random perfect matching and
  each pair gets opposite arms by a fair coin. With an odd cluster count a
  uniformly chosen cluster is left unpaired and gets its own fair coin. Only
  p = 1/2 is meaningful.

Exposure probabilities are exact for any number of clusters. For the complete
design they come from ``complete_prob``, a recursion over the pairing of the
clusters that carry a requirement.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._backend import kernels
from .clustering import Clustering
from .graph import Graph

SCHEMES = ("independent", "complete")
TREATMENT, CONTROL = 1, 0


class DesignError(ValueError):
    pass


def check_scheme(scheme: str, p: float) -> None:
    if scheme not in SCHEMES:
        raise DesignError(f"unknown randomization scheme {scheme!r}")
    if not 0.0 < p < 1.0:
        raise DesignError("p must lie in (0, 1)")
    if scheme == "complete" and p != 0.5:
        raise DesignError("complete randomization requires p = 1/2")


@dataclass(frozen=True)
class Assignment:
    z: np.ndarray
    cluster_arms: np.ndarray
    scheme: str
    p: float


def assign(c: Clustering, scheme: str, p: float, rng: np.random.Generator) -> Assignment:
    check_scheme(scheme, p)
    k = c.cluster_count
    if scheme == "independent":
        arms = (rng.random(k) < p).astype(np.int8)
    else:
        arms = np.empty(k, dtype=np.int8)
        perm = rng.permutation(k)
        if k % 2:
            arms[perm[-1]] = rng.random() < 0.5
            perm = perm[:-1]
        first = rng.random(len(perm) // 2) < 0.5
        arms[perm[0::2]] = first
        arms[perm[1::2]] = ~first
    return Assignment(arms[c.labels], arms, scheme, p)


def is_exposed(g: Graph, z, node: int, arm: int) -> bool:
    z = np.asarray(z)
    return bool(z[node] == arm and np.all(z[g.neighbors(node)] == arm))


def exposure_indicators(g: Graph, z, arm: int) -> np.ndarray:
    """Boolean vector: node and all its neighbours carry ``arm``."""
    hit = (np.asarray(z) == arm).astype(np.int64)
    nbr_hits = np.add.reduceat(hit[g.indices], g.indptr[:-1]) if len(g.indices) else np.zeros(g.n, np.int64)
    nbr_hits = np.where(g.degrees > 0, nbr_hits, 0)
    return (hit == 1) & (nbr_hits == g.degrees)


class AdjacentClusters:
    """Distinct cluster ids touching each closed 1-hop neighborhood, as CSR."""

    __slots__ = ("ptr", "idx", "counts", "cluster_count")

    def __init__(self, g: Graph, c: Clustering):
        self.ptr, self.idx = kernels.adjacent_clusters(g.indptr, g.indices, c.labels)
        self.counts = np.diff(self.ptr)
        self.cluster_count = c.cluster_count

    def of(self, i: int) -> np.ndarray:
        return self.idx[self.ptr[i]:self.ptr[i + 1]]

    def intersections(self, rows, cols) -> np.ndarray:
        return kernels.pair_intersections(self.ptr, self.idx, np.ascontiguousarray(rows, dtype=np.int64),
                                          np.ascontiguousarray(cols, dtype=np.int64))

    def incidence(self):
        """Sparse n x K 0/1 matrix of node-cluster adjacency."""
        import scipy.sparse as sp

        n = len(self.counts)
        data = np.ones(len(self.idx))
        return sp.csr_array((data, self.idx, self.ptr), shape=(n, self.cluster_count))


def adjacent_clusters(g: Graph, c: Clustering, i: int) -> set:
    return set(int(x) for x in AdjacentClusters(g, c).of(i))


# -- complete randomization -------------------------------------------------------


def complete_marginal_closed_form(k: int, m: int) -> float:
    """P(m given clusters all share one arm) under complete randomization.

    Even k: (1/2)^m * prod_{j<m} (k-m-j)/(k-1-2j), zero once a factor is <= 0.
    Odd k: condition on whether the unpaired cluster is among the m.
    """
    def even(kk, mm):
        out = 1.0
        for j in range(mm):
            num = kk - mm - j
            if num <= 0:
                return 0.0
            out *= num / (kk - 1 - 2 * j)
        return out

    if m > k:
        return 0.0
    if k % 2 == 0:
        return 0.5 ** m * even(k, m)
    rest = (k - m) / k * even(k - 1, m)
    if m:
        rest += m / k * even(k - 1, m - 1)
    return 0.5 ** m * rest


@lru_cache(maxsize=None)
def complete_prob(k: int, r1: int, r0: int) -> float:
    """P(r1 given clusters treated and r0 other given clusters in control), complete design."""
    if r1 < 0 or r0 < 0 or r1 + r0 > k:
        return 0.0
    if r1 + r0 == 0:
        return 1.0
    if k % 2:
        free = k - r1 - r0
        out = free / k * _complete_even(k - 1, r1, r0)
        if r1:
            out += r1 / k * 0.5 * _complete_even(k - 1, r1 - 1, r0)
        if r0:
            out += r0 / k * 0.5 * _complete_even(k - 1, r1, r0 - 1)
        return out
    return _complete_even(k, r1, r0)


@lru_cache(maxsize=None)
def _complete_even(k: int, r1: int, r0: int) -> float:
    if r1 + r0 == 0:
        return 1.0
    if r1 + r0 > k:
        return 0.0
    # pair off one required cluster; by symmetry take it from the larger group
    same, opp = (r1, r0) if r1 >= r0 else (r0, r1)
    free = k - r1 - r0
    out = 0.0
    if opp:
        out += opp / (k - 1) * 0.5 * _complete_even(k - 2, same - 1, opp - 1)
    if free:
        out += free / (k - 1) * 0.5 * _complete_even(k - 2, same - 1, opp)
    return out


def _even_tables(k: int, rmax: int) -> np.ndarray:
    """E[a, b] for an even cluster count k, built bottom-up over k' = 0, 2, ..., k."""
    size = rmax + 1
    a = np.arange(size)[:, None]
    b = np.arange(size)[None, :]
    cur = np.zeros((size, size))
    cur[0, 0] = 1.0
    for kk in range(2, k + 1, 2):
        nxt = np.zeros((size, size))
        prev_ab = np.zeros((size, size))
        prev_a = np.zeros((size, size))
        prev_ab[1:, 1:] = cur[:-1, :-1]
        prev_a[1:, :] = cur[:-1, :]
        free = kk - a - b
        # pair off one required treated cluster (a >= 1)
        val = 0.5 * (b * prev_ab + np.clip(free, 0, None) * prev_a) / (kk - 1)
        nxt[1:, :] = val[1:, :]
        nxt[0, :] = nxt[:, 0]
        nxt[0, 0] = 1.0
        nxt[a + b > kk] = 0.0
        cur = nxt
    return cur


def _complete_table(k: int, rmax: int) -> np.ndarray:
    """complete_prob(k, a, b) for all 0 <= a, b <= rmax (possibly a larger table)."""
    # round up so nearby requests share one cached table
    size = 16
    while size < rmax:
        size *= 2
    return _complete_table_sized(k, min(size, k))


@lru_cache(maxsize=256)
def _complete_table_sized(k: int, rmax: int) -> np.ndarray:
    if k % 2 == 0:
        t = _even_tables(k, rmax)
    else:
        e = _even_tables(k - 1, rmax)
        a = np.arange(rmax + 1)[:, None]
        b = np.arange(rmax + 1)[None, :]
        free = np.clip(k - a - b, 0, None)
        t = free / k * e
        t[1:, :] += 0.5 * a[1:] / k * e[:-1, :]
        t[:, 1:] += 0.5 * b[:, 1:] / k * e[:, :-1]
        t[a + b > k] = 0.0
    t.setflags(write=False)
    return t


# -- conditional exposure probabilities --------------------------------------------


def _arm_prob(arm: int, p: float) -> float:
    return p if arm == TREATMENT else 1.0 - p


def marginal_given_clustering(adj: AdjacentClusters, scheme: str, p: float, arm: int) -> np.ndarray:
    """P(E_i^arm | c) for every node."""
    check_scheme(scheme, p)
    m = adj.counts
    if scheme == "independent":
        return _arm_prob(arm, p) ** m
    k = adj.cluster_count
    lut = np.array([complete_prob(k, r, 0) for r in range(int(m.max()) + 1)])
    return lut[m]


def exposure_prob_given_clustering(g: Graph, c: Clustering, node: int, arm: int,
                                   scheme: str, p: float) -> float:
    adj = AdjacentClusters(g, c)
    return float(marginal_given_clustering(adj, scheme, p, arm)[node])


def joint_given_clustering(adj: AdjacentClusters, rows, cols, arm_i: int, arm_j: int,
                           scheme: str, p: float, inter=None) -> np.ndarray:
    """P(E_i^arm_i ∩ E_j^arm_j | c) for listed pairs (i = rows, j = cols)."""
    check_scheme(scheme, p)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    mi = adj.counts[rows]
    mj = adj.counts[cols]
    if inter is None:
        inter = adj.intersections(rows, cols)
    if scheme == "independent":
        if arm_i == arm_j:
            return _arm_prob(arm_i, p) ** (mi + mj - inter)
        out = _arm_prob(arm_i, p) ** mi * _arm_prob(arm_j, p) ** mj
        return np.where(inter > 0, 0.0, out)
    k = adj.cluster_count
    rmax = int(2 * adj.counts.max())
    lut = _complete_table(k, rmax)
    if arm_i == arm_j:
        union = mi + mj - inter
        return lut[union, 0]
    r1, r0 = (mi, mj) if arm_i == TREATMENT else (mj, mi)
    return np.where(inter > 0, 0.0, lut[r1, r0])


def joint_exposure_prob_given_clustering(g: Graph, c: Clustering, i: int, j: int, arm_i: int,
                                         arm_j: int, scheme: str, p: float) -> float:
    adj = AdjacentClusters(g, c)
    return float(joint_given_clustering(adj, [i], [j], arm_i, arm_j, scheme, p)[0])


def arm_tables(scheme: str, p: float, k: int, rmax: int):
    """Lookup tables (same1, same0, opp) indexed by required-cluster counts.

    same1[r]: r given clusters all treated; same0[r]: all in control;
    opp[r1, r0]: r1 given clusters treated and r0 other given clusters in control.
    """
    check_scheme(scheme, p)
    r = np.arange(rmax + 1)
    if scheme == "independent":
        same1 = p ** r.astype(np.float64)
        same0 = (1.0 - p) ** r.astype(np.float64)
        return same1, same0, np.outer(same1, same0)
    lut = _complete_table(k, rmax)
    return lut[:, 0].copy(), lut[:, 0].copy(), lut


def accumulate_dense_joint(adj: AdjacentClusters, scheme: str, p: float, weight: float,
                           j11: np.ndarray, j10: np.ndarray, j00: np.ndarray) -> None:
    """In-place j_ab += weight * P(E_i^a, E_j^b | c) over all ordered pairs (p01 = p10.T)."""
    rmax = int(2 * adj.counts.max()) if len(adj.counts) else 0
    same1, same0, opp = arm_tables(scheme, p, adj.cluster_count, rmax)
    kernels.accumulate_joint(adj.ptr, adj.idx, adj.cluster_count, same1, same0,
                             np.ascontiguousarray(opp), float(weight), j11, j10, j00)


def dense_joint_given_clustering(adj: AdjacentClusters, scheme: str, p: float):
    """All-pairs joint tables (p11, p10, p00) as dense n x n arrays, p01 = p10.T."""
    check_scheme(scheme, p)
    inc = adj.incidence()
    inter = (inc @ inc.T).toarray().astype(np.int64)
    m = adj.counts
    if scheme == "independent":
        q = 1.0 - p
        p1 = p ** m
        p0 = q ** m
        union = m[:, None] + m[None, :] - inter
        p11 = p ** union
        p00 = q ** union
        p10 = np.where(inter > 0, 0.0, np.outer(p1, p0))
        return p11, p10, p00
    lut = _complete_table(adj.cluster_count, int(2 * m.max()))
    union = m[:, None] + m[None, :] - inter
    same = lut[union, 0]
    p10 = np.where(inter > 0, 0.0, lut[m[:, None], m[None, :]])
    return same, p10, same.copy()
