"""Exact clustering distributions for small graphs.

The random ordering behind both algorithms is Plackett-Luce in the weights
(uniform weights give a uniform permutation). Restricted to any subset of the
nodes it is again Plackett-Luce, so only the nodes that can still change the
outcome need tracking:

* 1-hop-max: a node's label is the first placed node of its 1-ball. With U the
  still-unlabelled nodes, the next relevant placement is drawn from B_1(U) and
  labels every node of U inside its 1-ball.
* 3-net: the next seed is the first placed node outside the marked set M; it
  is drawn from V minus M and marks its 2-ball.

Both recursions are memoized on a bitmask, which makes graphs of a few dozen
nodes tractable when balls are small (cycles, paths) and n <= ~16 in general.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from .clustering import Clustering, WeightVector, three_net_seeds
from .graph import Graph


def _ball_masks(g: Graph, r: int) -> list[int]:
    masks = []
    for i in range(g.n):
        m = 0
        for j in g.ball(i, r).members:
            m |= 1 << int(j)
        masks.append(m)
    return masks


def _bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def one_hop_max_distribution(g: Graph, w: WeightVector, favored: Optional[int] = None
                             ) -> list[tuple[Clustering, float]]:
    """Exact law of the (weighted) 1-hop-max clustering as (clustering, prob) pairs."""
    n = g.n
    ball1 = _ball_masks(g, 1)
    weights = [float(x) for x in w.w]

    @lru_cache(maxsize=None)
    def rest(unlabelled: int) -> tuple:
        # distribution over centre assignments for the unlabelled nodes,
        # as tuples of (node, centre) pairs sorted by node
        if not unlabelled:
            return (((), 1.0),)
        cand = 0
        for j in _bits(unlabelled):
            cand |= ball1[j]
        cand_nodes = list(_bits(cand))
        total = sum(weights[e] for e in cand_nodes)
        out: dict = {}
        for e in cand_nodes:
            took = unlabelled & ball1[e]
            here = tuple((j, e) for j in _bits(took))
            pe = weights[e] / total
            for tail, q in rest(unlabelled & ~took):
                key = tuple(sorted(here + tail))
                out[key] = out.get(key, 0.0) + pe * q
        return tuple(out.items())

    full = (1 << n) - 1
    if favored is None:
        law = rest(full)
    else:
        took = ball1[favored]
        law = tuple((tuple(sorted(tuple((j, favored) for j in _bits(took)) + tail)), q)
                    for tail, q in rest(full & ~took))
    return _collect(n, law)


def three_net_distribution(g: Graph, w: WeightVector, favored: Optional[int] = None
                           ) -> list[tuple[Clustering, float]]:
    """Exact law of the (weighted) 3-net clustering as (clustering, prob) pairs."""
    n = g.n
    ball2 = _ball_masks(g, 2)
    weights = [float(x) for x in w.w]
    full = (1 << n) - 1

    @lru_cache(maxsize=None)
    def rest(marked: int) -> tuple:
        if marked == full:
            return ((0, 1.0),)
        free = list(_bits(full & ~marked))
        total = sum(weights[e] for e in free)
        out: dict = {}
        for e in free:
            pe = weights[e] / total
            for seeds, q in rest(marked | ball2[e]):
                key = seeds | (1 << e)
                out[key] = out.get(key, 0.0) + pe * q
        return tuple(out.items())

    if favored is None:
        law = rest(0)
    else:
        law = tuple((s | (1 << favored), q) for s, q in rest(ball2[favored]))
    # seeds placed first in any order reproduce the greedy seed set
    pairs = []
    for seeds, q in law:
        order = np.array(list(_bits(seeds)) + [i for i in range(n) if not seeds >> i & 1], dtype=np.int64)
        pairs.append((Clustering.from_raw(three_net_seeds(g, order)), q))
    return _merge(pairs)


def _collect(n: int, law) -> list[tuple[Clustering, float]]:
    pairs = []
    for assignment, q in law:
        raw = np.empty(n, dtype=np.int64)
        for j, centre in assignment:
            raw[j] = centre
        pairs.append((Clustering.from_raw(raw), q))
    return _merge(pairs)


def _merge(pairs) -> list[tuple[Clustering, float]]:
    acc: dict = {}
    for c, q in pairs:
        if c in acc:
            acc[c] += q
        else:
            acc[c] = q
    return sorted(acc.items(), key=lambda cq: cq[0].labels.tolist())


def clustering_distribution(g: Graph, w: WeightVector, algo: str, favored: Optional[int] = None
                            ) -> list[tuple[Clustering, float]]:
    if algo == "one_hop_max":
        return one_hop_max_distribution(g, w, favored)
    if algo == "three_net":
        return three_net_distribution(g, w, favored)
    raise ValueError(f"unknown clustering algorithm {algo!r}")
