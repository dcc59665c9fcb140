"""Undirected simple graphs in CSR form, neighborhoods, growth statistics and generators."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ._backend import kernels


class GraphError(ValueError):
    pass


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Adjacency is stored as CSR arrays with each row sorted ascending.
    """

    __slots__ = ("indptr", "indices", "_hash")

    def __init__(self, indptr, indices):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self._hash = None

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        """Build from an edge iterable; drops self-loops and duplicate edges."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        key = np.unique(both[:, 0] * max(n, 1) + both[:, 1])
        rows, cols = key // max(n, 1), key % max(n, 1)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(np.cumsum(indptr), cols)

    @classmethod
    def from_scipy(cls, a) -> "Graph":
        a = sp.csr_array(a)
        coo = a.tocoo()
        return cls.from_edges(a.shape[0], np.column_stack([coo.row, coo.col]))

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def m(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def d_max(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @property
    def d_mean(self) -> float:
        return 2.0 * self.m / self.n

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, sorted."""
        rows = np.repeat(np.arange(self.n), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def adjacency(self) -> sp.csr_array:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_array((data, self.indices, self.indptr), shape=(self.n, self.n))

    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            h.update(self.indptr.tobytes())
            h.update(self.indices.tobytes())
            self._hash = h.hexdigest()[:16]
        return self._hash

    def distances_from(self, i: int, radius: int = -1):
        """(nodes, dists) reached by BFS from ``i``, truncated at ``radius`` if >= 0."""
        self._check_node(i)
        return kernels.bfs_truncated(self.indptr, self.indices, int(i), int(radius))

    def ball(self, i: int, r: int) -> "NodeBall":
        if r < 0:
            raise GraphError("radius must be non-negative")
        nodes, _ = self.distances_from(i, r)
        return NodeBall(int(i), int(r), np.sort(nodes))

    def ball_sizes(self, r: int) -> np.ndarray:
        return kernels.ball_sizes(self.indptr, self.indices, int(r))

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        nodes, _ = self.distances_from(0)
        return len(nodes) == self.n

    def _check_node(self, i):
        if not 0 <= i < self.n:
            raise GraphError(f"node {i} out of range for n={self.n}")

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __hash__(self):
        return hash(self.content_hash())

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class NodeBall:
    center: int
    radius: int
    members: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.members)

    def __contains__(self, j):
        i = np.searchsorted(self.members, j)
        return i < len(self.members) and self.members[i] == j


@dataclass(frozen=True)
class GrowthStats:
    kappa: float
    per_radius_max: tuple


def growth_coefficient(g: Graph, r_max: int = 5) -> GrowthStats:
    """Max ball-growth ratio |B_{r+1}(i)| / |B_r(i)| over all nodes and 1 <= r <= r_max."""
    if r_max < 1:
        raise GraphError("r_max must be >= 1")
    sizes = [g.ball_sizes(r) for r in range(1, r_max + 2)]
    per_r = tuple(float(np.max(sizes[k + 1] / sizes[k])) for k in range(r_max))
    return GrowthStats(kappa=max(per_r), per_radius_max=per_r)


def squared_graph(g: Graph) -> Graph:
    """Graph with an edge between every pair at distance 1 or 2 in ``g``."""
    a = g.adjacency()
    a2 = (a @ a + a).tocsr()
    a2.setdiag(0)
    a2.eliminate_zeros()
    return Graph.from_scipy(a2)


# -- construction ---------------------------------------------------------------


def load_edge_list(path) -> Graph:
    """Read whitespace-delimited ``u v`` lines; '#' starts a comment.

    Ids are remapped to 0..n-1 in order of first appearance.
    """
    ids: dict[str, int] = {}
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if len(tok) < 2:
                raise GraphError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                u, v = int(tok[0]), int(tok[1])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            a = ids.setdefault(str(u), len(ids))
            b = ids.setdefault(str(v), len(ids))
            edges.append((a, b))
    if not ids:
        raise GraphError(f"{path}: empty graph")
    return Graph.from_edges(len(ids), edges)


def write_edge_list(g: Graph, path) -> None:
    lines = [f"# n={g.n} m={g.m}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def gen_cycle(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    i = np.arange(n)
    return Graph.from_edges(n, np.column_stack([i, (i + 1) % n]))


def gen_path(n: int) -> Graph:
    i = np.arange(n - 1)
    return Graph.from_edges(n, np.column_stack([i, i + 1]))


def gen_complete(n: int) -> Graph:
    iu, ju = np.triu_indices(n, 1)
    return Graph.from_edges(n, np.column_stack([iu, ju]))


def gen_star(leaves: int) -> Graph:
    """Star with center 0 and ``leaves`` leaves."""
    j = np.arange(1, leaves + 1)
    return Graph.from_edges(leaves + 1, np.column_stack([np.zeros_like(j), j]))


def gen_torus(side: int) -> Graph:
    if side < 3:
        raise GraphError("lattice side must be >= 3")
    idx = np.arange(side * side).reshape(side, side)
    right = np.column_stack([idx.ravel(), np.roll(idx, -1, axis=1).ravel()])
    down = np.column_stack([idx.ravel(), np.roll(idx, -1, axis=0).ravel()])
    return Graph.from_edges(side * side, np.concatenate([right, down]))


def power_law_counts(rng: np.random.Generator, size: int, alpha: float, cap: int) -> np.ndarray:
    """Discrete power law P(k) ∝ k^-alpha on 1..cap (all zeros when cap < 1)."""
    if cap < 1:
        return np.zeros(size, dtype=np.int64)
    k = np.arange(1, cap + 1, dtype=np.float64)
    pmf = k ** -alpha
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right").astype(np.int64) + 1


def gen_small_world(side: int, alpha: float = 2.3, seed: int = 0,
                    max_long_edges: Optional[int] = None) -> Graph:
    """Periodic side x side lattice plus heavy-tailed long-range edges.

    Node u adds k_u long edges, k_u from a discrete power law with exponent
    ``alpha`` truncated at ``max_long_edges`` (default n - 1). The far end is
    drawn with probability proportional to (wrapped L1 lattice distance)^-2;
    self-loops and existing edges are redrawn.
    """
    if side < 3:
        raise GraphError("lattice side must be >= 3")
    if alpha <= 1:
        raise GraphError("power-law exponent must be > 1")
    n = side * side
    cap = n - 1 if max_long_edges is None else min(int(max_long_edges), n - 1)
    rng = np.random.default_rng(seed)

    off = np.arange(side)
    wrapped = np.minimum(off, side - off)
    dist = wrapped[:, None] + wrapped[None, :]
    weight = np.zeros((side, side))
    weight[dist > 0] = dist[dist > 0].astype(np.float64) ** -2.0
    offset_cdf = np.cumsum(weight.ravel())
    offset_cdf /= offset_cdf[-1]

    nbrs = [set() for _ in range(n)]
    for u, v in gen_torus(side).edges():
        nbrs[u].add(int(v))
        nbrs[v].add(int(u))
    counts = power_law_counts(rng, n, alpha, cap)
    for u in range(n):
        ux, uy = divmod(u, side)
        need = min(int(counts[u]), n - 1 - len(nbrs[u]))
        if need > 16:
            # weighted sampling without replacement over the non-neighbours:
            # the k smallest exponential keys E_v / w_v (same law as redraw-on-reject)
            rel = (np.arange(n) // side - ux) % side * side + (np.arange(n) % side - uy) % side
            w = weight.ravel()[rel]
            w[u] = 0.0
            w[list(nbrs[u])] = 0.0
            with np.errstate(divide="ignore"):
                keys = rng.exponential(size=n) / w
            for v in np.argsort(keys, kind="stable")[:need]:
                nbrs[u].add(int(v))
                nbrs[int(v)].add(u)
            continue
        while need > 0:
            o = int(np.searchsorted(offset_cdf, rng.random(), side="right"))
            dx, dy = divmod(o, side)
            v = ((ux + dx) % side) * side + (uy + dy) % side
            if v == u or v in nbrs[u]:
                continue
            nbrs[u].add(v)
            nbrs[v].add(u)
            need -= 1
    edges = [(u, v) for u in range(n) for v in nbrs[u] if u < v]
    return Graph.from_edges(n, edges)


def gen_random_connected(n: int, p: float, seed: int) -> Graph:
    """Erdos-Renyi G(n, p) conditioned on connectivity (rejection)."""
    rng = np.random.default_rng(seed)
    while True:
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(len(iu)) < p
        g = Graph.from_edges(n, np.column_stack([iu[keep], ju[keep]]))
        if g.is_connected():
            return g
