"""Randomized 3-net and 1-hop-max clusterings (uniform or Beta-weighted) and node weights."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ._backend import kernels
from .graph import Graph, GraphError, squared_graph

ALGORITHMS = ("three_net", "one_hop_max")


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Clustering:
    """Partition of the nodes; ``labels`` canonicalized to 0..k-1 by first appearance."""

    labels: np.ndarray

    @classmethod
    def from_raw(cls, raw) -> "Clustering":
        raw = np.asarray(raw)
        _, first, inv = np.unique(raw, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        labels = rank[inv.ravel()]
        labels.setflags(write=False)
        return cls(labels)

    @property
    def cluster_count(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def n(self) -> int:
        return len(self.labels)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def key(self) -> bytes:
        return self.labels.tobytes()

    def __eq__(self, other):
        return isinstance(other, Clustering) and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be a finite, strictly positive vector")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.w == self.w[0]))

    def __len__(self):
        return len(self.w)


@dataclass(frozen=True)
class SpectralResult:
    weights: WeightVector
    lambda_star: float
    residual: float
    iterations: int


def spectral_weights(g: Graph, tol: float = 1e-10, max_iter: int = 100_000,
                     residual_tol: float = 1e-8) -> SpectralResult:
    """Perron vector of the 2-hop ball-sum operator v -> (sum of v over B_2(i)).

    Power iteration from the all-ones vector, normalized to max entry 1. Stops
    once the eigenvalue estimate moves by at most ``tol`` (relative) and the
    per-node relative residual is at most ``residual_tol``.
    """
    if not g.is_connected():
        raise GraphError("spectral weights need a connected graph")
    a2 = squared_graph(g).adjacency()
    a2.setdiag(1.0)
    a2 = a2.tocsr()
    v = np.ones(g.n)
    lam = 0.0
    for it in range(1, max_iter + 1):
        u = a2 @ v
        lam_new = float(u.max())
        u /= lam_new
        residual = float(np.max(np.abs(a2 @ u - lam_new * u) / (lam_new * u)))
        if abs(lam_new - lam) <= tol * lam_new and residual <= residual_tol:
            return SpectralResult(WeightVector(u, "spectral"), lam_new, residual, it)
        v, lam = u, lam_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def make_weights(g: Graph, scheme: Union[str, Sequence[float], WeightVector] = "uniform") -> WeightVector:
    """Node weights: 'uniform', 'degree' (isolated nodes get 1), 'spectral', or a custom vector."""
    if isinstance(scheme, WeightVector):
        if len(scheme) != g.n:
            raise ValueError("weight vector length does not match graph")
        return scheme
    if isinstance(scheme, str):
        if scheme == "uniform":
            return WeightVector(np.ones(g.n), "uniform")
        if scheme == "degree":
            d = g.degrees.astype(np.float64)
            d[d == 0] = 1.0
            return WeightVector(d, "degree")
        if scheme == "spectral":
            return spectral_weights(g).weights
        raise ValueError(f"unknown weight scheme {scheme!r}")
    w = WeightVector(np.asarray(scheme, dtype=np.float64), "custom")
    if len(w) != g.n:
        raise ValueError("weight vector length does not match graph")
    return w


# -- sampling ---------------------------------------------------------------------


def beta_draws(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """X_i ~ Beta(w_i, 1) by inverse CDF, U^(1/w_i) with U uniform on (0, 1)."""
    u = rng.random(len(w))
    u[u == 0.0] = np.finfo(float).tiny
    return u ** (1.0 / w)


def descending_order(x: np.ndarray) -> np.ndarray:
    """Indices sorted by decreasing x; ties go to the smaller node id."""
    return np.lexsort((np.arange(len(x)), -x)).astype(np.int64)


def one_hop_max_from_scores(g: Graph, x) -> Clustering:
    raw = kernels.one_hop_max_labels(g.indptr, g.indices, np.ascontiguousarray(x, dtype=np.float64))
    return Clustering.from_raw(raw)


def three_net_from_order(g: Graph, order) -> Clustering:
    raw = kernels.three_net_labels(g.indptr, g.indices, np.ascontiguousarray(order, dtype=np.int64))
    return Clustering.from_raw(raw)


def one_hop_max_centers(g: Graph, x) -> np.ndarray:
    """Raw center (argmax node) per node, before canonicalization."""
    return kernels.one_hop_max_labels(g.indptr, g.indices, np.ascontiguousarray(x, dtype=np.float64))


def three_net_seeds(g: Graph, order) -> np.ndarray:
    """Raw nearest-seed id per node."""
    return kernels.three_net_labels(g.indptr, g.indices, np.ascontiguousarray(order, dtype=np.int64))


def one_hop_max(g: Graph, w: WeightVector, rng: np.random.Generator,
                favored: Optional[int] = None) -> Clustering:
    """Weighted 1-hop-max: each node joins the cluster of the max Beta(w,1) draw in its 1-ball.

    ``favored`` forces that node to hold the global maximum (stratified sampling).
    """
    x = beta_draws(w.w, rng)
    if favored is not None:
        x[favored] = 2.0
    return one_hop_max_from_scores(g, x)


def three_net(g: Graph, w: WeightVector, rng: np.random.Generator,
              favored: Optional[int] = None) -> Clustering:
    """Weighted 3-net: greedy seeds along the descending Beta(w,1) order, nearest-seed labels."""
    x = beta_draws(w.w, rng)
    if favored is not None:
        x[favored] = 2.0
    return three_net_from_order(g, descending_order(x))


_SAMPLERS = {"three_net": three_net, "one_hop_max": one_hop_max}


def sampler(algo: str):
    try:
        return _SAMPLERS[algo]
    except KeyError:
        raise ValueError(f"unknown clustering algorithm {algo!r}") from None


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for trial ``key`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key)))


def sample_many(g: Graph, w: WeightVector, algo: str, count: int, master_seed: int,
                start: int = 0) -> list[Clustering]:
    """``count`` clusterings; sample k uses the child seed (master_seed, k)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    draw = sampler(algo)
    return [draw(g, w, child_rng(master_seed, k)) for k in range(start, start + count)]


def write_clustering_csv(c: Clustering, path) -> None:
    with open(path, "w") as fh:
        fh.write("node,label\n")
        for i, lab in enumerate(c.labels):
            fh.write(f"{i},{lab}\n")


def write_weights_csv(w: WeightVector, path) -> None:
    with open(path, "w") as fh:
        fh.write("node,weight\n")
        for i, x in enumerate(w.w):
            fh.write(f"{i},{x!r}\n")
