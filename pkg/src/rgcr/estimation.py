"""Distribution-level exposure probabilities: Monte Carlo estimation, exact mixtures, table files.

A ``ProbTable`` holds per-node probabilities of full-neighborhood exposure to
each arm. A ``PairProbTable`` holds joint probabilities for an ordered pair
pattern (both directions and the diagonal are stored) with one value array per
arm combination.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .clustering import Clustering, WeightVector, child_rng, sampler
from .exact import clustering_distribution
from .graph import Graph
from .randomization import (AdjacentClusters, check_scheme, joint_given_clustering,
                            marginal_given_clustering)

FORMAT_TAG = "rgcr-table v1"
ARM_PAIRS = ((1, 1), (1, 0), (0, 1), (0, 0))


class TableError(ValueError):
    pass


@dataclass(frozen=True)
class TableMeta:
    n: int
    graph_hash: str
    algo: str = "fixed"
    weights: str = "uniform"
    scheme: str = "independent"
    p: float = 0.5
    samples: int = 0
    seed: int = -1
    method: str = "exact"
    cutoff: int = -1

    def header(self) -> str:
        return " ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(self).items())

    @classmethod
    def parse(cls, line: str) -> "TableMeta":
        kv = dict(tok.split("=", 1) for tok in line.split())
        types = {f: t for f, t in cls.__annotations__.items()}
        out = {}
        for k, v in kv.items():
            if k not in types:
                raise TableError(f"unknown metadata field {k!r}")
            out[k] = {"int": int, "float": float, "str": str}[types[k]](v)
        return cls(**out)


@dataclass(frozen=True)
class ProbTable:
    p_treat: np.ndarray
    p_control: np.ndarray
    meta: TableMeta

    def arm(self, arm: int) -> np.ndarray:
        return self.p_treat if arm == 1 else self.p_control

    @property
    def n(self) -> int:
        return len(self.p_treat)

    def zero_nodes(self, arm: Optional[int] = None) -> np.ndarray:
        """Nodes with zero exposure probability (either arm unless one is given)."""
        if arm is None:
            return np.flatnonzero((self.p_treat <= 0) | (self.p_control <= 0))
        return np.flatnonzero(self.arm(arm) <= 0)

    @property
    def positive(self) -> bool:
        return len(self.zero_nodes()) == 0


@dataclass(frozen=True)
class PairProbTable:
    rows: np.ndarray
    cols: np.ndarray
    p11: np.ndarray
    p10: np.ndarray
    p01: np.ndarray
    p00: np.ndarray
    meta: TableMeta
    marginals: ProbTable = field(repr=False)

    def joint(self, arm_i: int, arm_j: int) -> np.ndarray:
        return {(1, 1): self.p11, (1, 0): self.p10, (0, 1): self.p01, (0, 0): self.p00}[(arm_i, arm_j)]

    def lookup(self, i: int, j: int, arm_i: int, arm_j: int) -> float:
        n = self.meta.n
        key = self.rows * n + self.cols
        pos = np.searchsorted(key, i * n + j)
        if pos >= len(key) or key[pos] != i * n + j:
            raise KeyError(f"pair ({i}, {j}) outside the table pattern")
        return float(self.joint(arm_i, arm_j)[pos])

    def dense(self, arm_i: int, arm_j: int) -> np.ndarray:
        n = self.meta.n
        out = np.full((n, n), np.nan)
        out[self.rows, self.cols] = self.joint(arm_i, arm_j)
        return out


# -- pair patterns -----------------------------------------------------------------


def pair_pattern(g: Graph, cutoff: Optional[int] = None):
    """Ordered pairs (rows, cols) with dist <= cutoff, diagonal included; None means all pairs."""
    n = g.n
    if cutoff is None or cutoff < 0:
        return np.repeat(np.arange(n, dtype=np.int64), n), np.tile(np.arange(n, dtype=np.int64), n)
    rows, cols = [], []
    for i in range(n):
        nodes, _ = g.distances_from(i, cutoff)
        nodes = np.sort(nodes)
        rows.append(np.full(len(nodes), i, dtype=np.int64))
        cols.append(nodes)
    return np.concatenate(rows), np.concatenate(cols)


def default_cutoff(g: Graph, algo: str) -> Optional[int]:
    """4 for 1-hop-max (far pairs factorize); all pairs for 3-net up to n = 5000."""
    if algo == "one_hop_max":
        return 4
    return None if g.n <= 5000 else 4


# -- accumulation over clusterings -------------------------------------------------


class MixtureAccumulator:
    """Weighted running sums of conditional exposure probabilities over clusterings."""

    def __init__(self, g: Graph, scheme: str, p: float, pattern=None):
        check_scheme(scheme, p)
        self.g, self.scheme, self.p = g, scheme, p
        self.total = 0.0
        self.count = 0
        self.m1 = np.zeros(g.n)
        self.m0 = np.zeros(g.n)
        self.pattern = pattern
        if pattern is not None:
            self.joint = {ab: np.zeros(len(pattern[0])) for ab in ARM_PAIRS}

    def add(self, c: Clustering, weight: float = 1.0) -> None:
        adj = AdjacentClusters(self.g, c)
        self.m1 += weight * marginal_given_clustering(adj, self.scheme, self.p, 1)
        self.m0 += weight * marginal_given_clustering(adj, self.scheme, self.p, 0)
        if self.pattern is not None:
            rows, cols = self.pattern
            inter = adj.intersections(rows, cols)
            for ab in ARM_PAIRS:
                self.joint[ab] += weight * joint_given_clustering(adj, rows, cols, ab[0], ab[1],
                                                                  self.scheme, self.p, inter)
        self.total += weight
        self.count += 1

    def marginals(self, meta: TableMeta) -> ProbTable:
        return ProbTable(self.m1 / self.total, self.m0 / self.total, meta)

    def pairs(self, meta: TableMeta) -> PairProbTable:
        if self.pattern is None:
            raise TableError("accumulator was built without a pair pattern")
        rows, cols = self.pattern
        j = {ab: v / self.total for ab, v in self.joint.items()}
        return PairProbTable(rows, cols, j[(1, 1)], j[(1, 0)], j[(0, 1)], j[(0, 0)], meta,
                             self.marginals(meta))


def _meta(g, w, algo, scheme, p, samples, seed, method, cutoff) -> TableMeta:
    wname = w.scheme if isinstance(w, WeightVector) else str(w)
    return TableMeta(n=g.n, graph_hash=g.content_hash(), algo=algo, weights=wname, scheme=scheme,
                     p=float(p), samples=int(samples), seed=int(seed), method=method,
                     cutoff=-1 if cutoff is None else int(cutoff))


def mixture_tables(g: Graph, clusterings: Sequence[Clustering], scheme: str, p: float,
                   weights: Optional[Sequence[float]] = None, cutoff: Optional[int] = -2,
                   algo: str = "mixture"):
    """Exact tables for the finite mixture of ``clusterings`` (uniform unless ``weights``).

    ``cutoff=-2`` (default) returns only the marginal table; otherwise a
    ``PairProbTable`` over pairs within ``cutoff`` (None for all pairs).
    """
    pattern = None if cutoff == -2 else pair_pattern(g, cutoff)
    acc = MixtureAccumulator(g, scheme, p, pattern)
    for k, c in enumerate(clusterings):
        acc.add(c, 1.0 if weights is None else float(weights[k]))
    meta = _meta(g, "fixed", algo, scheme, p, len(clusterings), -1, "mixture",
                 None if cutoff == -2 else cutoff)
    return acc.marginals(meta) if pattern is None else acc.pairs(meta)


def exact_tables(g: Graph, w: WeightVector, algo: str, scheme: str, p: float,
                 cutoff: Optional[int] = None, pairs: bool = True):
    """Exact distribution-level tables from the enumerated clustering law (small graphs)."""
    law = clustering_distribution(g, w, algo)
    pattern = pair_pattern(g, cutoff) if pairs else None
    acc = MixtureAccumulator(g, scheme, p, pattern)
    for c, q in law:
        acc.add(c, q)
    meta = _meta(g, w, algo, scheme, p, len(law), -1, "exact", cutoff)
    return acc.pairs(meta) if pairs else acc.marginals(meta)


# -- Monte Carlo estimators -------------------------------------------------------


def estimate_marginals_iid(g: Graph, w: WeightVector, algo: str, scheme: str, p: float,
                           K: int, seed: int) -> ProbTable:
    """Average of exact conditional probabilities over K independent clusterings."""
    if K < 1:
        raise ValueError("K must be >= 1")
    draw = sampler(algo)
    acc = MixtureAccumulator(g, scheme, p)
    for k in range(K):
        acc.add(draw(g, w, child_rng(seed, k)))
    return acc.marginals(_meta(g, w, algo, scheme, p, K, seed, "iid", None))


def _stratified(g, w, algo, scheme, p, K, seed, pattern):
    if K < 1:
        raise ValueError("K must be >= 1")
    draw = sampler(algo)
    acc = MixtureAccumulator(g, scheme, p, pattern)
    share = w.w / w.w.sum()
    for k in range(K):
        for j in range(g.n):
            acc.add(draw(g, w, child_rng(seed, k, j), favored=j), share[j])
    return acc


def estimate_marginals_stratified(g: Graph, w: WeightVector, algo: str, scheme: str, p: float,
                                  K: int, seed: int) -> ProbTable:
    """Kn samples, sample (k, j) favouring node j, weighted by w_j / (K sum w).

    Every node gets at least p * w_i / sum(w) (so p / n for uniform weights).
    """
    acc = _stratified(g, w, algo, scheme, p, K, seed, None)
    table = acc.marginals(_meta(g, w, algo, scheme, p, K, seed, "stratified", None))
    _check_stratified_floor(table, w, p)
    return table


def estimate_pairwise(g: Graph, w: WeightVector, algo: str, scheme: str, p: float, K: int,
                      seed: int, cutoff: Optional[int] = -1) -> PairProbTable:
    """Stratified joint probabilities for pairs within ``cutoff``; -1 picks the algorithm default."""
    if cutoff == -1:
        cutoff = default_cutoff(g, algo)
    if cutoff is not None and cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    acc = _stratified(g, w, algo, scheme, p, K, seed, pair_pattern(g, cutoff))
    table = acc.pairs(_meta(g, w, algo, scheme, p, K, seed, "stratified", cutoff))
    _check_stratified_floor(table.marginals, w, p)
    return table


def _check_stratified_floor(table: ProbTable, w: WeightVector, p: float) -> None:
    floor = w.w / w.w.sum()
    tol = 1e-12
    if np.any(table.p_treat < p * floor * (1 - tol)) or np.any(table.p_control < (1 - p) * floor * (1 - tol)):
        raise AssertionError("stratified table fell below its positivity floor")


# -- relative error audit ---------------------------------------------------------


@dataclass
class RelativeErrorAudit:
    K: int
    reps: int
    mse_treat: np.ndarray
    mse_control: np.ndarray
    bound_treat: np.ndarray
    bound_control: np.ndarray
    slack_treat: np.ndarray
    slack_control: np.ndarray
    rel_std_treat: np.ndarray
    rel_std_control: np.ndarray

    @property
    def violations(self) -> int:
        bad_t = self.mse_treat > self.bound_treat + self.slack_treat
        bad_c = self.mse_control > self.bound_control + self.slack_control
        return int(np.sum(bad_t) + np.sum(bad_c))

    def summary(self) -> dict:
        return {
            "K": self.K,
            "reps": self.reps,
            "violations": self.violations,
            "mean_rel_std_treat": float(np.mean(self.rel_std_treat)),
            "mean_rel_std_control": float(np.mean(self.rel_std_control)),
            "max_mse_over_bound": float(np.max(self.mse_treat / self.bound_treat)),
        }


def two_hop_weight_ratio(g: Graph, w: WeightVector) -> np.ndarray:
    """(sum of w over B_2(i)) / w_i for every node."""
    from .graph import squared_graph

    a2 = squared_graph(g).adjacency()
    return (a2 @ w.w + w.w) / w.w


def relative_error_audit(g: Graph, w: WeightVector, algo: str, scheme: str, p: float, K: int,
                         reps: int, seed: int, reference: Optional[ProbTable] = None,
                         reference_K: int = 2000) -> RelativeErrorAudit:
    """Repeat iid estimation ``reps`` times and compare relative-error MSE with its bound.

    Bound per node: (sum_{B_2(i)} w / w_i) / (K p), and with 1 - p for control.
    Without an exact ``reference`` a separate iid estimate with ``reference_K``
    samples (child seed stream ``reps``) stands in for the truth.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if reference is None:
        reference = estimate_marginals_iid(g, w, algo, scheme, p, reference_K,
                                           int(np.random.SeedSequence([seed, reps]).generate_state(1)[0]))
    est_t = np.empty((reps, g.n))
    est_c = np.empty((reps, g.n))
    for r in range(reps):
        rseed = int(np.random.SeedSequence([seed, r]).generate_state(1)[0])
        t = estimate_marginals_iid(g, w, algo, scheme, p, K, rseed)
        est_t[r], est_c[r] = t.p_treat, t.p_control
    rel_t = (est_t - reference.p_treat) / reference.p_treat
    rel_c = (est_c - reference.p_control) / reference.p_control
    ratio = two_hop_weight_ratio(g, w)
    sq_t, sq_c = rel_t ** 2, rel_c ** 2
    return RelativeErrorAudit(
        K=K, reps=reps,
        mse_treat=sq_t.mean(0), mse_control=sq_c.mean(0),
        bound_treat=ratio / (K * p), bound_control=ratio / (K * (1 - p)),
        slack_treat=4 * sq_t.std(0, ddof=1) / np.sqrt(reps),
        slack_control=4 * sq_c.std(0, ddof=1) / np.sqrt(reps),
        rel_std_treat=est_t.std(0, ddof=1) / reference.p_treat,
        rel_std_control=est_c.std(0, ddof=1) / reference.p_control,
    )


# -- persistence ------------------------------------------------------------------


def _body(table) -> str:
    buf = io.StringIO()
    if isinstance(table, PairProbTable):
        buf.write("i,j,arm_i,arm_j,prob\n")
        for t in range(len(table.rows)):
            i, j = int(table.rows[t]), int(table.cols[t])
            for a, b in ARM_PAIRS:
                buf.write(f"{i},{j},{a},{b},{float(table.joint(a, b)[t])!r}\n")
    else:
        buf.write("node,p_treat,p_control\n")
        for i in range(table.n):
            buf.write(f"{i},{float(table.p_treat[i])!r},{float(table.p_control[i])!r}\n")
    return buf.getvalue()


def table_text(table) -> str:
    """Self-describing table file contents: checksum line, metadata header, CSV body."""
    kind = "pairwise" if isinstance(table, PairProbTable) else "marginal"
    extra = []
    if kind == "pairwise":
        extra.append(f"# marginals {table.marginals.meta.header()}")
        extra.extend("# m " + ln for ln in _body(table.marginals).splitlines())
    head = [f"# {FORMAT_TAG}", f"# kind={kind}", f"# {table.meta.header()}"]
    text = "\n".join(head + extra) + "\n" + _body(table)
    checksum = hashlib.sha256(text.encode()).hexdigest()
    return f"# checksum={checksum}\n" + text


def persist_table(table, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(table_text(table))


def load_table(path, kind: Optional[str] = None, graph: Optional[Graph] = None):
    """Read a table file; ``kind`` ('marginal' | 'pairwise') and ``graph`` act as guards."""
    with open(path) as fh:
        first = fh.readline()
        text = fh.read()
    lines = text.splitlines()
    if not first.startswith("# checksum=") or not lines or lines[0] != f"# {FORMAT_TAG}":
        raise TableError(f"{path}: not a table file")
    if hashlib.sha256(text.encode()).hexdigest() != first.strip().split("=", 1)[1]:
        raise TableError(f"{path}: checksum mismatch")
    header = [ln[2:] for ln in lines if ln.startswith("# ")]
    body_lines = [ln for ln in lines if not ln.startswith("#")]
    file_kind = header[1].split("=", 1)[1]
    meta = TableMeta.parse(header[2])
    if kind == "pairwise" and file_kind != "pairwise":
        raise TableError(f"{path}: pairwise table required, found a marginal table")
    if kind is not None and kind not in ("marginal", "pairwise"):
        raise TableError(f"unknown table kind {kind!r}")
    if graph is not None and (meta.n != graph.n or meta.graph_hash != graph.content_hash()):
        raise TableError(f"{path}: table was built for a different graph")
    if file_kind == "marginal":
        return _parse_marginal(body_lines, meta)
    mmeta = TableMeta.parse(header[3].split(" ", 1)[1])
    marg = _parse_marginal([ln[2:] for ln in header if ln.startswith("m ")], mmeta)
    rows = np.array([ln.split(",") for ln in body_lines[1:]], dtype=object)
    if rows.size == 0:
        raise TableError(f"{path}: empty pair table")
    probs = np.array([float(x) for x in rows[:, 4]]).reshape(-1, 4)
    ii = rows[::4, 0].astype(np.int64)
    jj = rows[::4, 1].astype(np.int64)
    pt = PairProbTable(ii, jj, probs[:, 0], probs[:, 1], probs[:, 2], probs[:, 3], meta, marg)
    if kind == "marginal":
        return pt.marginals
    return pt


def _parse_marginal(lines, meta) -> ProbTable:
    if not lines or lines[0] != "node,p_treat,p_control":
        raise TableError("marginal body has the wrong columns")
    vals = [ln.split(",") for ln in lines[1:]]
    pt = np.array([float(v[1]) for v in vals])
    pc = np.array([float(v[2]) for v in vals])
    if len(pt) != meta.n:
        raise TableError("row count does not match the declared node count")
    return ProbTable(pt, pc, meta)
