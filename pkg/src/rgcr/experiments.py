"""Simulation protocols: mixture-of-K variance curves, estimator simulations, ring check,
bound audits and network-size sweeps.

Every runner takes an ``ExperimentConfig`` and returns a ``Report`` whose rows are
deterministic functions of the config (seeds included), so rerunning a config
reproduces its output byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .clustering import WeightVector, child_rng, make_weights, sampler, spectral_weights
from .estimation import (estimate_marginals_iid, estimate_marginals_stratified, exact_tables,
                         relative_error_audit)
from .estimators import (GateVariance, PositivityError, ht_variance_mu, ht_variances_dense,
                         proxy_variance_ub, variance_bound_general)
from .graph import (Graph, gen_complete, gen_cycle, gen_path, gen_random_connected, gen_star,
                    gen_small_world, gen_torus, growth_coefficient, load_edge_list)
from .randomization import (SCHEMES, AdjacentClusters, accumulate_dense_joint, assign,
                            check_scheme, marginal_given_clustering)
from .response import ResponseParams, baseline_outcomes, homophily_vector
from .ring import (check_arcs, ring_closed_form, ring_outcomes, ring_scaling_constant,
                   ring_tables, ring_variance)

ALGOS = ("three_net", "one_hop_max")


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------


def _default_graph():
    return {"kind": "small_world", "side": 16, "alpha": 2.3, "seed": 1}


def _default_response():
    return {"model": "multiplicative", "a": 1.0, "b": 0.5, "sigma": 0.1, "delta": 0.5,
            "gamma": 0.5, "tau": 1.0}


def _default_ring():
    return {"n": 400, "k": [4, 8, 20], "a": 1.0, "b": 1.0, "tau": 1.0,
            "schemes": ["independent", "complete"], "scaling_n": 5000, "scaling_k": 50}


def _default_audit():
    return {"exact_graphs": ["P3", "C6", "S5", "R7", "R8"], "mc_graphs": ["C12", "SW16"],
            "k_probs": 4, "reps": 5, "random_weight_draws": 3, "mc_K": [8, 32], "mc_reps": 30,
            "proxy_draws": 100}


@dataclass
class ExperimentConfig:
    """All knobs of every protocol; JSON files override the defaults key by key."""
    graph: dict = field(default_factory=_default_graph)
    algos: list = field(default_factory=lambda: list(ALGOS))
    weights: str = "uniform"
    scheme: str = "independent"
    p: float = 0.5
    mixture_sizes: list = field(default_factory=lambda: [1, 10, 100, 1000])
    replicates: int = 50
    k_probs: int = 4
    stratified: bool = True
    exact_probs: bool = False
    runs_per_node: int = 10
    gcr_clusterings: int = 20
    gcr_runs: int = 1000
    response: dict = field(default_factory=_default_response)
    ring: dict = field(default_factory=_default_ring)
    audit: dict = field(default_factory=_default_audit)
    sides: list = field(default_factory=lambda: [16, 24, 32])
    seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            check_scheme(self.scheme, self.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("replicates", "k_probs", "runs_per_node", "gcr_clusterings", "gcr_runs",
                     "workers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.mixture_sizes or min(self.mixture_sizes) < 1:
            raise ConfigError("mixture sizes must be >= 1")
        for a in self.algos:
            if a not in ALGOS:
                raise ConfigError(f"unknown clustering algorithm {a!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if min(self.sides) < 3:
            raise ConfigError("lattice sides must be >= 3")
        if self.response.get("model") not in ("multiplicative", "additive"):
            raise ConfigError("response model must be multiplicative or additive")
        if self.response.get("sigma", 0) < 0:
            raise ConfigError("sigma must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            cur = getattr(base, k)
            merged[k] = {**cur, **v} if isinstance(cur, dict) and isinstance(v, dict) else v
        return replace(base, **merged)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        """Resolved config as embedded in reports; the output path is left out."""
        d = asdict(self)
        d.pop("out")
        return d


def derive_seed(master: int, *key: int) -> int:
    """Independent 63-bit seed for stream ``key`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


_NAMED = {
    "P3": lambda: gen_path(3),
    "C6": lambda: gen_cycle(6),
    "C12": lambda: gen_cycle(12),
    "S5": lambda: gen_star(5),
    "R7": lambda: gen_random_connected(7, 0.35, 17),
    "R8": lambda: gen_random_connected(8, 0.4, 5),
    "SW16": lambda: gen_small_world(16, seed=1),
}


def build_graph(spec) -> Graph:
    """Graph from a generator spec dict, an edge-list path, or a short name (P3, C12, SW16...)."""
    if isinstance(spec, str):
        if spec in _NAMED:
            return _NAMED[spec]()
        return load_edge_list(spec)
    kind = spec.get("kind", "small_world")
    if kind == "small_world":
        return gen_small_world(int(spec["side"]), float(spec.get("alpha", 2.3)),
                               int(spec.get("seed", 0)), spec.get("max_long_edges"))
    if kind == "torus":
        return gen_torus(int(spec["side"]))
    if kind == "cycle":
        return gen_cycle(int(spec["n"]))
    if kind == "path":
        return gen_path(int(spec["n"]))
    if kind == "complete":
        return gen_complete(int(spec["n"]))
    if kind == "star":
        return gen_star(int(spec["leaves"]))
    if kind == "random":
        return gen_random_connected(int(spec["n"]), float(spec["p"]), int(spec.get("seed", 0)))
    if kind == "edges":
        return load_edge_list(spec["path"])
    raise ConfigError(f"unknown graph kind {kind!r}")


# -- reports ------------------------------------------------------------------------


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if not np.isfinite(v) else v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


@dataclass
class Report:
    """Per-condition-and-replicate ``rows`` plus aggregated ``summary`` rows."""
    kind: str
    config: dict
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, **row) -> dict:
        row = {k: _clean(v) for k, v in row.items()}
        self.rows.append(row)
        return row

    def add_summary(self, **row) -> dict:
        row = {k: _clean(v) for k, v in row.items()}
        self.summary.append(row)
        return row

    def to_json(self) -> str:
        d = {"kind": self.kind, "config": self.config, "rows": self.rows,
             "summary": self.summary, "notes": self.notes}
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        """One table: rows tagged section=row, then summaries tagged section=summary."""
        keys = sorted({k for r in self.rows + self.summary for k in r})
        buf = io.StringIO()
        buf.write(f"# kind={self.kind}\n")
        buf.write("# config=" + json.dumps(self.config, sort_keys=True) + "\n")
        for note in self.notes:
            buf.write(f"# note={note}\n")
        w = csv.DictWriter(buf, fieldnames=["section"] + keys, lineterminator="\n")
        w.writeheader()
        for section, rows in (("row", self.rows), ("summary", self.summary)):
            for r in rows:
                w.writerow({"section": section, **{k: _fmt(r.get(k)) for k in keys}})
        return buf.getvalue()

    def write(self, path, fmt: str = "json") -> None:
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_json())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def _quantiles(x) -> dict:
    x = np.asarray([v for v in x if v is not None], dtype=np.float64)
    if not len(x):
        return {"median": None, "q025": None, "q975": None}
    q = np.quantile(x, [0.025, 0.5, 0.975])
    return {"median": float(q[1]), "q025": float(q[0]), "q975": float(q[2])}


# -- shared setup -------------------------------------------------------------------


@dataclass
class Population:
    """Graph plus potential outcomes drawn from the configured response model."""
    g: Graph
    y0: np.ndarray
    y1: np.ndarray
    tau: float
    model: str
    delta: float
    gamma: float
    additive_tau: float


def make_population(cfg: ExperimentConfig, g: Optional[Graph] = None) -> Population:
    g = build_graph(cfg.graph) if g is None else g
    r = cfg.response
    params = ResponseParams(a=float(r["a"]), b=float(r["b"]), sigma=float(r["sigma"]),
                            delta=float(r["delta"]), gamma=float(r["gamma"]))
    h = homophily_vector(g).h if params.b != 0 else np.zeros(g.n)
    y0 = baseline_outcomes(g, h, params, derive_seed(cfg.seed, 0))
    if r["model"] == "additive":
        t = float(r["tau"])
        return Population(g, y0, y0 + t, t, "additive", 0.0, 0.0, t)
    y1 = y0 * (1.0 + params.delta + params.gamma)
    return Population(g, y0, y1, float(np.mean(y1 - y0)), "multiplicative", params.delta,
                      params.gamma, 0.0)


class _BatchOutcomes:
    """Exposure indicators and observed outcomes for a batch of assignments (rows of Z)."""

    def __init__(self, pop: Population):
        self.pop = pop
        g = pop.g
        self.adj = g.adjacency().astype(np.float64).tocsr()
        self.deg = g.degrees.astype(np.float64)

    def run(self, z: np.ndarray):
        """z: (B, n) 0/1 matrix -> (exposed1, exposed0, y) each (B, n)."""
        zt = z.T.astype(np.float64)
        treated_nbrs = np.asarray(self.adj @ zt).T
        e1 = (z == 1) & (treated_nbrs == self.deg)
        e0 = (z == 0) & (treated_nbrs == 0)
        pop = self.pop
        if pop.model == "additive":
            y = pop.y0 + pop.additive_tau * z
        else:
            frac = np.divide(treated_nbrs, self.deg, out=np.zeros_like(treated_nbrs),
                             where=self.deg > 0)
            y = pop.y0 * (1.0 + pop.delta * z + pop.gamma * frac)
        return e1, e0, y


def batch_estimates(e1, e0, y, p1, p0):
    """HT and Hajek GATE estimates for each row; Hajek is NaN when an arm has no exposed node."""
    n = y.shape[1]
    w1 = np.where(e1, 1.0 / np.where(p1 > 0, p1, np.inf), 0.0)
    w0 = np.where(e0, 1.0 / np.where(p0 > 0, p0, np.inf), 0.0)
    if np.any(e1 & (p1 <= 0)) or np.any(e0 & (p0 <= 0)):
        raise PositivityError("exposed node with zero exposure probability")
    s1 = (w1 * y).sum(1)
    s0 = (w0 * y).sum(1)
    ht = (s1 - s0) / n
    d1, d0 = w1.sum(1), w0.sum(1)
    ok = (d1 > 0) & (d0 > 0)
    hajek = np.full(len(y), np.nan)
    hajek[ok] = s1[ok] / d1[ok] - s0[ok] / d0[ok]
    return ht, hajek, ok


def _bias_var(est: np.ndarray, tau: float) -> dict:
    if not len(est):
        return {"bias": None, "variance": None, "mse": None, "abs_bias": None}
    err = est - tau
    bias = float(err.mean())
    var = float(np.mean((est - est.mean()) ** 2))
    mse = float(np.mean(err ** 2))
    return {"bias": bias, "abs_bias": abs(bias), "variance": var, "mse": mse}


def _map(cfg: ExperimentConfig, fn, items):
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- mixture experiment -------------------------------------------------------------


def mixture_variance_curve(g: Graph, w: WeightVector, algo: str, scheme: str, p: float,
                           sizes, seed: int, y1, y0) -> dict:
    """Exact Var of the HT estimators under the uniform mixture of the first K clusterings.

    Clustering k uses child seed (seed, k), so smaller mixtures are prefixes of
    larger ones. Returns {K: GateVariance or None (positivity fails)}.
    """
    sizes = sorted(set(int(k) for k in sizes))
    n = g.n
    j11, j10, j00 = (np.zeros((n, n)) for _ in range(3))
    m1, m0 = np.zeros(n), np.zeros(n)
    draw = sampler(algo)
    out = {}
    for k in range(sizes[-1]):
        adj = AdjacentClusters(g, draw(g, w, child_rng(seed, k)))
        m1 += marginal_given_clustering(adj, scheme, p, 1)
        m0 += marginal_given_clustering(adj, scheme, p, 0)
        accumulate_dense_joint(adj, scheme, p, 1.0, j11, j10, j00)
        K = k + 1
        if K in sizes:
            p1, p0 = m1 / K, m0 / K
            if np.any(p1 <= 0) or np.any(p0 <= 0):
                out[K] = None
            else:
                out[K] = ht_variances_dense(y1, y0, p1, p0, j11, j10, j00, scale=1.0 / K)
    return out


def run_mixture_experiment(cfg: ExperimentConfig, g: Optional[Graph] = None) -> Report:
    pop = make_population(cfg, g)
    g = pop.g
    if g.n > 5000:
        raise ConfigError("mixture experiment keeps dense n x n tables; n must be <= 5000")
    w = make_weights(g, cfg.weights)
    rep = Report("mixture", cfg.to_dict())
    rep.notes.append(f"n={g.n} m={g.m} tau={pop.tau!r}")
    for ai, algo in enumerate(cfg.algos):
        def one(r, algo=algo, ai=ai):
            return mixture_variance_curve(g, w, algo, cfg.scheme, cfg.p, cfg.mixture_sizes,
                                          derive_seed(cfg.seed, 1, ai, r), pop.y1, pop.y0)

        curves = _map(cfg, one, range(cfg.replicates))
        for K in sorted(set(cfg.mixture_sizes)):
            vals = []
            for r, curve in enumerate(curves):
                v: Optional[GateVariance] = curve[K]
                feasible = v is not None
                rep.add(algo=algo, scheme=cfg.scheme, K=K, replicate=r, feasible=feasible,
                        var_tau=v.var_tau if feasible else None,
                        var_mu1=v.var_mu1 if feasible else None,
                        var_mu0=v.var_mu0 if feasible else None,
                        cov=v.cov if feasible else None)
                vals.append(v.var_tau if feasible else None)
            infeasible = sum(v is None for v in vals)
            rep.add_summary(algo=algo, scheme=cfg.scheme, K=K, replicates=cfg.replicates,
                            infeasible=infeasible, **{f"var_tau_{k}": x for k, x in _quantiles(vals).items()})
    return rep


# -- estimator simulation -----------------------------------------------------------


def _simulate_rgcr(cfg, pop, w, algo, p1, p0, seed, runs, batch=256):
    """Full pipeline draws: fresh clustering and assignment per run."""
    g = pop.g
    draw = sampler(algo)
    out = _BatchOutcomes(pop)
    ht_all, hj_all, ok_all = [], [], []
    for start in range(0, runs, batch):
        stop = min(runs, start + batch)
        z = np.empty((stop - start, g.n), dtype=np.int8)
        for t, r in enumerate(range(start, stop)):
            rng = child_rng(seed, r)
            z[t] = assign(draw(g, w, rng), cfg.scheme, cfg.p, rng).z
        ht, hj, ok = batch_estimates(*out.run(z), p1, p0)
        ht_all.append(ht)
        hj_all.append(hj)
        ok_all.append(ok)
    return np.concatenate(ht_all), np.concatenate(hj_all), np.concatenate(ok_all)


def _simulate_gcr(cfg, pop, c, seed, runs, batch=1024):
    """Repeated assignments over one fixed clustering with its exact conditional marginals."""
    g = pop.g
    adj = AdjacentClusters(g, c)
    p1 = marginal_given_clustering(adj, cfg.scheme, cfg.p, 1)
    p0 = marginal_given_clustering(adj, cfg.scheme, cfg.p, 0)
    if np.any(p1 <= 0) or np.any(p0 <= 0):
        return None
    out = _BatchOutcomes(pop)
    rng = child_rng(seed, 0)
    res = []
    for start in range(0, runs, batch):
        b = min(runs, start + batch) - start
        z = np.stack([assign(c, cfg.scheme, cfg.p, rng).z for _ in range(b)])
        res.append(batch_estimates(*out.run(z), p1, p0))
    return tuple(np.concatenate(x) for x in zip(*res))


def rgcr_table(cfg: ExperimentConfig, g: Graph, w: WeightVector, algo: str, seed: int):
    """Marginal table used in analysis: exact (small graphs only), stratified, or iid."""
    if cfg.exact_probs:
        return exact_tables(g, w, algo, cfg.scheme, cfg.p, pairs=False)
    if cfg.stratified:
        return estimate_marginals_stratified(g, w, algo, cfg.scheme, cfg.p, cfg.k_probs, seed)
    return estimate_marginals_iid(g, w, algo, cfg.scheme, cfg.p, cfg.k_probs * g.n, seed)


def run_estimator_sim(cfg: ExperimentConfig, g: Optional[Graph] = None) -> Report:
    pop = make_population(cfg, g)
    g = pop.g
    w = make_weights(g, cfg.weights)
    rep = Report("estimator-sim", cfg.to_dict())
    runs = cfg.runs_per_node * g.n
    rep.notes.append(f"n={g.n} m={g.m} tau={pop.tau!r} runs={runs}")
    for ai, algo in enumerate(cfg.algos):
        table = rgcr_table(cfg, g, w, algo, derive_seed(cfg.seed, 2, ai))
        ht, hj, ok = _simulate_rgcr(cfg, pop, w, algo, table.p_treat, table.p_control,
                                    derive_seed(cfg.seed, 3, ai), runs)
        for name, est in (("HT", ht), ("Hajek", hj[ok])):
            rep.add(design="RGCR", algo=algo, scheme=cfg.scheme, estimator=name, clustering=-1,
                    runs=len(est), degenerate=int((~ok).sum()) if name == "Hajek" else 0,
                    n=g.n, tau=pop.tau, **_bias_var(est, pop.tau))
        # GCR: many fixed clusterings, each simulated on its own
        draw = sampler(algo)

        def one(ci, algo=algo, ai=ai, draw=draw):
            c = draw(g, w, child_rng(derive_seed(cfg.seed, 4, ai), ci))
            return _simulate_gcr(cfg, pop, c, derive_seed(cfg.seed, 5, ai, ci), cfg.gcr_runs)

        per = _map(cfg, one, range(cfg.gcr_clusterings))
        stats = {"HT": [], "Hajek": []}
        for ci, res in enumerate(per):
            if res is None:
                rep.add(design="GCR", algo=algo, scheme=cfg.scheme, estimator="HT", clustering=ci,
                        runs=0, degenerate=0, n=g.n, tau=pop.tau, feasible=False)
                continue
            ght, ghj, gok = res
            for name, est in (("HT", ght), ("Hajek", ghj[gok])):
                row = rep.add(design="GCR", algo=algo, scheme=cfg.scheme, estimator=name,
                              clustering=ci, runs=len(est),
                              degenerate=int((~gok).sum()) if name == "Hajek" else 0,
                              n=g.n, tau=pop.tau, feasible=True, **_bias_var(est, pop.tau))
                stats[name].append(row)
        for name, rows in stats.items():
            summ = {"design": "GCR", "algo": algo, "scheme": cfg.scheme, "estimator": name,
                    "n": g.n, "clusterings": len(rows),
                    "infeasible": cfg.gcr_clusterings - len(stats["HT"])}
            for key in ("bias", "abs_bias", "variance", "mse"):
                vals = [r[key] for r in rows if r.get(key) is not None]
                summ[f"median_{key}"] = float(np.median(vals)) if vals else None
            rep.add_summary(**summ)
        for r in rep.rows:
            if r["design"] == "RGCR" and r["algo"] == algo:
                rep.add_summary(design="RGCR", algo=algo, scheme=cfg.scheme,
                                estimator=r["estimator"], n=g.n, clusterings=r["runs"],
                                infeasible=0, median_bias=r["bias"], median_abs_bias=r["abs_bias"],
                                median_variance=r["variance"], median_mse=r["mse"])
    return rep


# -- network-size sweep -----------------------------------------------------------


def loglog_slope(x, y) -> Optional[float]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def run_size_sweep(cfg: ExperimentConfig) -> Report:
    rep = Report("size-sweep", cfg.to_dict())
    per = {}
    for side in cfg.sides:
        sub = replace(cfg, graph={**cfg.graph, "kind": "small_world", "side": int(side)})
        sim = run_estimator_sim(sub)
        for s in sim.summary:
            rep.add(side=int(side), **s)
            per.setdefault((s["design"], s["algo"], s["estimator"]), []).append(s)
    for (design, algo, est), rows in sorted(per.items()):
        n = [r["n"] for r in rows]
        rep.add_summary(design=design, algo=algo, estimator=est,
                        slope_variance=loglog_slope(n, [r["median_variance"] for r in rows]),
                        slope_mse=loglog_slope(n, [r["median_mse"] for r in rows]),
                        slope_abs_bias=loglog_slope(n, [r["median_abs_bias"] for r in rows]))
    return rep


# -- ring network -----------------------------------------------------------------


def run_ring_check(n: int, k: int, a: float, b: float, tau: float, scheme: str) -> dict:
    """Exact Var(tau_hat) of the rotated k-arc design on C_n against its large-n limit."""
    check_arcs(n, k)
    tables = ring_tables(n, k, scheme, 0.5)
    y1, y0 = ring_outcomes(n, a, b, tau)
    v = ring_variance(tables, y1, y0)
    limit = ring_closed_form(k, a, b, tau, scheme)
    return {"n": n, "k": k, "a": a, "b": b, "tau": tau, "scheme": scheme,
            "p_treat": tables.p_treat, "var_tau": v.var_tau, "closed_form": limit,
            "rel_gap": v.var_tau / limit - 1.0, "k_var_tau": k * v.var_tau,
            "scaling_constant": ring_scaling_constant(a, b, tau, scheme)}


def run_ring_report(cfg: ExperimentConfig) -> Report:
    r = cfg.ring
    rep = Report("ring-check", cfg.to_dict())
    for scheme in r["schemes"]:
        for k in r["k"]:
            rep.add(kind="limit", **run_ring_check(int(r["n"]), int(k), float(r["a"]),
                                                   float(r["b"]), float(r["tau"]), scheme))
        row = run_ring_check(int(r["scaling_n"]), int(r["scaling_k"]), float(r["a"]),
                             float(r["b"]), float(r["tau"]), scheme)
        row["scaling_rel_gap"] = row["k_var_tau"] / row["scaling_constant"] - 1.0
        rep.add(kind="scaling", **row)
    return rep


# -- bound audit -------------------------------------------------------------------


def _worst(observed: np.ndarray, bound: np.ndarray, mask=None, slack=None) -> dict:
    """Row for the per-node inequality observed >= bound (optionally with additive slack)."""
    idx = np.arange(len(bound)) if mask is None else np.flatnonzero(mask)
    if not len(idx):
        return {"node": None, "bound": None, "observed": None, "passed": True, "checked": 0}
    if slack is None:
        s = np.zeros(len(bound))
    elif callable(slack):
        s = slack(bound)
    else:
        s = slack
    margin = (observed[idx] + s[idx]) - bound[idx]
    t = idx[int(np.argmin(margin))]
    return {"node": int(t), "bound": float(bound[t]), "observed": float(observed[t]),
            "slack": float(s[t]), "passed": bool(np.all(margin >= -1e-12 * np.maximum(1, bound[idx]))),
            "checked": int(len(idx))}


class _SlackRule:
    """4 sigma slack for averaged stratified estimates (rows of ``est`` are replicates).

    sigma is the larger of the empirical standard error and its Bhatia-Davis
    ceiling at the null boundary P = bound: every stratum term lies in [0, arm_p],
    so Var <= arm_p * max_share * P / (K * reps). Rare exposure events can be
    missing from every replicate, which makes the empirical spread alone too small.
    """

    def __init__(self, est: np.ndarray, arm_p: float, max_share: float, total_k: int):
        self.emp = est.std(0, ddof=1) / np.sqrt(est.shape[0])
        self.arm_p, self.max_share, self.total_k = arm_p, max_share, total_k

    def __call__(self, bound: np.ndarray) -> np.ndarray:
        ceiling = np.sqrt(self.arm_p * self.max_share * bound / self.total_k)
        return 4 * np.maximum(self.emp, ceiling)


def lower_bound_rows(g: Graph, prob1: np.ndarray, prob0: np.ndarray, w: WeightVector, algo: str,
                     scheme: str, p: float, slack1=None, slack0=None,
                     lambda_star: Optional[float] = None) -> list:
    """Exposure-probability lower bounds for one table (weights ``w`` decide which ones apply)."""
    b2 = g.ball_sizes(2).astype(np.float64)
    rows = []
    if w.is_uniform:
        rows.append(("prob_LB", 1, _worst(prob1, p / b2, slack=slack1)))
        rows.append(("prob_LB", 0, _worst(prob0, (1 - p) / b2, slack=slack0)))
        if algo == "one_hop_max" and scheme == "independent":
            d = g.degrees
            ok1 = b2 - d >= 1 / (1 - p)
            ok0 = b2 - d >= 1 / p
            r1 = _worst(prob1, p / (1 - p) / b2, ok1, slack1)
            r0 = _worst(prob0, (1 - p) / p / b2, ok0, slack0)
            r1["skipped"] = int((~ok1).sum())
            r0["skipped"] = int((~ok0).sum())
            rows.append(("prob_LB_improved", 1, r1))
            rows.append(("prob_LB_improved", 0, r0))
    from .estimation import two_hop_weight_ratio

    share = 1.0 / two_hop_weight_ratio(g, w)
    rows.append(("prob_LB_weighted", 1, _worst(prob1, p * share, slack=slack1)))
    rows.append(("prob_LB_weighted", 0, _worst(prob0, (1 - p) * share, slack=slack0)))
    if lambda_star is not None:
        rows.append(("prob_LB_spectral", 1, _worst(prob1, np.full(g.n, p / lambda_star), slack=slack1)))
        rows.append(("prob_LB_spectral", 0, _worst(prob0, np.full(g.n, (1 - p) / lambda_star),
                                                   slack=slack0)))
    return rows


def _weight_sets(g: Graph, draws: int, seed: int):
    out = [("uniform", make_weights(g), None)]
    sp = spectral_weights(g)
    out.append(("spectral", sp.weights, sp.lambda_star))
    rng = np.random.default_rng(seed)
    for t in range(draws):
        out.append((f"random{t}", WeightVector(rng.exponential(size=g.n) + 0.05, "custom"), None))
    return out


def variance_bound_rows(g: Graph, name: str, scheme: str, p: float, y_max: float = 1.0) -> list:
    """Var(mu_hat(1)) from exact 1-hop-max tables against the growth-based upper bounds."""
    rows = []
    kappa = growth_coefficient(g, 5).kappa
    dmax = g.d_max
    rng = np.random.default_rng(11)
    sp = spectral_weights(g)
    for wname, w, lam in (("uniform", make_weights(g), None),
                          ("spectral", sp.weights, sp.lambda_star)):
        t = exact_tables(g, w, "one_hop_max", scheme, p)
        p1 = t.marginals.p_treat
        for yname, y in (("constant", np.full(g.n, y_max)), ("random", rng.random(g.n) * y_max)):
            v1 = ht_variance_mu(y, t, 1).value
            general = variance_bound_general(g, p1, y_max)
            rows.append({"bound_name": "var_restricted_growth_general", "graph": name,
                         "weights": wname, "scheme": scheme, "outcomes": yname, "bound": general,
                         "observed": v1, "passed": v1 <= general * (1 + 1e-12)})
            if wname == "uniform":
                unw = y_max ** 2 * (dmax + 1) ** 2 * kappa ** 4 / (p * g.n)
                gate_b = 2 * y_max ** 2 * (dmax + 1) ** 2 * kappa ** 4 * (1 / p + 1 / (1 - p)) / g.n
                rows.append({"bound_name": "var_restricted_growth_unweighted", "graph": name,
                             "weights": wname, "scheme": scheme, "outcomes": yname, "bound": unw,
                             "observed": v1, "passed": v1 <= unw})
                vt = _gate_var(t, y, y * 0.5)
                rows.append({"bound_name": "var_GATE_restricted_growth", "graph": name,
                             "weights": wname, "scheme": scheme, "outcomes": yname,
                             "bound": gate_b, "observed": vt, "passed": vt <= gate_b})
            else:
                spec_b = y_max ** 2 * lam * (dmax + 1) * kappa ** 3 / (p * g.n)
                gate_b = 2 * y_max ** 2 * lam * (dmax + 1) * kappa ** 3 * (1 / p + 1 / (1 - p)) / g.n
                rows.append({"bound_name": "var_restricted_growth_spectral", "graph": name,
                             "weights": wname, "scheme": scheme, "outcomes": yname,
                             "bound": spec_b, "observed": v1, "passed": v1 <= spec_b})
                vt = _gate_var(t, y, y * 0.5)
                rows.append({"bound_name": "var_GATE_restricted_growth_spectral", "graph": name,
                             "weights": wname, "scheme": scheme, "outcomes": yname,
                             "bound": gate_b, "observed": vt, "passed": vt <= gate_b})
    return rows


def _gate_var(t, y1, y0) -> float:
    from .estimators import ht_variance_gate

    return ht_variance_gate(y1, y0, t).value


def factorization_row(g: Graph, name: str, i: int, j: int) -> dict:
    """1-hop-max + independent: nodes more than 4 hops apart have independent exposures."""
    t = exact_tables(g, make_weights(g), "one_hop_max", "independent", 0.5)
    nodes, dists = g.distances_from(i)
    dist = int(dists[np.flatnonzero(nodes == j)[0]])
    worst = 0.0
    for a in (0, 1):
        for b in (0, 1):
            prod = t.marginals.arm(a)[i] * t.marginals.arm(b)[j]
            worst = max(worst, abs(t.lookup(i, j, a, b) - prod))
    return {"bound_name": "one_hop_max_joint_factorizes", "graph": name, "pair": [i, j],
            "distance": dist, "observed": worst, "bound": 0.0, "passed": dist > 4 and worst <= 1e-15}


def run_bound_audit(cfg: ExperimentConfig) -> Report:
    a = cfg.audit
    rep = Report("audit", cfg.to_dict())
    p = cfg.p if cfg.scheme == "independent" else 0.5
    # exact tables on small graphs
    for gi, name in enumerate(a["exact_graphs"]):
        g = build_graph(name)
        for wname, w, lam in _weight_sets(g, int(a["random_weight_draws"]), derive_seed(cfg.seed, 6, gi)):
            for algo in ALGOS:
                for scheme in SCHEMES:
                    pp = p if scheme == "independent" else 0.5
                    t = exact_tables(g, w, algo, scheme, pp, pairs=False)
                    for bname, arm, row in lower_bound_rows(g, t.p_treat, t.p_control, w, algo,
                                                            scheme, pp, lambda_star=lam):
                        rep.add(bound_name=bname, source="exact", graph=name, weights=wname,
                                algo=algo, scheme=scheme, arm=arm, **row)
        if g.is_connected():
            lam = spectral_weights(g).lambda_star
            rep.add(bound_name="perron_lambda_le_max_B2", source="exact", graph=name,
                    bound=float(g.ball_sizes(2).max()), observed=lam,
                    passed=lam <= g.ball_sizes(2).max() * (1 + 1e-9))
    # stratified estimates with statistical slack on larger graphs
    reps = int(a["reps"])
    for gi, name in enumerate(a["mc_graphs"]):
        g = build_graph(name)
        for wname, w, lam in _weight_sets(g, 1, derive_seed(cfg.seed, 7, gi)):
            for ai, algo in enumerate(ALGOS):
                for scheme in SCHEMES:
                    pp = p if scheme == "independent" else 0.5
                    est = [estimate_marginals_stratified(g, w, algo, scheme, pp, int(a["k_probs"]),
                                                         derive_seed(cfg.seed, 8, gi, ai, r))
                           for r in range(reps)]
                    e1 = np.array([e.p_treat for e in est])
                    e0 = np.array([e.p_control for e in est])
                    share = float(w.w.max() / w.w.sum())
                    kk = int(a["k_probs"]) * reps
                    for bname, arm, row in lower_bound_rows(
                            g, e1.mean(0), e0.mean(0), w, algo, scheme, pp,
                            _SlackRule(e1, pp, share, kk), _SlackRule(e0, 1 - pp, share, kk), lam):
                        rep.add(bound_name=bname, source="stratified", graph=name, weights=wname,
                                algo=algo, scheme=scheme, arm=arm, **row)
    # Monte Carlo relative-error bound and its K^-1/2 decay
    mc_graph = build_graph(a["mc_graphs"][-1])
    for wname, w, _ in _weight_sets(mc_graph, 1, derive_seed(cfg.seed, 9))[::2]:
        stds = []
        for K in a["mc_K"]:
            au = relative_error_audit(mc_graph, w, "one_hop_max", "independent", p, int(K),
                                      int(a["mc_reps"]), derive_seed(cfg.seed, 10, int(K)))
            s = au.summary()
            stds.append(s["mean_rel_std_treat"])
            rep.add(bound_name="prob_MC_var" if w.is_uniform else "prob_MC_var_weighted",
                    source="iid", graph=a["mc_graphs"][-1], weights=wname, K=int(K),
                    reps=int(a["mc_reps"]), violations=s["violations"],
                    observed=s["max_mse_over_bound"], bound=1.0, passed=s["violations"] == 0)
        slope = loglog_slope(a["mc_K"], stds)
        rep.add(bound_name="rel_std_slope", source="iid", graph=a["mc_graphs"][-1], weights=wname,
                observed=slope, bound=-0.5, passed=slope is not None and abs(slope + 0.5) <= 0.15)
    # variance bounds and local factorization on exact tables
    for name in ("C12", "P3"):
        g = build_graph(name)
        for scheme in SCHEMES:
            for row in variance_bound_rows(g, name, scheme, p if scheme == "independent" else 0.5):
                rep.add(source="exact", **row)
    rep.add(source="exact", **factorization_row(gen_cycle(12), "C12", 0, 6))
    # proxy variance is minimized by uniform weights
    rng = np.random.default_rng(derive_seed(cfg.seed, 12))
    for name in ("C12", a["mc_graphs"][-1]):
        g = build_graph(name)
        base = proxy_variance_ub(g, make_weights(g), p)
        worst = min(proxy_variance_ub(g, WeightVector(rng.exponential(size=g.n) + 1e-3), p)
                    for _ in range(int(a["proxy_draws"])))
        rep.add(bound_name="proxy_uniform_optimal", source="exact", graph=name, bound=base,
                observed=worst, passed=base <= worst * (1 + 1e-12))
    rep.add_summary(rows=len(rep.rows), failed=sum(1 for r in rep.rows if not r.get("passed", True)))
    return rep


RUNNERS = {
    "mixture": run_mixture_experiment,
    "estimator-sim": run_estimator_sim,
    "size-sweep": run_size_sweep,
}
