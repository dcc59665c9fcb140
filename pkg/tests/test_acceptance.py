"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the "acceptance criteria" section of the terminal summary) or with
``python tests/test_acceptance.py``.
"""
import json
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

from oracles import (adjacency_sets, ball, canonical, clustering_law, design_law, exposed,
                     exposure_tables, ht_moments)
from rgcr.cli import main as cli_main
from rgcr.clustering import (Clustering, WeightVector, beta_draws, child_rng, descending_order,
                             make_weights, one_hop_max_centers, three_net_seeds)
from rgcr.estimation import ProbTable, TableMeta, exact_tables, mixture_tables
from rgcr.estimators import (hajek_mean, ht_covariance, ht_mean, ht_variance_gate, ht_variance_mu,
                             proxy_variance_ub)
from rgcr.experiments import (ExperimentConfig, build_graph, run_bound_audit,
                              run_mixture_experiment, run_ring_check)
from rgcr.graph import gen_cycle, gen_path, gen_random_connected, gen_small_world
from rgcr.randomization import (AdjacentClusters, dense_joint_given_clustering,
                                marginal_given_clustering)
from rgcr.ring import arc_rotations

DESIGNS = [("independent", 0.5), ("independent", 0.3), ("complete", 0.5)]
ALGOS = ("three_net", "one_hop_max")


def close(a, b, tol=1e-10):
    return abs(a - b) <= tol * max(1.0, abs(b))


@pytest.fixture(scope="module")
def audit():
    t0 = time.perf_counter()
    rep = run_bound_audit(ExperimentConfig())
    return rep, time.perf_counter() - t0


# -- 1: oracle equivalence ---------------------------------------------------------


def test_criterion_1_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    graphs = [("P3", gen_path(3), None), ("C6", gen_cycle(6), None),
              ("R7", gen_random_connected(7, 0.35, 17), None),
              ("R7w", gen_random_connected(7, 0.35, 17), [0.5, 2.0, 1.0, 3.0, 0.7, 1.5, 1.0])]
    worst = 0.0
    checks = 0
    rng = np.random.default_rng(1)
    for name, g, wts in graphs:
        adj = adjacency_sets(g.n, g.edges().tolist())
        w = make_weights(g) if wts is None else WeightVector(np.asarray(wts), "custom")
        for algo in ALGOS:
            law = clustering_law(adj, algo, wts)
            for scheme, p in DESIGNS:
                # conditional tables for every clustering in the support
                for c in law:
                    ac = AdjacentClusters(g, Clustering.from_raw(np.asarray(c)))
                    om, oj = exposure_tables(adj, design_law(adj, {c: 1.0}, scheme, p))
                    p11, p10, p00 = dense_joint_given_clustering(ac, scheme, p)
                    for arm in (1, 0):
                        worst = max(worst, np.max(np.abs(
                            marginal_given_clustering(ac, scheme, p, arm) - om[arm])))
                    for got, key in ((p11, (1, 1)), (p10, (1, 0)), (p00, (0, 0))):
                        worst = max(worst, np.max(np.abs(got - oj[key])))
                    checks += 1
                # distribution level
                zlaw = design_law(adj, law, scheme, p)
                om, oj = exposure_tables(adj, zlaw)
                t = exact_tables(g, w, algo, scheme, p)
                worst = max(worst, np.max(np.abs(t.marginals.p_treat - om[1])),
                            np.max(np.abs(t.marginals.p_control - om[0])))
                for a in (0, 1):
                    for b in (0, 1):
                        worst = max(worst, np.nanmax(np.abs(t.dense(a, b) - oj[(a, b)])))
                if not t.marginals.positive:
                    continue
                y1 = rng.uniform(1, 3, g.n)
                y0 = rng.uniform(0, 2, g.n)
                mom = ht_moments(adj, zlaw, om, y1, y0)
                e1 = sum(pr * ht_mean(g, z, y1, t.marginals, 1) for z, pr in zlaw.items())
                e0 = sum(pr * ht_mean(g, z, y0, t.marginals, 0) for z, pr in zlaw.items())
                pairs = [(e1, y1.mean()), (e0, y0.mean()),
                         (ht_variance_mu(y1, t, 1).value, mom["var_mu1"]),
                         (ht_variance_mu(y0, t, 0).value, mom["var_mu0"]),
                         (ht_covariance(y1, y0, t).value, mom["cov"]),
                         (ht_variance_gate(y1, y0, t).value, mom["var_tau"])]
                for got, want in pairs:
                    worst = max(worst, abs(got - want) / max(1.0, abs(want)))
                checks += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 60
    criterion(1, ok, f"max error {worst:.1e} over {checks} table sets, {elapsed:.1f}s")
    assert ok


# -- 2: lower bounds -----------------------------------------------------------------


def _oracle_bounds(adj, prob, p, w, lam, improved):
    """Per-node exposure-probability lower bounds computed from the oracle balls."""
    n = len(adj)
    b2 = [ball(adj, i, 2) for i in range(n)]
    out = {"weighted": [p * w[i] / sum(w[j] for j in b2[i]) for i in range(n)]}
    if np.allclose(w, w[0]):
        out["basic"] = [p / len(b2[i]) for i in range(n)]
        if improved is not None:
            q = improved
            out["improved"] = [p / q / len(b2[i]) if len(b2[i]) - len(adj[i]) >= 1 / q else None
                               for i in range(n)]
    if lam is not None:
        out["spectral"] = [p / lam] * n
    bad = 0
    count = 0
    for vals in out.values():
        for i, v in enumerate(vals):
            if v is None:
                continue
            count += 1
            bad += prob[i] < v * (1 - 1e-12)
    return bad, count


def test_criterion_2_lower_bounds(criterion, audit):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = checked = 0
    for name in ("P3", "C6", "S5", "R7", "R8"):
        g = build_graph(name)
        adj = adjacency_sets(g.n, g.edges().tolist())
        # Perron vector of the 2-ball indicator matrix, by dense eigensolve
        m = np.array([[1.0 if j in ball(adj, i, 2) else 0.0 for j in range(g.n)] for i in range(g.n)])
        vals, vecs = np.linalg.eigh(m)
        perron = np.abs(vecs[:, -1])
        weight_sets = [(np.ones(g.n), None), (perron, vals[-1])]
        weight_sets += [(rng.exponential(size=g.n) + 0.05, None) for _ in range(2)]
        for wv, lam in weight_sets:
            for algo in ALGOS:
                law = clustering_law(adj, algo, list(wv))
                for scheme, p in DESIGNS:
                    om, _ = exposure_tables(adj, design_law(adj, law, scheme, p))
                    improved = algo == "one_hop_max" and scheme == "independent"
                    for arm, pa in ((1, p), (0, 1 - p)):
                        b, c = _oracle_bounds(adj, om[arm], pa, wv, lam,
                                              (1 - pa) if improved else None)
                        bad += b
                        checked += c
    rep, audit_time = audit
    rows = [r for r in rep.rows if r["bound_name"].startswith("prob_LB")]
    strat = [r for r in rows if r["source"] == "stratified"]
    failed = [r for r in rows if not r["passed"]]
    graphs = sorted({r["graph"] for r in strat})
    elapsed = time.perf_counter() - t0 + audit_time
    ok = bad == 0 and not failed and graphs == ["C12", "SW16"] and elapsed < 300
    criterion(2, ok, f"oracle: {bad} violations in {checked} node checks; audit: {len(failed)} "
                     f"failed of {len(rows)} rows (stratified on {','.join(graphs)}); {elapsed:.0f}s")
    assert ok


# -- 3: Monte Carlo error bound ----------------------------------------------------


def test_criterion_3_mc_error(criterion, audit):
    rep, audit_time = audit
    mc = [r for r in rep.rows if r["bound_name"] in ("prob_MC_var", "prob_MC_var_weighted")]
    slopes = [r for r in rep.rows if r["bound_name"] == "rel_std_slope"]
    ks = sorted({r["K"] for r in mc})
    ok = (mc and all(r["passed"] for r in mc) and ks == [8, 32]
          and all(r["reps"] == 30 for r in mc) and slopes
          and all(r["observed"] is not None and abs(r["observed"] + 0.5) <= 0.15 for r in slopes)
          and all(r["graph"] == "SW16" for r in mc))
    detail = ", ".join(f"{r['weights']} slope {r['observed']:+.3f}" for r in slopes)
    criterion(3, bool(ok), f"{sum(r['violations'] for r in mc)} node violations over K={ks}; {detail}")
    assert ok


# -- 4: ring closed forms ----------------------------------------------------------


def test_criterion_4_ring(criterion):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for scheme in ("independent", "complete"):
        for k in (4, 8, 20):
            row = run_ring_check(400, k, 1.0, 1.0, 1.0, scheme)
            good = abs(row["rel_gap"]) <= 0.03
            ok &= good
            parts.append(f"{scheme[:4]} k={k} {row['rel_gap']:+.1%}{'' if good else '!'}")
        row = run_ring_check(5000, 50, 1.0, 1.0, 1.0, scheme)
        gap = row["k_var_tau"] / row["scaling_constant"] - 1
        good = abs(gap) <= 0.05
        ok &= good
        parts.append(f"{scheme[:4]} k*Var {row['k_var_tau']:.3f} vs {row['scaling_constant']:g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    criterion(4, ok, "; ".join(parts))
    assert ok


# -- 5: mixture variance reduction -------------------------------------------------


def test_criterion_5_mixture(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "graph": {"kind": "small_world", "side": 32, "seed": 1}, "scheme": "independent",
        "mixture_sizes": [1, 10, 100, 1000], "replicates": 20, "seed": 5})
    rep = run_mixture_experiment(cfg)
    ok = True
    parts = []
    for algo in ("three_net", "one_hop_max"):
        med = [s["var_tau_median"] for s in sorted((s for s in rep.summary if s["algo"] == algo),
                                                   key=lambda s: s["K"])]
        mono = all(b <= a for a, b in zip(med, med[1:]))
        drop = med[0] / med[-1]
        ok &= mono and drop >= 10
        parts.append(f"{algo} medians " + " > ".join(f"{m:.3g}" for m in med) + f" (drop {drop:.3g}x)")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1800
    criterion(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s")
    assert ok


# -- 6: Hajek properties ------------------------------------------------------------


def test_criterion_6_hajek(criterion):
    t0 = time.perf_counter()
    # 12-cycle cut into 4 arcs of 3, uniform over the 3 rotations, matched-pair arms:
    # every assignment exposes the middle node of each arc, so both arms are always defined
    n, tau = 12, 0.75
    g = gen_cycle(n)
    adj = adjacency_sets(n, g.edges().tolist())
    rotations = arc_rotations(n, 4)
    law = {canonical(c.labels.tolist()): 1.0 / len(rotations) for c in rotations}
    zlaw = design_law(adj, law, "complete")
    om, _ = exposure_tables(adj, zlaw)
    table = mixture_tables(g, rotations, "complete", 0.5)
    prob_err = max(np.max(np.abs(table.p_treat - om[1])), np.max(np.abs(table.p_control - om[0])))
    y0 = np.random.default_rng(6).uniform(0.5, 4.0, n)
    y1 = y0 + tau
    mean = 0.0
    degenerate = 0
    for z, pr in zlaw.items():
        z = np.asarray(z)
        y = np.where(z == 1, y1, y0)
        h1, ok1 = hajek_mean(g, z, y, table, 1)
        h0, ok0 = hajek_mean(g, z, y, table, 0)
        degenerate += not (ok1 and ok0)
        assert ok1 == any(exposed(adj, z, i, 1) for i in range(n))
        mean += pr * (h1 - h0)
    unbiased = degenerate == 0 and abs(mean - tau) <= 1e-10 and prob_err <= 1e-12

    rng = np.random.default_rng(66)
    scale_err = 0.0
    outside = 0
    defined = 0
    for draw in range(1000):
        gg = gen_random_connected(20, 0.12, draw)
        arm = int(rng.integers(2))
        z = np.where(rng.random(20) < 0.92, arm, 1 - arm)
        y = rng.normal(0, 3, 20)
        probs = rng.uniform(0.01, 1.0, 20)
        t = ProbTable(probs, probs, TableMeta(n=20, graph_hash="x"))
        c = rng.uniform(0.05, 1.0)
        ts = ProbTable(probs * c, probs * c, TableMeta(n=20, graph_hash="x"))
        h, ok = hajek_mean(gg, z, y, t, arm)
        hs, _ = hajek_mean(gg, z, y, ts, arm)
        scale_err = max(scale_err, abs(h - hs) / max(1.0, abs(h)))
        if ok:
            defined += 1
            ex = np.array([exposed([set(gg.neighbors(i).tolist()) for i in range(20)], z, i, arm)
                           for i in range(20)])
            outside += not (y[ex].min() - 1e-12 <= h <= y[ex].max() + 1e-12)
    elapsed = time.perf_counter() - t0
    ok = unbiased and scale_err <= 1e-12 and outside == 0 and defined >= 100 and elapsed < 60
    criterion(6, ok, f"E[tau_hajek] - tau = {mean - tau:.1e} over {len(zlaw)} assignments; "
                     f"scale error {scale_err:.1e}, {outside} outside the hull in {defined} "
                     f"defined draws; {elapsed:.1f}s")
    assert ok


# -- 7: structural clustering invariants ------------------------------------------


def test_criterion_7_structure(criterion):
    t0 = time.perf_counter()
    g = gen_small_world(32, seed=1)
    n = g.n
    a = g.adjacency().astype(np.int64)
    b1 = sp.csr_array(a + sp.identity(n, dtype=np.int64, format="csr"))
    b2 = sp.csr_array((b1 @ b1) > 0).astype(np.int64)
    w = make_weights(g)
    samples = 10_000
    viol = {"three_net": 0, "one_hop_max": 0}
    nbr_max_idx = g.indptr[:-1]
    for k in range(samples):
        x = beta_draws(w.w, child_rng(7, k))
        # 3-net: seeds pairwise more than 2 hops apart, every node within 2 hops of a seed,
        # and a node with a seed at distance <= 1 is not sent further away
        seed_of = three_net_seeds(g, descending_order(x))
        seeds = np.unique(seed_of)
        s = np.zeros(n, dtype=np.int64)
        s[seeds] = 1
        cover2 = b2 @ s
        cover1 = b1 @ s
        near = np.asarray(b1[np.arange(n), seed_of]).ravel() > 0
        within2 = np.asarray(b2[np.arange(n), seed_of]).ravel() > 0
        bad = (np.any(seed_of[seeds] != seeds) or np.any(cover2[seeds] != 1)
               or np.any(cover2 < 1) or not np.all(within2) or np.any((cover1 > 0) & ~near))
        viol["three_net"] += bool(bad)
        # 1-hop-max: the center is the score maximum of the node's closed 1-ball
        centers = one_hop_max_centers(g, x)
        nbr_max = np.maximum.reduceat(x[g.indices], nbr_max_idx)
        ball_max = np.maximum(x, nbr_max)
        in_ball = np.asarray(b1[np.arange(n), centers]).ravel() > 0
        bad = not np.all(in_ball) or np.any(x[centers] != ball_max)
        viol["one_hop_max"] += bool(bad)
    elapsed = time.perf_counter() - t0
    ok = viol == {"three_net": 0, "one_hop_max": 0} and elapsed < 300
    criterion(7, ok, f"{samples} samples each on n={n}: violations {viol}; {elapsed:.0f}s")
    assert ok


# -- 8: variance bound and proxy optimality -----------------------------------------


def test_criterion_8_bound_audit(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    bad = checked = 0
    for name in ("C12", "P3"):
        g = build_graph(name)
        adj = adjacency_sets(g.n, g.edges().tolist())
        b4 = np.array([len(ball(adj, i, 4)) for i in range(g.n)])
        for scheme, p in (("independent", 0.5), ("independent", 0.3), ("complete", 0.5)):
            t = exact_tables(g, make_weights(g), "one_hop_max", scheme, p)
            for y in (np.ones(g.n), rng.random(g.n)):
                var = ht_variance_mu(y, t, 1).value
                if name == "P3":
                    law = clustering_law(adj, "one_hop_max")
                    zlaw = design_law(adj, law, scheme, p)
                    om, _ = exposure_tables(adj, zlaw)
                    assert close(ht_moments(adj, zlaw, om, y, y)["var_mu1"], var)
                bound = np.sum(b4 / t.marginals.p_treat) / g.n ** 2
                checked += 1
                bad += var > bound * (1 + 1e-12)
    proxy_bad = 0
    for name in ("C12", "SW16"):
        g = build_graph(name)
        base = proxy_variance_ub(g, make_weights(g), 0.5)
        for _ in range(100):
            wv = WeightVector(rng.exponential(size=g.n) + 1e-3, "custom")
            proxy_bad += proxy_variance_ub(g, wv, 0.5) < base * (1 - 1e-12)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and proxy_bad == 0 and elapsed < 120
    criterion(8, ok, f"variance bound: {bad} of {checked} violated; proxy: {proxy_bad} of 200 "
                     f"random weights beat uniform; {elapsed:.1f}s")
    assert ok


# -- 9: reproducibility --------------------------------------------------------------


CLI_CONFIG = {
    "graph": {"kind": "small_world", "side": 6, "seed": 4},
    "replicates": 2, "mixture_sizes": [1, 5], "runs_per_node": 3, "gcr_clusterings": 2,
    "gcr_runs": 30, "k_probs": 2, "sides": [5, 6],
    "ring": {"n": 120, "k": [4, 8], "scaling_n": 400, "scaling_k": 10},
    "audit": {"exact_graphs": ["P3", "C6"], "mc_graphs": ["C12"], "reps": 2,
              "random_weight_draws": 1, "mc_K": [4, 8], "mc_reps": 5, "proxy_draws": 5},
}

CLI_COMMANDS = [
    ["gen"], ["gen", "--format", "csv"],
    ["cluster", "--algo", "three_net", "--count", "4"],
    ["cluster", "--algo", "one_hop_max", "--count", "4", "--format", "csv"],
    ["probs", "--method", "stratified"], ["probs", "--method", "iid"],
    ["probs", "--method", "stratified", "--pairs"],
    ["probs", "--method", "exact", "--graph", "C6", "--pairs"],
    ["experiment", "mixture"], ["experiment", "mixture", "--format", "csv"],
    ["experiment", "estimator-sim"], ["experiment", "size-sweep", "--format", "csv"],
    ["ring-check"], ["ring-check", "--format", "csv"], ["audit"],
]


def test_criterion_9_reproducibility(criterion, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(CLI_CONFIG))
    differing = []
    for k, cmd in enumerate(CLI_COMMANDS):
        outs = []
        for rerun in range(2):
            out = tmp_path / f"{k}_{rerun}"
            code = cli_main(cmd + ["--config", str(cfg), "--seed", "2024", "--out", str(out)])
            outs.append(out.read_bytes() if code == 0 and out.exists() else None)
        if outs[0] is None or outs[0] != outs[1]:
            differing.append(" ".join(cmd))
    ok = not differing
    criterion(9, ok, f"{len(CLI_COMMANDS) - len(differing)} of {len(CLI_COMMANDS)} commands "
                     f"byte-identical" + (f"; differing: {differing}" if differing else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
