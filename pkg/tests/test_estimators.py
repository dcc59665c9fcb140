import json

import numpy as np
import pytest

from oracles import adjacency_sets, clustering_law, design_law, exposure_tables, ht_moments
from rgcr.clustering import WeightVector, make_weights
from rgcr.estimation import PairProbTable, ProbTable, TableMeta, exact_tables
from rgcr.estimators import (PositivityError, gate, hajek_mean, ht_covariance, ht_mean,
                             ht_variance_gate, ht_variance_mu, proxy_variance, proxy_variance_ub)
from rgcr.graph import gen_cycle, gen_path, gen_random_connected


def table(p1, p0=None):
    p1 = np.asarray(p1, dtype=float)
    p0 = p1 if p0 is None else np.asarray(p0, dtype=float)
    return ProbTable(p1, p0, TableMeta(n=len(p1), graph_hash="x"))


def pair_table(p1, p0, j11, j10, j00):
    n = len(p1)
    rows = np.repeat(np.arange(n), n)
    cols = np.tile(np.arange(n), n)
    j11, j10, j00 = (np.asarray(x, dtype=float) for x in (j11, j10, j00))
    meta = TableMeta(n=n, graph_hash="x")
    return PairProbTable(rows, cols, j11.ravel(), j10.ravel(), j10.T.ravel(), j00.ravel(), meta,
                         table(p1, p0))


def test_ht_mean_examples():
    g = gen_path(2)
    assert ht_mean(g, [1, 1], [3.0, 5.0], table([1, 1]), 1) == 4.0
    assert ht_mean(g, [0, 0], [3.0, 5.0], table([1, 1]), 1) == 0.0
    assert ht_mean(g, [1, 1], [1.0, 1.0], table([2 ** -1, 2 ** -5]), 1) == pytest.approx(17.0)
    with pytest.raises(PositivityError):
        ht_mean(g, [1, 1], [1.0, 1.0], table([0.0, 1.0]), 1)


def test_hajek_examples():
    g = gen_path(3)
    y = np.array([2.0, 7.0, 4.0])
    # only node 0 exposed to treatment
    assert hajek_mean(g, [1, 1, 0], y, table([0.3, 0.2, 0.1]), 1) == (2.0, True)
    assert hajek_mean(g, [1, 1, 1], y, table([0.5, 0.5, 0.5]), 1)[0] == pytest.approx(y.mean())
    assert hajek_mean(g, [0, 0, 0], y, table([0.5, 0.5, 0.5]), 1) == (0.0, False)
    a = hajek_mean(g, [1, 1, 1], y, table([0.3, 0.2, 0.1]), 1)[0]
    b = hajek_mean(g, [1, 1, 1], y, table([0.15, 0.1, 0.05]), 1)[0]
    assert a == pytest.approx(b, rel=1e-14)


def test_gate_report():
    g = gen_path(3)
    r = gate(g, [1, 1, 1], [1.0, 1.0, 1.0], table([0.5, 0.5, 0.5]))
    assert r.mu1_ht == 2.0 and r.mu0_ht == 0.0 and r.tau_ht == 2.0
    assert not r.hajek_defined and r.exposed_treat == 3 and r.exposed_control == 0
    assert json.loads(r.to_json())["tau_ht"] == 2.0
    r = gate(g, [0, 0, 0], [1.0, 1.0, 1.0], table([0.5, 0.5, 0.5]))
    assert r.mu1_ht == r.mu0_ht - 2.0


def test_variance_examples():
    t = pair_table([1.0], [1.0], [[1.0]], [[0.0]], [[1.0]])
    assert ht_variance_mu([3.0], t, 1).value == 0.0
    t = pair_table([0.3], [0.7], [[0.3]], [[0.0]], [[0.7]])
    assert ht_variance_mu([1.0], t, 1).value == pytest.approx(1 / 0.3 - 1)
    t = pair_table([0.5, 0.5], [0.5, 0.5], [[0.5, 0.25], [0.25, 0.5]], np.zeros((2, 2)),
                   [[0.5, 0.25], [0.25, 0.5]])
    assert ht_variance_mu([1.0, 1.0], t, 1).value == pytest.approx(0.5)
    t = pair_table([0.5], [0.5], [[0.5]], [[0.0]], [[0.5]])
    assert ht_covariance([2.0], [3.0], t).value == pytest.approx(-6.0)
    z = np.zeros(2)
    t = pair_table([0.5, 0.5], [0.5, 0.5], [[0.5, 0.25], [0.25, 0.5]], np.zeros((2, 2)),
                   [[0.5, 0.25], [0.25, 0.5]])
    assert ht_variance_gate(z, z, t).value == 0.0


def test_diagonal_term_monotone():
    y = 2.0
    prev = -np.inf
    for p in (0.9, 0.5, 0.2, 0.05):
        term = (1 / p - 1) * y * y
        t = pair_table([p], [1 - p], [[p]], [[0.0]], [[1 - p]])
        assert ht_variance_mu([y], t, 1).value == pytest.approx(term)
        assert term >= prev
        prev = term


@pytest.mark.parametrize("algo", ["one_hop_max", "three_net"])
@pytest.mark.parametrize("scheme", ["independent", "complete"])
def test_ht_unbiased_and_variance_formulas(algo, scheme):
    rng = np.random.default_rng(0)
    for g in (gen_path(3), gen_cycle(6), gen_random_connected(7, 0.35, 17)):
        w = WeightVector(rng.random(g.n) + 0.5)
        adj = adjacency_sets(g.n, g.edges().tolist())
        zlaw = design_law(adj, clustering_law(adj, algo, w.w), scheme, 0.5)
        marg, _ = exposure_tables(adj, zlaw)
        y1 = rng.random(g.n) * 3
        y0 = rng.random(g.n) * 2
        mom = ht_moments(adj, zlaw, marg, y1, y0)
        assert mom["E_mu1"] == pytest.approx(y1.mean(), abs=1e-10)
        assert mom["E_mu0"] == pytest.approx(y0.mean(), abs=1e-10)
        t = exact_tables(g, w, algo, scheme, 0.5)
        assert ht_variance_mu(y1, t, 1).value == pytest.approx(mom["var_mu1"], abs=1e-10)
        assert ht_variance_mu(y0, t, 0).value == pytest.approx(mom["var_mu0"], abs=1e-10)
        assert ht_covariance(y1, y0, t).value == pytest.approx(mom["cov"], abs=1e-10)
        assert ht_variance_gate(y1, y0, t).value == pytest.approx(mom["var_tau"], abs=1e-10)


def test_truncated_policy_exact_on_c12():
    g = gen_cycle(12)
    w = make_weights(g)
    full = exact_tables(g, w, "one_hop_max", "independent", 0.5)
    cut = exact_tables(g, w, "one_hop_max", "independent", 0.5, cutoff=4)
    y = np.linspace(1, 2, 12)
    a = ht_variance_mu(y, full, 1)
    b = ht_variance_mu(y, cut, 1)
    assert b.policy == "exact-by-factorization" and a.policy == "exact"
    assert a.value == pytest.approx(b.value, abs=1e-14)


def test_proxy_examples():
    assert proxy_variance(table([2 ** -1, 2 ** -5])) == pytest.approx(34.0)
    mixed = (2 ** -1 + 2 ** -5) / 2
    assert proxy_variance(table([mixed, mixed])) == pytest.approx(7.53, abs=0.01)
    for n in (6, 12):
        g = gen_cycle(n)
        assert proxy_variance_ub(g, make_weights(g), 0.5) == pytest.approx(5 * n / 0.5)


def test_uniform_weights_minimise_proxy_bound():
    rng = np.random.default_rng(4)
    for g in (gen_cycle(12), gen_path(3)):
        base = proxy_variance_ub(g, make_weights(g), 0.5)
        for _ in range(100):
            w = WeightVector(rng.exponential(size=g.n) + 1e-3)
            assert base <= proxy_variance_ub(g, w, 0.5) + 1e-9
