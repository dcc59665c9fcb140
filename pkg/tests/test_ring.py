import numpy as np
import pytest

from oracles import cluster_assignments
from rgcr.estimation import mixture_tables
from rgcr.estimators import ht_variance_gate
from rgcr.ring import (arc_clustering, arc_rotations, ring_closed_form, ring_graph, ring_outcomes,
                       ring_scaling_constant, ring_tables, ring_variance)


def enumerate_ring(n, k, scheme, y1, y0):
    """Exact HT moments by listing every rotation and every cluster-arm vector."""
    length = n // k
    outcomes = []
    for offset in range(length):
        labels = ((np.arange(n) - offset) % n) // length
        for arms, pr in cluster_assignments(k, scheme):
            z = np.asarray(arms)[labels]
            e1 = (z == 1) & (np.roll(z, 1) == 1) & (np.roll(z, -1) == 1)
            e0 = (z == 0) & (np.roll(z, 1) == 0) & (np.roll(z, -1) == 0)
            outcomes.append((pr / length, e1, e0))
    pr = np.array([o[0] for o in outcomes])
    e1 = np.array([o[1] for o in outcomes], dtype=float)
    e0 = np.array([o[2] for o in outcomes], dtype=float)
    p1, p0 = pr @ e1, pr @ e0
    m1 = e1 @ (y1 / p1) / n
    m0 = e0 @ (y0 / p0) / n
    tau = m1 - m0
    mean = pr @ tau
    return p1, p0, float(pr @ (tau - mean) ** 2), float(mean)


@pytest.mark.parametrize("k,scheme", [(4, "independent"), (8, "independent"),
                                      (4, "complete"), (8, "complete")])
def test_fft_route_matches_enumeration(k, scheme):
    n = 400
    y1, y0 = ring_outcomes(n, 1.0, 1.0, 1.0)
    p1, p0, var, mean = enumerate_ring(n, k, scheme, y1, y0)
    tables = ring_tables(n, k, scheme)
    assert np.allclose(p1, tables.p_treat, rtol=1e-12)
    assert np.allclose(p0, tables.p_control, rtol=1e-12)
    assert mean == pytest.approx(np.mean(y1 - y0), abs=1e-10)
    assert ring_variance(tables, y1, y0).var_tau == pytest.approx(var, rel=1e-10)


@pytest.mark.parametrize("scheme", ["independent", "complete"])
def test_fft_route_matches_dense_tables(scheme):
    n, k = 60, 6
    g = ring_graph(n)
    y1, y0 = ring_outcomes(n, 1.0, 0.5, 2.0)
    pairs = mixture_tables(g, arc_rotations(n, k), scheme, 0.5, cutoff=None)
    dense = ht_variance_gate(y1, y0, pairs)
    fft = ring_variance(ring_tables(n, k, scheme), y1, y0)
    assert fft.var_tau == pytest.approx(dense.value, rel=1e-10)


def test_arc_clustering():
    c = arc_clustering(12, 4, 1)
    assert c.cluster_count == 4
    assert list(c.members(c.labels[1])) == [1, 2, 3]
    assert len(arc_rotations(12, 4)) == 3
    with pytest.raises(ValueError):
        arc_clustering(10, 4, 0)


def test_closed_form_values():
    # (2a + tau)^2 / k + b^2 k (1 - cos(2 pi / k)) / pi^2 at a = b = tau = 1, k = 4
    assert ring_closed_form(4, 1, 1, 1, "independent") == pytest.approx(9 / 4 + 4 / np.pi ** 2)
    assert ring_closed_form(4, 1, 1, 1, "complete") == pytest.approx(16 / (3 * np.pi ** 2))
    assert ring_scaling_constant(1, 1, 1, "independent") == 11
    assert ring_scaling_constant(1, 1, 1, "complete") == 2
    with pytest.raises(ValueError):
        ring_closed_form(1, 1, 1, 1, "complete")


@pytest.mark.parametrize("scheme", ["independent", "complete"])
def test_gap_to_limit_shrinks_with_n(scheme):
    k = 20
    limit = ring_closed_form(k, 1, 1, 1, scheme)
    gaps = []
    for n in (400, 1600, 6400):
        y1, y0 = ring_outcomes(n, 1.0, 1.0, 1.0)
        var = ring_variance(ring_tables(n, k, scheme), y1, y0).var_tau
        gaps.append(abs(var - limit) / limit)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.03


@pytest.mark.parametrize("scheme", ["independent", "complete"])
def test_treatment_probability_approaches_half(scheme):
    probs = [ring_tables(n, 4, scheme).p_treat for n in (100, 400, 1600)]
    assert probs[0] < probs[1] < probs[2] < 0.5
    assert 0.5 - probs[2] < 0.01
