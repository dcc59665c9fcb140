"""Cycle graphs cut into k equal arcs: exact exposure tables and HT variance.

The arc partition is drawn uniformly over its n/k rotations, which makes every
distribution-level table circulant: P(E_i^a, E_j^b) depends only on j - i mod n.
Variances then reduce to circular autocorrelations, computed by FFT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .estimators import GateVariance
from .graph import gen_cycle
from .randomization import arm_tables, check_scheme
from .response import ring_homophily


@dataclass(frozen=True)
class RingTables:
    """Circulant tables: p_treat, p_control per node; joint_ab[d] = P(E_0^a, E_d^b)."""
    n: int
    k: int
    scheme: str
    p: float
    p_treat: float
    p_control: float
    joint11: np.ndarray
    joint10: np.ndarray
    joint00: np.ndarray


def check_arcs(n: int, k: int) -> int:
    if k < 1 or n % k:
        raise ValueError(f"k={k} must divide n={n}")
    if n < 3:
        raise ValueError("ring needs n >= 3")
    return n // k


def arc_clustering(n: int, k: int, offset: int) -> Clustering:
    """k consecutive arcs of n/k nodes; arc 0 starts at node ``offset``."""
    length = check_arcs(n, k)
    return Clustering.from_raw(((np.arange(n) - offset) % n) // length)


def arc_rotations(n: int, k: int) -> list[Clustering]:
    """The n/k distinct rotations of the arc partition."""
    length = check_arcs(n, k)
    return [arc_clustering(n, k, s) for s in range(length)]


def _distinct(lab: np.ndarray):
    """Per-row distinct count and first-occurrence mask for a (..., 3) label array."""
    a, b, c = lab[..., 0], lab[..., 1], lab[..., 2]
    first_b = b != a
    first_c = (c != a) & (c != b)
    count = 1 + first_b.astype(np.int64) + first_c
    return count, np.stack([np.ones_like(first_b), first_b, first_c], axis=-1)


def ring_tables(n: int, k: int, scheme: str, p: float = 0.5) -> RingTables:
    """Exact circulant exposure tables of the rotated arc design."""
    check_scheme(scheme, p)
    length = check_arcs(n, k)
    offsets = np.arange(length)[:, None]
    d = np.arange(n)
    # labels of B_1(0) = {-1, 0, 1} and of B_1(d) for every d, per offset
    lab0 = ((np.array([-1, 0, 1])[None, :] - offsets) % n) // length
    labd = ((d[None, :, None] + np.array([-1, 0, 1])[None, None, :] - offsets[:, :, None]) % n) // length
    m0, _ = _distinct(lab0)
    md, firstd = _distinct(labd)
    hit = (labd[..., :, None] == lab0[:, None, None, :]).any(axis=-1)
    inter = (hit & firstd).sum(axis=-1)
    m0 = m0[:, None]
    same1, same0, opp = arm_tables(scheme, p, k, 6)
    union = m0 + md - inter
    j11 = same1[union].mean(axis=0)
    j00 = same0[union].mean(axis=0)
    j10 = np.where(inter > 0, 0.0, opp[np.broadcast_to(m0, md.shape), md]).mean(axis=0)
    return RingTables(n, k, scheme, p, float(same1[m0].mean()), float(same0[m0].mean()),
                      j11, j10, j00)


def _circular_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """r[d] = sum_i a_i b_{i+d} (indices mod n)."""
    return np.fft.irfft(np.conj(np.fft.rfft(a)) * np.fft.rfft(b), n=len(a))


def ring_variance(tables: RingTables, y1, y0) -> GateVariance:
    """Exact HT variances for potential outcomes ``y1``, ``y0`` under the rotated arc design."""
    y1 = np.asarray(y1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    n = tables.n
    u1 = y1 / tables.p_treat
    u0 = y0 / tables.p_control
    s1 = np.sum(tables.joint11 * _circular_correlation(u1, u1)) - y1.sum() ** 2
    s0 = np.sum(tables.joint00 * _circular_correlation(u0, u0)) - y0.sum() ** 2
    sc = np.sum(tables.joint10 * _circular_correlation(u1, u0)) - y1.sum() * y0.sum()
    v1, v0, cv = s1 / n ** 2, s0 / n ** 2, sc / n ** 2
    return GateVariance(float(v1), float(v0), float(cv), float(v1 + v0 - 2 * cv))


def ring_outcomes(n: int, a: float, b: float, tau: float):
    """Potential outcomes of a + b h_i + tau * (treated share of B_1(i)) at z = 1 and z = 0."""
    y0 = a + b * ring_homophily(n)
    return y0 + tau, y0


def ring_closed_form(k: int, a: float, b: float, tau: float, scheme: str) -> float:
    """Large-n limit of Var(tau_hat) for the rotated k-arc design with p = 1/2."""
    wave = b * b * (1 - np.cos(2 * np.pi / k)) / np.pi ** 2
    if scheme == "independent":
        return float((2 * a + tau) ** 2 / k + wave * k)
    if scheme == "complete":
        if k < 2:
            raise ValueError("complete design needs k >= 2")
        return float(wave * k * k / (k - 1))
    raise ValueError(f"unknown scheme {scheme!r}")


def ring_scaling_constant(a: float, b: float, tau: float, scheme: str) -> float:
    """lim k * Var(tau_hat) as k grows (with k = o(n))."""
    if scheme == "independent":
        return float((2 * a + tau) ** 2 + 2 * b * b)
    return float(2 * b * b)


def ring_graph(n: int):
    return gen_cycle(n)
