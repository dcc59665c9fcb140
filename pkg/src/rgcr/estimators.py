"""Horvitz-Thompson and Hajek estimators, their exact variances, and proxy variances."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .clustering import WeightVector
from .estimation import PairProbTable, ProbTable, two_hop_weight_ratio
from .graph import Graph
from .randomization import exposure_indicators


class PositivityError(ValueError):
    pass


def _weights(exposed: np.ndarray, y: np.ndarray, prob: np.ndarray):
    if np.any(exposed & (prob <= 0)):
        bad = np.flatnonzero(exposed & (prob <= 0))
        raise PositivityError(f"exposed nodes with zero exposure probability: {bad[:10].tolist()}")
    inv = np.zeros_like(prob, dtype=np.float64)
    inv[exposed] = 1.0 / prob[exposed]
    return inv


def ht_mean(g: Graph, z, y, table: ProbTable, arm: int) -> float:
    """(1/n) sum_i 1[E_i^arm] y_i / P_i."""
    y = np.asarray(y, dtype=np.float64)
    exposed = exposure_indicators(g, z, arm)
    inv = _weights(exposed, y, table.arm(arm))
    return float(np.sum(inv * y) / g.n)


def hajek_mean(g: Graph, z, y, table: ProbTable, arm: int) -> tuple[float, bool]:
    """Self-normalized HT mean; returns (value, defined). No exposed node gives (0.0, False)."""
    y = np.asarray(y, dtype=np.float64)
    exposed = exposure_indicators(g, z, arm)
    if not exposed.any():
        return 0.0, False
    inv = _weights(exposed, y, table.arm(arm))
    return float(np.sum(inv * y) / np.sum(inv)), True


@dataclass
class EstimateReport:
    mu1_ht: float
    mu0_ht: float
    tau_ht: float
    mu1_hajek: float
    mu0_hajek: float
    tau_hajek: float
    exposed_treat: int
    exposed_control: int
    hajek_defined: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def gate(g: Graph, z, y, table: ProbTable) -> EstimateReport:
    """HT and Hajek estimates of both arm means and their difference."""
    m1 = ht_mean(g, z, y, table, 1)
    m0 = ht_mean(g, z, y, table, 0)
    h1, ok1 = hajek_mean(g, z, y, table, 1)
    h0, ok0 = hajek_mean(g, z, y, table, 0)
    return EstimateReport(
        mu1_ht=m1, mu0_ht=m0, tau_ht=m1 - m0,
        mu1_hajek=h1, mu0_hajek=h0, tau_hajek=h1 - h0,
        exposed_treat=int(exposure_indicators(g, z, 1).sum()),
        exposed_control=int(exposure_indicators(g, z, 0).sum()),
        hajek_defined=ok1 and ok0,
    )


# -- exact variances ---------------------------------------------------------------


@dataclass(frozen=True)
class VarianceResult:
    value: float
    policy: str  # "exact", "exact-by-factorization" or "upper-bound"

    def __float__(self):
        return self.value


def _policy(pairs: PairProbTable) -> str:
    m = pairs.meta
    if m.cutoff < 0:
        return "exact"
    if m.algo == "one_hop_max" and m.scheme == "independent" and m.cutoff >= 4:
        return "exact-by-factorization"
    return "upper-bound"


def _check_positive(prob, what):
    if np.any(prob <= 0):
        raise PositivityError(f"{what} has zero entries; variance is undefined")


def _quad(pairs: PairProbTable, a: int, b: int, ya: np.ndarray, yb: np.ndarray,
          pa: np.ndarray, pb: np.ndarray) -> float:
    """sum over pattern pairs i != j of (P_ab,ij / (P_a,i P_b,j) - 1) y_a,i y_b,j."""
    off = pairs.rows != pairs.cols
    r, c = pairs.rows[off], pairs.cols[off]
    joint = pairs.joint(a, b)[off]
    return float(np.sum((joint / (pa[r] * pb[c]) - 1.0) * ya[r] * yb[c]))


def ht_variance_mu(y, pairs: PairProbTable, arm: int) -> VarianceResult:
    """Var of the HT mean for arm ``arm`` with potential outcomes ``y``.

    (1/n^2)[sum_i (1/P_i - 1) y_i^2 + sum_{i != j} (P_ij / (P_i P_j) - 1) y_i y_j];
    pairs outside the table pattern contribute 0.
    """
    y = np.asarray(y, dtype=np.float64)
    prob = pairs.marginals.arm(arm)
    _check_positive(prob, "marginal table")
    n = len(y)
    diag = np.sum((1.0 / prob - 1.0) * y * y)
    cross = _quad(pairs, arm, arm, y, y, prob, prob)
    return VarianceResult((diag + cross) / n ** 2, _policy(pairs))


def ht_covariance(y1, y0, pairs: PairProbTable) -> VarianceResult:
    """Cov of the two HT arm means.

    (1/n^2)[sum_{i != j} (P10_ij / (P1_i P0_j) - 1) y1_i y0_j - sum_i y1_i y0_i].
    """
    y1 = np.asarray(y1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    p1, p0 = pairs.marginals.p_treat, pairs.marginals.p_control
    _check_positive(p1, "treatment marginals")
    _check_positive(p0, "control marginals")
    n = len(y1)
    cross = _quad(pairs, 1, 0, y1, y0, p1, p0)
    return VarianceResult((cross - np.sum(y1 * y0)) / n ** 2, _policy(pairs))


def ht_variance_gate(y1, y0, pairs: PairProbTable) -> VarianceResult:
    """Var(mu1) + Var(mu0) - 2 Cov(mu1, mu0)."""
    v1 = ht_variance_mu(y1, pairs, 1)
    v0 = ht_variance_mu(y0, pairs, 0)
    cv = ht_covariance(y1, y0, pairs)
    return VarianceResult(v1.value + v0.value - 2 * cv.value, v1.policy)


@dataclass(frozen=True)
class GateVariance:
    var_mu1: float
    var_mu0: float
    cov: float
    var_tau: float


def ht_variances_dense(y1, y0, p1, p0, j11, j10, j00, scale: float = 1.0) -> GateVariance:
    """Exact HT variances from dense all-pairs joint tables ``scale * j_ab`` (j01 = j10.T).

    n^2 Var(mu1) = sum_ij P11_ij u_i u_j - (sum y1)^2 with u = y1 / p1 (the
    diagonal of P11 holds the marginals); the covariance uses P10 the same way.
    """
    y1 = np.asarray(y1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    _check_positive(p1, "treatment marginals")
    _check_positive(p0, "control marginals")
    n = len(y1)
    u1 = y1 / p1
    u0 = y0 / p0
    s1, s0 = y1.sum(), y0.sum()
    v1 = (scale * (u1 @ (j11 @ u1)) - s1 * s1) / n ** 2
    v0 = (scale * (u0 @ (j00 @ u0)) - s0 * s0) / n ** 2
    cv = (scale * (u1 @ (j10 @ u0)) - s1 * s0) / n ** 2
    return GateVariance(float(v1), float(v0), float(cv), float(v1 + v0 - 2 * cv))


# -- proxy variance ----------------------------------------------------------------


def proxy_variance(table: ProbTable, arm: int = 1) -> float:
    """sum_i 1 / P_i."""
    prob = table.arm(arm)
    _check_positive(prob, "table")
    return float(np.sum(1.0 / prob))


def proxy_variance_ub(g: Graph, w: WeightVector, p: float) -> float:
    """(1/p) sum_i (sum_{j in B_2(i)} w_j) / w_i."""
    return float(np.sum(two_hop_weight_ratio(g, w)) / p)


# -- bounds used in audits -----------------------------------------------------------


def variance_bound_general(g: Graph, prob: np.ndarray, y_max: float) -> float:
    """(y_max^2 / n^2) sum_i |B_4(i)| / P_i."""
    b4 = g.ball_sizes(4)
    return float(y_max ** 2 / g.n ** 2 * np.sum(b4 / prob))


def report_json(obj, extra: Optional[dict] = None) -> str:
    d = asdict(obj)
    if extra:
        d.update(extra)
    return json.dumps(d, sort_keys=True, indent=2)
