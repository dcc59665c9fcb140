"""Simulation response model: homophily drift, degree-scaled baseline, treatment and spillover."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import ndtri

from .clustering import ConvergenceError
from .graph import Graph, GraphError


@dataclass(frozen=True)
class HomophilyVector:
    h: np.ndarray
    lambda2: float
    residual: float


@dataclass(frozen=True)
class ResponseParams:
    a: float = 1.0
    b: float = 0.5
    sigma: float = 0.1
    delta: float = 0.5
    gamma: float = 0.5

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class PotentialOutcomes:
    y1: np.ndarray
    y0: np.ndarray

    @property
    def tau(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def _fix_sign(h: np.ndarray) -> np.ndarray:
    first = np.flatnonzero(np.abs(h) > 1e-9)
    if len(first) and h[first[0]] < 0:
        h = -h
    return h


def homophily_vector(g: Graph, tol: float = 1e-8, max_iter: int = 100_000) -> HomophilyVector:
    """Eigenvector of the second smallest eigenvalue of D^-1 L, scaled to max |h| = 1.

    Solved in the symmetric form D^-1/2 L D^-1/2 with the trivial eigenvector
    D^1/2 1 deflated; the start vector is fixed so repeated calls agree.
    """
    if not g.is_connected():
        raise GraphError("homophily vector needs a connected graph")
    n = g.n
    d = g.degrees.astype(np.float64)
    a = g.adjacency()
    s = 1.0 / np.sqrt(d)
    norm_adj = sp.diags(s) @ a @ sp.diags(s)
    top = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
    if n <= 200:
        # dense route for small graphs
        lap = np.eye(n) - norm_adj.toarray()
        lap += 4.0 * np.outer(top, top)
        vals, vecs = np.linalg.eigh(lap)
        lam, x = float(vals[0]), vecs[:, 0]
    else:
        # 2I - (N + c top top^T) has the wanted eigenvector on top of its spectrum
        def matvec(v):
            v = np.ravel(v)
            return v + norm_adj @ v - 4.0 * top * (top @ v)

        op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
        v0 = np.cos(np.arange(n) * 0.618) + 1.5
        try:
            vals, vecs = eigsh(op, k=1, which="LA", v0=v0, tol=tol * 1e-2, maxiter=max_iter)
        except ArpackNoConvergence as exc:
            raise ConvergenceError("eigen-solver did not converge") from exc
        lam, x = float(2.0 - vals[0]), vecs[:, 0]
    h = x * s
    h = _fix_sign(h / np.max(np.abs(h)))
    lh = d * h - a @ h
    residual = float(np.max(np.abs(lh / d - lam * h)))
    if residual > max(tol, 1e-8) * 10:
        raise ConvergenceError(f"eigenvector residual {residual:.2e} above tolerance")
    return HomophilyVector(h, lam, residual)


def ring_homophily(n: int) -> np.ndarray:
    """h_i = sin(2 pi i / n), divided by max_i |sin(2 pi i / n)|."""
    if n < 3:
        raise ValueError("ring needs n >= 3")
    h = np.sin(2 * np.pi * np.arange(n) / n)
    return h / np.max(np.abs(h))


def isolated_nodes(g: Graph) -> np.ndarray:
    return np.flatnonzero(g.degrees == 0)


def standard_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws by inverse CDF of uniforms."""
    u = rng.random(size)
    u[u == 0.0] = np.finfo(float).tiny
    return ndtri(u)


def baseline_outcomes(g: Graph, h, params: ResponseParams, seed: int) -> np.ndarray:
    """Y_i(0) = (a + b h_i + sigma eps_i) d_i / mean degree; isolated nodes get 0."""
    h = np.asarray(h, dtype=np.float64)
    d = g.degrees.astype(np.float64)
    live = d > 0
    if not live.any():
        raise GraphError("graph has no edges")
    d_bar = d[live].mean()
    eps = standard_normals(np.random.default_rng(seed), g.n)
    return (params.a + params.b * h + params.sigma * eps) * d / d_bar


def respond(g: Graph, y0, z, delta: float, gamma: float) -> np.ndarray:
    """Y_i(z) = Y_i(0) (1 + delta z_i + gamma * treated fraction of N(i)); isolated: no spillover."""
    y0 = np.asarray(y0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if len(y0) != g.n or len(z) != g.n:
        raise ValueError("length mismatch")
    d = g.degrees
    treated_nbrs = g.adjacency() @ z
    frac = np.divide(treated_nbrs, d, out=np.zeros(g.n), where=d > 0)
    return y0 * (1.0 + delta * z + gamma * frac)


def true_gate(y0, delta: float, gamma: float):
    """(tau, tau_i) with tau_i = (delta + gamma) Y_i(0)."""
    tau_i = (delta + gamma) * np.asarray(y0, dtype=np.float64)
    return float(tau_i.mean()), tau_i


def potential_outcomes(y0, delta: float, gamma: float) -> PotentialOutcomes:
    y0 = np.asarray(y0, dtype=np.float64)
    return PotentialOutcomes(y0 * (1.0 + delta + gamma), y0)


def write_h_csv(h, path) -> None:
    with open(path, "w") as fh:
        fh.write("node,h\n")
        for i, x in enumerate(np.asarray(h)):
            fh.write(f"{i},{float(x)!r}\n")
