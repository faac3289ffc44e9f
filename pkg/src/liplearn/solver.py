"""Graph infinity-Laplacian and the monotone fixed-point solver.

The operator at a vertex is the largest plus the smallest of the weighted
differences w(x,y)*(u(y)-u(x)), each compared against the zero candidate
contributed by far-away vertices with w = 0. The Dirichlet problem (u
pinned to labels on O, operator zero elsewhere) is solved by damped
Jacobi sweeps

    u <- u + (1/(2M)) * Lu,      M = max edge weight,

which is monotone: the update is a convex combination of the current
values, so iterates never leave [min g, max g] once inside, and the
discrete comparison principle holds along the iteration. Sweeps stop when
max |Lu| / M < tol over the free vertices, or report an explicit
non-convergence after max_iter sweeps.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit
from scipy.sparse import csgraph

from .graph import WeightedGraph


class GraphConnectivityError(ValueError):
    """Some unlabeled vertex has no path to the labeled set."""


class SolverError(RuntimeError):
    pass


class Init(Enum):
    LABEL_MEAN = "label_mean"
    ZERO = "zero"
    NEAREST_LABEL = "nearest_label"


@dataclass(frozen=True)
class LabelProblem:
    """A weighted graph with labels g on the vertex subset O."""

    graph: WeightedGraph
    labeled: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labeled, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        n = self.graph.n_vertices
        if lab.size == 0:
            raise ValueError("labeled set must be nonempty")
        if lab.size != val.size:
            raise ValueError("labeled indices and values must have equal length")
        if lab.min() < 0 or lab.max() >= n:
            raise IndexError("labeled index out of range")
        if len(np.unique(lab)) != lab.size:
            raise ValueError("labeled indices must be distinct")
        if not np.all(np.isfinite(val)):
            raise ValueError("labels must be finite")
        lab.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "labeled", lab)
        object.__setattr__(self, "values", val)

    @property
    def n_unlabeled(self) -> int:
        return self.graph.n_vertices - self.labeled.size


@dataclass(frozen=True)
class Solution:
    u: np.ndarray
    iterations: int
    final_residual: float
    elapsed: float
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def inf_laplacian(graph: WeightedGraph, u: np.ndarray, x: int, zero_candidate: bool = True) -> float:
    """Lu(x) = max_y w(x,y)(u(y)-u(x)) + min_y w(x,y)(u(y)-u(x)).

    With zero_candidate the extrema run over all vertices (w = 0 off the
    neighborhood contributes 0, so isolated vertices return 0); without
    it they run over stored neighbors only (error if none).
    """
    w = graph.weights
    if not 0 <= x < w.shape[0]:
        raise IndexError(f"vertex {x} out of range")
    sl = slice(w.indptr[x], w.indptr[x + 1])
    vals = w.data[sl] * (u[w.indices[sl]] - u[x])
    if vals.size == 0:
        if zero_candidate:
            return 0.0
        raise ValueError(f"vertex {x} is isolated; operator undefined without the zero candidate")
    if zero_candidate:
        return float(max(vals.max(), 0.0) + min(vals.min(), 0.0))
    return float(vals.max() + vals.min())


def inf_laplacian_all(graph: WeightedGraph, u: np.ndarray) -> np.ndarray:
    """Reference numpy evaluation of Lu at every vertex (plain row loop;
    used by verifiers and as an independent check of the fast kernel)."""
    w = graph.weights
    n = w.shape[0]
    out = np.zeros(n)
    for i in range(n):
        sl = slice(w.indptr[i], w.indptr[i + 1])
        if sl.stop > sl.start:
            vals = w.data[sl] * (u[w.indices[sl]] - u[i])
            out[i] = max(vals.max(), 0.0) + min(vals.min(), 0.0)
    return out


@njit(cache=True)
def _jacobi_iterate(indptr, indices, data, u, free, inv2m, tol_raw, max_iter):
    """Damped Jacobi sweeps on the free vertices; returns (sweeps applied,
    raw residual of the returned u)."""
    n = u.shape[0]
    lu = np.zeros(n)
    it = 0
    while True:
        res = 0.0
        for i in range(n):
            if not free[i]:
                continue
            ui = u[i]
            mx = 0.0
            mn = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                v = data[p] * (u[indices[p]] - ui)
                if v > mx:
                    mx = v
                elif v < mn:
                    mn = v
            l = mx + mn
            lu[i] = l
            a = abs(l)
            if a > res:
                res = a
        if res < tol_raw or it >= max_iter:
            return it, res
        for i in range(n):
            if free[i]:
                u[i] += inv2m * lu[i]
        it += 1


@njit(cache=True)
def _detect_windows(indptr, indices, n):
    """Check whether every row's neighbors form one consecutive index run
    (with at most the self slot missing), as happens for interval graphs on
    sorted 1D clouds; returns (ok, lo, hi) with hi inclusive."""
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        if e == s:
            continue
        first = indices[s]
        last = indices[e - 1]
        cnt = e - s
        span = last - first
        if span == cnt - 1:
            pass  # full consecutive run, self outside [first, last]
        elif span == cnt and first < i < last:
            # single gap; consecutive run forces it at exactly i
            q = s + (i - first)
            if indices[q] != i + 1 or indices[q - 1] != i - 1:
                return False, lo, hi
        else:
            return False, lo, hi
        lo[i] = first
        hi[i] = last
    return True, lo, hi


@njit(cache=True)
def _jacobi_iterate_window(indptr, lo, hi, data, u, free, inv2m, tol_raw, max_iter):
    """Same iteration for interval-structured rows: neighbors are the run
    lo[i]..hi[i] minus the self slot, so the column indices need not be
    loaded. Produces the same iterates as _jacobi_iterate."""
    n = u.shape[0]
    lu = np.zeros(n)
    it = 0
    while True:
        res = 0.0
        for i in range(n):
            if not free[i]:
                continue
            ui = u[i]
            mx = 0.0
            mn = 0.0
            p = indptr[i]
            for j in range(lo[i], hi[i] + 1):
                if j == i:
                    continue
                v = data[p] * (u[j] - ui)
                p += 1
                if v > mx:
                    mx = v
                elif v < mn:
                    mn = v
            l = mx + mn
            lu[i] = l
            a = abs(l)
            if a > res:
                res = a
        if res < tol_raw or it >= max_iter:
            return it, res
        for i in range(n):
            if free[i]:
                u[i] += inv2m * lu[i]
        it += 1


def nearest_label_sources(graph: WeightedGraph, labeled: np.ndarray):
    """(hop distance, nearest labeled vertex) for every vertex via
    multi-source BFS on the adjacency; unreachable vertices get inf."""
    dist, _, sources = csgraph.dijkstra(
        graph.weights, directed=False, unweighted=True,
        indices=np.asarray(labeled, dtype=np.int64), min_only=True, return_predecessors=True,
    )
    return dist, sources


def check_connectivity(problem: LabelProblem):
    """Raise GraphConnectivityError if any unlabeled vertex cannot reach
    the labeled set; returns the BFS (dist, sources) for reuse."""
    dist, sources = nearest_label_sources(problem.graph, problem.labeled)
    bad = np.flatnonzero(~np.isfinite(dist))
    if bad.size:
        raise GraphConnectivityError(
            f"{bad.size} vertices are not connected to the labeled set (first: {bad[:5].tolist()})"
        )
    return dist, sources


def _initial_values(problem: LabelProblem, init: Init, u0, sources) -> np.ndarray:
    n = problem.graph.n_vertices
    g = problem.values
    lo, hi = float(g.min()), float(g.max())
    if u0 is not None:
        u = np.array(u0, dtype=np.float64, copy=True)
        if u.shape != (n,):
            raise ValueError(f"u0 must have shape ({n},)")
    elif init == Init.LABEL_MEAN:
        u = np.full(n, float(g.mean()))
    elif init == Init.ZERO:
        u = np.zeros(n)
    elif init == Init.NEAREST_LABEL:
        val_of = np.zeros(n)
        val_of[problem.labeled] = g
        u = val_of[sources]
    else:
        raise ValueError(f"unknown init {init}")
    # keep every iterate inside the a-priori bounds from the start
    np.clip(u, lo, hi, out=u)
    u[problem.labeled] = g
    return u


def lipschitz_gradient(graph: WeightedGraph, u: np.ndarray) -> float:
    """max over stored edges of w(x,y)|u(x)-u(y)| (the discrete Lipschitz
    seminorm the a-priori estimate bounds by C*h)."""
    w = graph.weights.tocoo()
    if w.nnz == 0:
        return 0.0
    return float(np.max(w.data * np.abs(u[w.row] - u[w.col])))


def solve(problem: LabelProblem, tol: float = 1e-5, max_iter: int = 10 ** 6,
          init: Init = Init.LABEL_MEAN, u0: np.ndarray | None = None) -> Solution:
    """Solve the Dirichlet problem for the graph infinity-Laplacian.

    The residual is measured on the weight-normalized scale, max|Lu|/M, so
    tol keeps its meaning on unnormalized graphs. Disconnected instances
    raise before any sweep; hitting max_iter returns a Solution with
    converged=False carrying the residual rather than a silent success.
    ``u0`` optionally warm-starts the iteration (clamped to the label
    range; the fixed point is unique so this affects speed only).
    """
    t0 = time.perf_counter()
    graph = problem.graph
    n = graph.n_vertices
    if tol <= 0:
        raise ValueError("tol must be positive")
    _, sources = check_connectivity(problem)

    g = problem.values
    free = np.ones(n, dtype=np.bool_)
    free[problem.labeled] = False
    u = _initial_values(problem, init, u0, sources)

    if not free.any():
        return Solution(u=u, iterations=0, final_residual=0.0,
                        elapsed=time.perf_counter() - t0, converged=True,
                        diagnostics=_diagnostics(graph, u, 0, 0.0))

    w = graph.weights
    m = graph.max_weight
    if m <= 0.0:
        raise SolverError("graph has no positive weights but unlabeled vertices remain")
    # monotonicity of the update map: the coefficient of u(x) in the
    # update is 1 - (w_max + w_min)/(2M) >= 0 because no weight exceeds M
    if w.nnz and float(w.data.max()) > m * (1.0 + 1e-12):
        raise SolverError("stored max_weight is smaller than an actual weight; monotone step invalid")

    ok, lo, hi = _detect_windows(w.indptr, w.indices, n)
    if ok:
        it, res_raw = _jacobi_iterate_window(
            w.indptr, lo, hi, w.data, u, free, 1.0 / (2.0 * m), tol * m, int(max_iter)
        )
    else:
        it, res_raw = _jacobi_iterate(
            w.indptr, w.indices, w.data, u, free, 1.0 / (2.0 * m), tol * m, int(max_iter)
        )
    res = res_raw / m
    converged = res < tol

    lo, hi = float(g.min()), float(g.max())
    slack = 1e-9 * (1.0 + hi - lo)
    if u.min() < lo - slack or u.max() > hi + slack:
        raise SolverError("solution violates the a-priori label bounds; monotone update broken")

    return Solution(u=u, iterations=it, final_residual=res,
                    elapsed=time.perf_counter() - t0, converged=converged,
                    diagnostics=_diagnostics(graph, u, it, res))


def _diagnostics(graph: WeightedGraph, u: np.ndarray, iterations: int, residual: float) -> dict:
    empty_rows = int(np.sum(np.diff(graph.weights.indptr) == 0))
    return {
        "iterations": iterations,
        "residual": residual,
        "max_gradient": lipschitz_gradient(graph, u),
        "u_min": float(u.min()),
        "u_max": float(u.max()),
        "n_isolated": empty_rows,
    }


def verify_comparison(problem1: LabelProblem, problem2: LabelProblem,
                      sol1: Solution, sol2: Solution, tol: float = 1e-5,
                      slack: float = 2.0) -> bool:
    """Check the discrete comparison principle: with the same graph and
    g1 <= g2 on the labels, u1 <= u2 + slack*tol at every vertex (slack
    covers both solves' residuals)."""
    w1, w2 = problem1.graph.weights, problem2.graph.weights
    same = (w1 is w2) or (
        w1.shape == w2.shape and w1.nnz == w2.nnz
        and np.array_equal(w1.indptr, w2.indptr)
        and np.array_equal(w1.indices, w2.indices)
        and np.array_equal(w1.data, w2.data)
    )
    if not same:
        raise ValueError("comparison requires both problems to share one graph")
    if not np.array_equal(problem1.labeled, problem2.labeled):
        raise ValueError("comparison requires a common labeled set")
    if np.any(problem1.values > problem2.values):
        raise ValueError("comparison requires g1 <= g2 on the labels")
    return bool(np.all(sol1.u <= sol2.u + slack * tol))


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def save_solution_csv(solution: Solution, path):
    path = Path(path)
    with path.open("w") as fh:
        fh.write("index,u\n")
        for i, v in enumerate(solution.u):
            fh.write(f"{i},{repr(float(v))}\n")


def save_diagnostics(solution: Solution, path):
    payload = dict(solution.diagnostics)
    payload.update(converged=solution.converged, elapsed=solution.elapsed)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
