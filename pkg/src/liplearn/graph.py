"""Kernel profiles and sparse weighted-graph construction.

Weights come in two flavors: radial kernel weights sigma(x,y) =
Phi(|x-y|/h) modulated by degree factors d(x)^alpha d(y)^alpha, and k-NN
weights modulated by inverse k-th neighbor distances. Degrees double as a
kernel density estimate of the sampling density (up to the kernel mass
C_Phi).

Adjacency is stored as a scipy CSR matrix with sorted indices, which is
exactly a per-vertex, index-sorted adjacency list; iteration order is
deterministic. Self-loops are never stored (they contribute nothing to
the infinity-Laplacian), but the self-term Phi(0) *is* included in the
degree sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import integrate, sparse

from .geometry import Metric, PointCloud, _CellGrid, distances_to_point, knn_table

# Lattice data can place neighbors at exactly the support boundary up to
# rounding; the indicator support test s <= 1 uses this relative slack so
# inclusion does not flip with the last bit.
_SUPPORT_RTOL = 1e-9


class KernelProfile(Enum):
    SMOOTH_BUMP = "smooth_bump"
    INDICATOR = "indicator"
    GAUSSIAN = "gaussian"


def _smooth_transition(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, q(t)/(q(t)+q(1-t))
    with q(t) = exp(-1/t) in between."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    out[t <= 0.0] = 0.0
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    qa = np.exp(-1.0 / tm)
    qb = np.exp(-1.0 / (1.0 - tm))
    out[mid] = qa / (qa + qb)
    return out


@dataclass(frozen=True)
class Kernel:
    """Radial profile Phi with bandwidth h.

    SMOOTH_BUMP: Phi(s) = 1 for s <= 1, the smooth-step ramp
    q(2-s)/(q(2-s)+q(s-1)) with q(t)=exp(-1/t) on 1 < s < 2, and 0 for
    s >= 2.  It is C-infinity, satisfies Phi >= 1 on (0,1) and Phi = 0 on
    [2, inf), and is the default profile for consistency checks.

    INDICATOR: Phi(s) = 1 for s <= 1, else 0 (support radius h).

    GAUSSIAN: Phi(s) = exp(-s^2) truncated at s >= 2 (kept for
    completeness; the k-NN construction uses its own per-edge scale rule).
    """

    profile: KernelProfile
    bandwidth: float

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def support_radius(self) -> float:
        """Distance beyond which sigma vanishes."""
        if self.profile == KernelProfile.INDICATOR:
            return self.bandwidth
        return 2.0 * self.bandwidth

    def phi(self, s) -> np.ndarray:
        """Profile Phi evaluated at scaled distances s = |x-y|/h."""
        s = np.asarray(s, dtype=np.float64)
        if self.profile == KernelProfile.INDICATOR:
            return (s <= 1.0 + _SUPPORT_RTOL).astype(np.float64)
        if self.profile == KernelProfile.SMOOTH_BUMP:
            return _smooth_transition(2.0 - s)
        if self.profile == KernelProfile.GAUSSIAN:
            return np.where(s < 2.0, np.exp(-np.square(s)), 0.0)
        raise ValueError(f"unknown profile {self.profile}")


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


def kernel_integral(kernel: Kernel, dim: int) -> float:
    """C_Phi = integral of Phi(|z|) over the ball of radius 2 (the
    constant relating degrees to the sampling density). Closed form for
    the indicator (unit-ball volume); radial quadrature otherwise."""
    if kernel.profile == KernelProfile.INDICATOR:
        return unit_ball_volume(dim)
    surface = dim * unit_ball_volume(dim)
    val, _ = integrate.quad(lambda s: float(kernel.phi(s)) * s ** (dim - 1), 0.0, 2.0, limit=200)
    return surface * val


@dataclass(frozen=True)
class WeightedGraph:
    """Symmetric nonnegative sparse weights with optional per-vertex
    degrees and the self-tuning exponent used to build them. max_weight
    caches M = max w(x,y); normalized marks graphs rescaled to M = 1."""

    weights: sparse.csr_matrix
    alpha: float = 0.0
    degrees: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self):
        w = self.weights.tocsr()
        w.sort_indices()
        object.__setattr__(self, "weights", w)

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]

    @property
    def max_weight(self) -> float:
        return float(self.weights.data.max()) if self.weights.nnz else 0.0

    def edge_count(self) -> int:
        return self.weights.nnz // 2


def _pair_sweep(cloud: PointCloud, radius: float):
    """Yield (i_block, j_block, dist_block) covering every ordered pair
    with distance possibly below ``radius`` exactly once (i != j)."""
    pts = cloud.points
    n = cloud.n
    if cloud.dim > 3 or n < 128:
        chunk = max(1, int(4e6 // max(1, n)))
        all_idx = np.arange(n)
        for s in range(0, n, chunk):
            block = pts[s : s + chunk]
            diff = block[:, None, :] - pts[None, :, :]
            if cloud.metric == Metric.TORUS:
                diff = diff - np.round(diff)
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            ii = np.repeat(np.arange(s, min(s + chunk, n)), n)
            jj = np.tile(all_idx, dist.shape[0])
            mask = ii != jj
            yield ii[mask], jj[mask], dist.ravel()[mask]
        return
    grid = _CellGrid(cloud, radius)
    for _, members in grid.cells_with_members():
        cand = grid.candidates(grid.cell_index[members[0]])
        diff = pts[members][:, None, :] - pts[cand][None, :, :]
        if cloud.metric == Metric.TORUS:
            diff = diff - np.round(diff)
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        ii = np.repeat(members, len(cand))
        jj = np.tile(cand, len(members))
        mask = ii != jj
        yield ii[mask], jj[mask], dist.ravel()[mask]


def base_weights(cloud: PointCloud, kernel: Kernel) -> sparse.csr_matrix:
    """Kernel weights sigma(i,j) = Phi(distance(i,j)/h) for i != j, stored
    only where positive (distance below the profile's support radius)."""
    h = kernel.bandwidth
    rows, cols, vals = [], [], []
    for ii, jj, dist in _pair_sweep(cloud, kernel.support_radius):
        sig = kernel.phi(dist / h)
        pos = sig > 0.0
        rows.append(ii[pos])
        cols.append(jj[pos])
        vals.append(sig[pos])
    n = cloud.n
    if not rows:
        return sparse.csr_matrix((n, n))
    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    mat.sort_indices()
    return mat


def degrees(cloud: PointCloud, kernel: Kernel, n_unlabeled: int, indices=None) -> np.ndarray:
    """Normalized degrees d(x_i) = (sum_j Phi(|x_i-x_j|/h) + Phi(0)) /
    (n_unlabeled * h^d), the kernel density estimate at the vertices.

    The sum runs over the whole cloud (labeled vertices included) while
    the normalization uses the unlabeled count, matching how the estimate
    is used; the self-term Phi(0) is included. ``indices`` restricts the
    output to selected vertices without building any edges.
    """
    if n_unlabeled < 1:
        raise ValueError(f"n_unlabeled must be >= 1, got {n_unlabeled}")
    h = kernel.bandwidth
    norm = n_unlabeled * h ** cloud.dim
    phi0 = float(kernel.phi(0.0))
    if indices is not None:
        indices = np.asarray(indices, dtype=np.int64)
        sums = np.zeros(len(indices))
        for pos, i in enumerate(indices):
            dist = distances_to_point(cloud, cloud.points[i])
            dist[i] = np.inf
            sums[pos] = kernel.phi(dist / h).sum() + phi0
        return sums / norm
    if cloud.dim == 1 and cloud.metric == Metric.EUCLIDEAN and kernel.profile == KernelProfile.INDICATOR:
        # sorted-window counts: the indicator degree is just an interval count
        xs = cloud.points[:, 0]
        order = np.argsort(xs, kind="stable")
        sx = xs[order]
        r = h * (1.0 + _SUPPORT_RTOL)
        counts = (np.searchsorted(sx, sx + r, side="right")
                  - np.searchsorted(sx, sx - r, side="left"))
        sums = np.empty(cloud.n)
        sums[order] = counts.astype(np.float64)  # self term counted once
        return sums / norm
    sums = np.full(cloud.n, phi0)
    for ii, _, dist in _pair_sweep(cloud, kernel.support_radius):
        sums += np.bincount(ii, weights=kernel.phi(dist / h), minlength=cloud.n)
    return sums / norm


def self_tuning_weights(base: sparse.csr_matrix, degs: np.ndarray, alpha: float) -> WeightedGraph:
    """w(i,j) = d_i^alpha * d_j^alpha * sigma(i,j). With alpha = 0 the base
    weights pass through unchanged."""
    base = base.tocsr()
    if alpha == 0.0:
        return WeightedGraph(base.copy(), alpha=0.0, degrees=np.asarray(degs, dtype=np.float64))
    degs = np.asarray(degs, dtype=np.float64)
    bad = np.flatnonzero(degs <= 0.0)
    if bad.size:
        raise ValueError(f"vertex {bad[0]} has nonpositive degree {degs[bad[0]]}; cannot apply alpha={alpha}")
    factor = degs ** alpha
    out = base.copy()
    coo = out.tocoo()
    out = sparse.csr_matrix((coo.data * factor[coo.row] * factor[coo.col], (coo.row, coo.col)), shape=base.shape)
    return WeightedGraph(out, alpha=alpha, degrees=degs)


def kernel_graph(cloud: PointCloud, kernel: Kernel, alpha: float, n_unlabeled: int | None = None) -> WeightedGraph:
    """Convenience: base weights + degrees + self-tuning in one call."""
    n_unl = cloud.n if n_unlabeled is None else n_unlabeled
    sig = base_weights(cloud, kernel)
    degs = degrees(cloud, kernel, n_unl)
    return self_tuning_weights(sig, degs, alpha)


class KnnWeightRule(Enum):
    UNIT = "unit"
    GAUSSIAN_5TH = "gaussian_5th"


def knn_self_tuning_weights(cloud: PointCloud, k: int, alpha: float,
                            weight_rule: KnnWeightRule = KnnWeightRule.UNIT) -> WeightedGraph:
    """k-NN graph with self-tuning factors D_k(x)^-alpha * D_k(y)^-alpha,
    where D_k is the distance to the k-th nearest neighbor.

    UNIT puts sigma = 1 on each directed k-NN edge; GAUSSIAN_5TH puts
    sigma(i,j) = exp(-|x_i-x_j|^2 / (s_i*s_j)) with s_i the distance to
    the 5th nearest neighbor. The directed matrix W is then symmetrized
    as (W + W^T)/2, so one-sided unit edges end up with weight 1/2.
    """
    n = cloud.n
    if k >= n:
        raise ValueError(f"k={k} must be smaller than n={n}")
    idx, dist = knn_table(cloud, max(k, 5 if weight_rule == KnnWeightRule.GAUSSIAN_5TH else k))
    dk = dist[:, k - 1]
    if alpha != 0.0 and np.any(dk <= 0.0):
        bad = int(np.flatnonzero(dk <= 0.0)[0])
        raise ValueError(f"vertex {bad} has zero distance to its {k}-th neighbor (duplicate points?); "
                         f"cannot apply alpha={alpha}")
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, :k].ravel()
    if weight_rule == KnnWeightRule.UNIT:
        sig = np.ones(n * k)
    elif weight_rule == KnnWeightRule.GAUSSIAN_5TH:
        s5 = dist[:, 4]
        if np.any(s5 <= 0.0):
            bad = int(np.flatnonzero(s5 <= 0.0)[0])
            raise ValueError(f"vertex {bad} has zero 5th-neighbor distance (duplicate points?)")
        d_edge = dist[:, :k].ravel()
        sig = np.exp(-np.square(d_edge) / (s5[rows] * s5[cols]))
    else:
        raise ValueError(f"unknown weight rule {weight_rule}")
    if alpha != 0.0:
        fac = dk ** (-alpha)
        sig = sig * fac[rows] * fac[cols]
    w = sparse.csr_matrix((sig, (rows, cols)), shape=(n, n))
    w = (w + w.T) * 0.5
    return WeightedGraph(w.tocsr(), alpha=alpha, degrees=None)


def normalize_max_weight(graph: WeightedGraph) -> WeightedGraph:
    """Rescale all weights by 1/M so the maximum weight becomes exactly 1.
    Solutions of the Dirichlet problem are invariant under this."""
    m = graph.max_weight
    if m <= 0.0:
        raise ValueError("cannot normalize a graph with no positive weights")
    if m == 1.0:
        return replace(graph, normalized=True)
    w = graph.weights.copy()
    w.data = w.data / m
    return replace(graph, weights=w, normalized=True)


# ---------------------------------------------------------------------------
# Text interface: "n m alpha normalized" header, "i j w" triples with
# i < j, then "d i value" degree lines
# ---------------------------------------------------------------------------

def save_graph_text(graph: WeightedGraph, path):
    path = Path(path)
    coo = sparse.triu(graph.weights, k=1).tocoo()
    with path.open("w") as fh:
        fh.write(f"{graph.n_vertices} {coo.nnz} {repr(float(graph.alpha))} {int(graph.normalized)}\n")
        order = np.lexsort((coo.col, coo.row))
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {repr(float(v))}\n")
        if graph.degrees is not None:
            for i, v in enumerate(graph.degrees):
                fh.write(f"d {i} {repr(float(v))}\n")


def load_graph_text(path) -> WeightedGraph:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"bad graph header in {path}: expected 'n m alpha normalized'")
        n, m, alpha, normalized = int(header[0]), int(header[1]), float(header[2]), bool(int(header[3]))
        rows, cols, vals = [], [], []
        degs = None
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "d":
                if degs is None:
                    degs = np.zeros(n)
                degs[int(parts[1])] = float(parts[2])
            else:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
                if not i < j:
                    raise ValueError(f"graph file requires i < j, got {i} {j}")
                rows += [i, j]
                cols += [j, i]
                vals += [w, w]
    if len(rows) != 2 * m:
        raise ValueError(f"expected {m} edges, found {len(rows) // 2}")
    w = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return WeightedGraph(w, alpha=alpha, degrees=degs, normalized=normalized)
