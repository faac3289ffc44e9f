"""Point clouds, metrics, samplers, and exact neighbor queries.

Clouds live either in Euclidean space or on the flat torus [0,1)^d with
periodic wrap-around distances.  Samplers cover the synthetic data models
used by the experiments: uniform boxes, 1D/box densities with a dip of
relative depth mu on |x1| <= delta, all-pairs sum statistics of a base
sample, and deterministic lattices.

Randomness comes from numpy's counter-based Philox generator seeded
through ``make_rng``; identical (seed, stream) pairs give bit-identical
output within one numpy version.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class Metric(Enum):
    EUCLIDEAN = "euclidean"
    TORUS = "torus"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator for (seed, stream...) so trials get
    independent, reproducible streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(s) for s in stream))))


@dataclass(frozen=True)
class PointCloud:
    """Immutable set of d-dimensional points with a distance convention.

    Torus coordinates must lie in [0,1); Euclidean points are unconstrained.
    The coordinate array is frozen after construction so clouds can be
    shared freely.
    """

    points: np.ndarray
    metric: Metric = Metric.EUCLIDEAN

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=np.float64)))
        if pts.ndim != 2:
            raise ValueError(f"points must be a (n, dim) array, got shape {pts.shape}")
        if self.metric == Metric.TORUS and pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
            raise ValueError("torus coordinates must lie in [0, 1)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


def displacement(cloud: PointCloud, i: int, j: int) -> np.ndarray:
    """Vector from point i to point j; on the torus, the wrapped
    representative with components in [-1/2, 1/2)."""
    pts = cloud.points
    d = pts[j] - pts[i]
    if cloud.metric == Metric.TORUS:
        d = d - np.round(d)
    return d


def distance(cloud: PointCloud, i: int, j: int) -> float:
    """Distance between vertices i and j (2-norm; wrapped per coordinate on
    the torus)."""
    n = cloud.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"vertex index out of range: ({i}, {j}) with n={n}")
    return float(np.linalg.norm(displacement(cloud, i, j)))


def distances_to_point(cloud: PointCloud, x: np.ndarray, points: np.ndarray | None = None) -> np.ndarray:
    """Distances from a coordinate vector x to every cloud point
    (vectorized helper shared by the queries below)."""
    pts = cloud.points if points is None else points
    diff = pts - np.asarray(x, dtype=np.float64)
    if cloud.metric == Metric.TORUS:
        diff = diff - np.round(diff)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

class SamplerKind(Enum):
    UNIFORM_BOX = "uniform_box"
    DIP_DENSITY_1D = "dip_density_1d"
    DIP_DENSITY_BOX = "dip_density_box"
    PAIR_STATISTIC = "pair_statistic"
    DETERMINISTIC_GRID = "deterministic_grid"


@dataclass(frozen=True)
class SamplerSpec:
    """Recipe for generating a cloud. ``mu``/``delta`` apply to the dip
    densities, ``m`` is the base-sample count of the pair statistic (which
    always yields m*(m-1) points), ``box`` are optional (low, high) bounds
    per dimension, and ``metric`` fixes the distance convention of the
    resulting cloud."""

    kind: SamplerKind
    seed: int = 0
    mu: float = 1.0
    delta: float = 0.1
    m: int = 0
    box: tuple = ()
    metric: Metric = Metric.EUCLIDEAN


def dip_normalization(mu: float, delta: float) -> float:
    """Normalizing constant A of the dip density: A on delta <= |t| <= 1 and
    mu*A on |t| <= delta integrates to 1 over [-1, 1]."""
    return 1.0 / (2.0 * (delta * mu + 1.0 - delta))


def _check_dip_params(mu: float, delta: float):
    if not (0.0 < mu <= 1.0):
        raise ValueError(f"mu must lie in (0, 1], got {mu}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def sample_dip_1d(rng: np.random.Generator, n: int, mu: float, delta: float) -> np.ndarray:
    """Inverse-CDF draws from the dip density on [-1, 1]."""
    _check_dip_params(mu, delta)
    a = dip_normalization(mu, delta)
    # CDF breakpoints at -delta and delta
    f_low = a * (1.0 - delta)          # mass of [-1, -delta]
    f_mid = 2.0 * mu * a * delta       # mass of [-delta, delta]
    u = rng.random(n)
    x = np.empty(n)
    lo = u < f_low
    mid = (~lo) & (u < f_low + f_mid)
    hi = ~(lo | mid)
    x[lo] = -1.0 + u[lo] / a
    x[mid] = -delta + (u[mid] - f_low) / (mu * a)
    x[hi] = delta + (u[hi] - f_low - f_mid) / a
    return x


def _grid_counts(n: int, dim: int) -> int:
    per_side = max(1, round(n ** (1.0 / dim)))
    return per_side


def sample(spec: SamplerSpec, n: int, dim: int) -> PointCloud:
    """Draw a cloud of (about) n points in the given dimension.

    PAIR_STATISTIC ignores n and returns all m*(m-1) component-wise sums
    tau(Y_i, Y_j) = Y_i + Y_j, i != j, of m uniform base draws.
    DETERMINISTIC_GRID returns the lattice with round(n**(1/dim)) points
    per side (exactly n when n is a perfect power).
    """
    if spec.kind != SamplerKind.PAIR_STATISTIC and n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = make_rng(spec.seed)

    if spec.kind == SamplerKind.UNIFORM_BOX:
        box = spec.box if spec.box else ((0.0, 1.0),) * dim
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        pts = lo + (hi - lo) * rng.random((n, dim))
        return PointCloud(pts, spec.metric)

    if spec.kind == SamplerKind.DIP_DENSITY_1D:
        if dim != 1:
            raise ValueError("DIP_DENSITY_1D requires dim == 1")
        x = sample_dip_1d(rng, n, spec.mu, spec.delta)
        return PointCloud(x[:, None], spec.metric)

    if spec.kind == SamplerKind.DIP_DENSITY_BOX:
        # dip in x1 on [-1, 1], uniform on [0, 1]^(dim-1); the box has unit
        # cross-section so the 1D normalization constant carries over
        if dim < 1:
            raise ValueError("dimension must be positive")
        x1 = sample_dip_1d(rng, n, spec.mu, spec.delta)
        rest = rng.random((n, dim - 1))
        return PointCloud(np.column_stack([x1] + [rest[:, k] for k in range(dim - 1)]), spec.metric)

    if spec.kind == SamplerKind.PAIR_STATISTIC:
        m = spec.m
        if m < 2:
            raise ValueError(f"pair statistic needs base sample m >= 2, got {m}")
        base = rng.random((m, dim))
        ii, jj = np.where(~np.eye(m, dtype=bool))
        pts = base[ii] + base[jj]
        return PointCloud(pts, spec.metric)

    if spec.kind == SamplerKind.DETERMINISTIC_GRID:
        per_side = _grid_counts(n, dim)
        return grid_cloud(per_side, dim, spec.metric, spec.box)

    raise ValueError(f"unknown sampler kind {spec.kind}")


def grid_cloud(per_side: int, dim: int, metric: Metric = Metric.TORUS, box: tuple = ()) -> PointCloud:
    """Regular lattice with per_side points per axis. On the torus the
    spacing is 1/per_side over [0,1); otherwise the lattice spans the given
    box (default unit box) endpoint-inclusive."""
    if metric == Metric.TORUS:
        axes = [np.arange(per_side) / per_side] * dim
    else:
        b = box if box else ((0.0, 1.0),) * dim
        axes = [np.linspace(b[k][0], b[k][1], per_side) for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return PointCloud(pts, metric)


# ---------------------------------------------------------------------------
# Fill distance
# ---------------------------------------------------------------------------

def fill_distance(cloud: PointCloud, resolution: float) -> float:
    """Upper-biased estimate of sup_x dist(x, cloud) by probing a regular
    grid of the given step; the additive error is at most
    resolution*sqrt(d)/2 (half a grid-cell diagonal).

    On the torus the probe grid covers [0,1)^d; in Euclidean space it
    covers the cloud's bounding box.
    """
    if cloud.n == 0:
        raise ValueError("fill distance of an empty cloud is undefined")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    d = cloud.dim
    if cloud.metric == Metric.TORUS:
        per_side = max(1, int(math.ceil(1.0 / resolution)))
        axes = [np.arange(per_side) / per_side] * d
    else:
        lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
        axes = [np.linspace(lo[k], hi[k], max(2, int(math.ceil((hi[k] - lo[k]) / resolution)) + 1))
                if hi[k] > lo[k] else np.array([lo[k]]) for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    probes = np.column_stack([m.ravel() for m in mesh])

    best = 0.0
    chunk = max(1, int(4e6 // max(1, cloud.n)))
    for s in range(0, probes.shape[0], chunk):
        block = probes[s : s + chunk]
        diff = block[:, None, :] - cloud.points[None, :, :]
        if cloud.metric == Metric.TORUS:
            diff = diff - np.round(diff)
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        best = max(best, float(np.sqrt(dist2.min(axis=1)).max()))
    return best


# ---------------------------------------------------------------------------
# Neighbor queries (uniform cell grid; exact, brute-force-equivalent)
# ---------------------------------------------------------------------------

class _CellGrid:
    """Uniform bucketing of cloud points with cell width >= a query radius,
    so any ball of that radius is covered by the 3^d block around its cell.
    Torus grids wrap; Euclidean grids span the bounding box unpadded."""

    def __init__(self, cloud: PointCloud, cell_size: float):
        pts = cloud.points
        self.cloud = cloud
        d = cloud.dim
        if cloud.metric == Metric.TORUS:
            self.origin = np.zeros(d)
            self.n_side = np.full(d, max(1, int(math.floor(1.0 / cell_size))), dtype=np.int64)
            self.width = 1.0 / self.n_side
        else:
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            span = np.maximum(hi - lo, 1e-300)
            self.origin = lo
            self.n_side = np.maximum(1, np.floor(span / cell_size).astype(np.int64))
            self.width = span / self.n_side
        idx = np.floor((pts - self.origin) / self.width).astype(np.int64)
        idx = np.clip(idx, 0, self.n_side - 1)
        self.strides = np.cumprod(np.concatenate([[1], self.n_side[:-1]]))
        cell_of = idx @ self.strides
        self.order = np.argsort(cell_of, kind="stable")
        self.sorted_cells = cell_of[self.order]
        self.cell_index = idx

    def _block_cells(self, cell_idx: np.ndarray) -> np.ndarray:
        """Linear ids of the 3^d neighborhood of a cell (deduplicated;
        wrapped on the torus, clipped in Euclidean space)."""
        d = len(self.n_side)
        offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
        neigh = cell_idx[None, :] + offsets
        if self.cloud.metric == Metric.TORUS:
            neigh = neigh % self.n_side
        else:
            inside = np.all((neigh >= 0) & (neigh < self.n_side), axis=1)
            neigh = neigh[inside]
        ids = np.unique(neigh @ self.strides)
        return ids

    def candidates(self, cell_idx: np.ndarray) -> np.ndarray:
        """Indices of all points in the 3^d block around the given cell."""
        out = []
        for cid in self._block_cells(cell_idx):
            a = np.searchsorted(self.sorted_cells, cid, side="left")
            b = np.searchsorted(self.sorted_cells, cid, side="right")
            if b > a:
                out.append(self.order[a:b])
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)

    def cells_with_members(self):
        """Yield (cell linear id, member indices) for each nonempty cell."""
        starts = np.flatnonzero(np.diff(self.sorted_cells, prepend=-1))
        bounds = np.append(starts, len(self.sorted_cells))
        for s, e in zip(bounds[:-1], bounds[1:]):
            yield self.sorted_cells[s], self.order[s:e]


def _brute_neighbors(cloud: PointCloud, i: int, radius: float):
    dist = distances_to_point(cloud, cloud.points[i])
    idx = np.flatnonzero((dist < radius))
    idx = idx[idx != i]
    return idx, dist[idx]


def neighbors_within(cloud: PointCloud, i: int, radius: float):
    """All vertices j != i with distance(i, j) < radius, as
    (indices, distances) sorted by index. Exactly matches a brute-force
    scan; a cell grid only accelerates the candidate generation."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 0 <= i < cloud.n:
        raise IndexError(f"vertex index {i} out of range")
    if cloud.dim > 3 or cloud.n < 256:
        return _brute_neighbors(cloud, i, radius)
    grid = _CellGrid(cloud, radius)
    cand = grid.candidates(grid.cell_index[i])
    dist = distances_to_point(cloud, cloud.points[i], cloud.points[cand])
    keep = (dist < radius) & (cand != i)
    idx = cand[keep]
    order = np.argsort(idx)
    return idx[order], dist[keep][order]


def k_nearest(cloud: PointCloud, i: int, k: int):
    """The k nearest vertices to i (excluding i), sorted by ascending
    distance with ties broken by lower index; the last distance is the
    k-th neighbor distance used by the self-tuning k-NN weights."""
    n = cloud.n
    if not 0 <= i < n:
        raise IndexError(f"vertex index {i} out of range")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of points n={n}")
    dist = distances_to_point(cloud, cloud.points[i])
    dist[i] = np.inf
    order = np.lexsort((np.arange(n), dist))[:k]
    return order, dist[order]


def knn_table(cloud: PointCloud, k: int):
    """k_nearest for every vertex at once: (n, k) index and distance
    arrays. Brute force in chunks; exact, deterministic tie-breaking."""
    n, pts = cloud.n, cloud.points
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of points n={n}")
    idx_out = np.empty((n, k), dtype=np.int64)
    dist_out = np.empty((n, k))
    chunk = max(1, int(8e6 // max(1, n)))
    sq = np.einsum("ij,ij->i", pts, pts)
    for s in range(0, n, chunk):
        block = pts[s : s + chunk]
        if cloud.metric == Metric.TORUS:
            diff = block[:, None, :] - pts[None, :, :]
            diff = diff - np.round(diff)
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
        else:
            d2 = sq[s : s + chunk, None] - 2.0 * block @ pts.T + sq[None, :]
            np.maximum(d2, 0.0, out=d2)
        rows = np.arange(d2.shape[0])
        d2[rows, rows + s] = np.inf
        # partial select then stable (distance, index) ordering for ties
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        pd = np.take_along_axis(d2, part, axis=1)
        fine = np.lexsort((part, pd), axis=1)
        idx_out[s : s + chunk] = np.take_along_axis(part, fine, axis=1)
        dist_out[s : s + chunk] = np.sqrt(np.take_along_axis(pd, fine, axis=1))
    return idx_out, dist_out


# ---------------------------------------------------------------------------
# CSV interface: one row per point, dim float columns, optional header
# ---------------------------------------------------------------------------

def save_points_csv(cloud: PointCloud, path, header: bool = True):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{k}" for k in range(cloud.dim)])
        for row in cloud.points:
            w.writerow([repr(float(v)) for v in row])


def load_points_csv(path, metric: Metric = Metric.EUCLIDEAN) -> PointCloud:
    path = Path(path)
    rows = []
    with path.open() as fh:
        for line_no, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if line_no == 0:
                    continue  # header
                raise
    if not rows:
        raise ValueError(f"no points found in {path}")
    return PointCloud(np.asarray(rows), metric)
