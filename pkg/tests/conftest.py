import numpy as np
import pytest
from scipy import sparse

from liplearn.geometry import Metric, PointCloud, distance, make_rng
from liplearn.graph import Kernel, KernelProfile, WeightedGraph, base_weights, degrees, normalize_max_weight, self_tuning_weights
from liplearn.solver import LabelProblem


def brute_force_neighbors(cloud: PointCloud, i: int, radius: float):
    """Independent O(n) oracle for neighbors_within."""
    idx, dist = [], []
    for j in range(cloud.n):
        if j == i:
            continue
        d = distance(cloud, i, j)
        if d < radius:
            idx.append(j)
            dist.append(d)
    return np.array(idx, dtype=np.int64), np.array(dist)


def brute_force_knn(cloud: PointCloud, i: int, k: int):
    """Independent oracle for k_nearest: full sort on (distance, index)."""
    pairs = sorted((distance(cloud, i, j), j) for j in range(cloud.n) if j != i)[:k]
    return np.array([j for _, j in pairs], dtype=np.int64), np.array([d for d, _ in pairs])


def path_graph(weights):
    """Chain graph with the given consecutive edge weights."""
    n = len(weights) + 1
    rows, cols, vals = [], [], []
    for i, w in enumerate(weights):
        rows += [i, i + 1]
        cols += [i + 1, i]
        vals += [w, w]
    return WeightedGraph(sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)))


def random_epsilon_instance(seed, n_max=200, alpha_choices=(0.0, 0.5, 1.0), n_labels_max=5):
    """Connected random geometric graph on the torus with a labeled subset.

    The radius starts large enough for typical connectivity and grows
    until the BFS from the labeled set reaches everything, so instances
    are connected by construction.
    """
    rng = make_rng(seed)
    n = int(rng.integers(20, n_max + 1))
    cloud = PointCloud(rng.random((n, 2)), Metric.TORUS)
    alpha = float(rng.choice(alpha_choices))
    h = 0.3
    for _ in range(8):
        kern = Kernel(KernelProfile.INDICATOR, h)
        sig = base_weights(cloud, kern)
        degs = degrees(cloud, kern, n)
        graph = normalize_max_weight(self_tuning_weights(sig, degs, alpha))
        n_comp, _ = sparse.csgraph.connected_components(graph.weights, directed=False)
        if n_comp == 1:
            break
        h *= 1.4
    n_lab = int(rng.integers(2, n_labels_max + 1))
    labeled = rng.choice(n, size=n_lab, replace=False)
    g = rng.uniform(-1.0, 1.0, size=n_lab)
    return graph, np.sort(labeled), g, rng


@pytest.fixture(scope="session")
def small_cloud():
    rng = make_rng(42)
    return PointCloud(rng.random((400, 2)), Metric.TORUS)
