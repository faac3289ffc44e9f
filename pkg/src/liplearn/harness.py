"""Configuration-driven experiment runners: learned-surface visualization
data, 1D oracle validation sweeps, synthetic classification sweeps,
one-vs-rest multi-class problems, consistency/KDE reports, and IDX image
ingestion.

Every runner is deterministic given (seed, trial): trial streams come
from the counter-based generator in geometry.make_rng. All outputs are
plain CSV with a header row.
"""

from __future__ import annotations

import configparser
import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import ConsistencyReport, constant_density, discrete_consistency_check, kde_error, quadratic_test_function
from .geometry import Metric, PointCloud, SamplerKind, SamplerSpec, grid_cloud, make_rng, sample, sample_dip_1d
from .graph import (
    Kernel,
    KernelProfile,
    KnnWeightRule,
    WeightedGraph,
    base_weights,
    degrees,
    kernel_integral,
    knn_self_tuning_weights,
    normalize_max_weight,
    self_tuning_weights,
)
from .oracle import OneDModel, closed_form_accuracy, eval_u_alpha
from .solver import Init, LabelProblem, Solution, solve


class IdxFormatError(ValueError):
    """Malformed IDX file; the message carries the byte offset."""


_KERNELS = {
    "indicator": KernelProfile.INDICATOR,
    "smooth_bump": KernelProfile.SMOOTH_BUMP,
    "gaussian": KernelProfile.GAUSSIAN,
}


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; unused fields are ignored by each
    runner. ``levels`` lists (n, h) pairs for sweep experiments."""

    experiment: str = "classify"
    n: int = 4000
    dim: int = 2
    h: float = 0.05
    kernel: str = "indicator"
    alphas: tuple = (0.0, 1.0)
    mus: tuple = (0.5,)
    delta: float = 0.1
    x1: float | None = None
    x2: float | None = None
    levels: tuple = ()
    trials: int = 1
    seed: int = 0
    tol: float = 1e-5
    max_iter: int = 10 ** 6
    density: str = "uniform"
    k: int = 10
    knn_rule: str = "gaussian_5th"
    n_classes: int = 3
    labels_per_class: int = 5
    warm_start: bool = True
    out_dir: str = "out"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.alphas:
            raise ValueError("alpha list must be nonempty")

    def make_kernel(self, h: float | None = None) -> Kernel:
        return Kernel(_KERNELS[self.kernel], self.h if h is None else h)

    def out_path(self, name: str) -> Path:
        d = Path(self.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        return d / name


def _parse_list(text: str, cast=float) -> tuple:
    return tuple(cast(tok) for tok in text.replace(",", " ").split())


def _parse_levels(text: str) -> tuple:
    out = []
    for tok in text.replace(",", " ").split():
        n_str, h_str = tok.split(":")
        out.append((int(n_str), float(h_str)))
    return tuple(out)


def load_config(path) -> ExperimentConfig:
    """Read an INI file with a single [experiment] section; keys mirror
    the ExperimentConfig fields (lists are comma separated, levels are
    n:h pairs)."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ValueError(f"config file not found: {path}")
    if "experiment" not in parser:
        raise ValueError(f"config file {path} needs an [experiment] section")
    sec = parser["experiment"]
    cfg = ExperimentConfig()
    for key in sec:
        if key in ("alphas", "mus"):
            setattr(cfg, key, _parse_list(sec[key]))
        elif key == "levels":
            cfg.levels = _parse_levels(sec[key])
        elif key in ("n", "dim", "trials", "seed", "max_iter", "k", "n_classes", "labels_per_class"):
            setattr(cfg, key, int(sec[key]))
        elif key in ("h", "delta", "tol", "x1", "x2"):
            setattr(cfg, key, float(sec[key]))
        elif key == "warm_start":
            cfg.warm_start = sec.getboolean(key)
        elif key in ("experiment", "kernel", "density", "knn_rule", "out_dir"):
            setattr(cfg, key, sec[key])
        else:
            raise ValueError(f"unknown config key: {key}")
    cfg.__post_init__()
    return cfg


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _sorted_cloud(points: np.ndarray, metric: Metric) -> tuple[PointCloud, np.ndarray]:
    """Sort points lexicographically for cache-friendly sparse sweeps;
    returns the cloud and the position of each original row."""
    keys = tuple(points[:, k] for k in reversed(range(points.shape[1])))
    order = np.lexsort(keys)
    inv = np.empty(len(order), dtype=np.int64)
    inv[order] = np.arange(len(order))
    return PointCloud(points[order], metric), inv


def build_self_tuned_graph(cloud: PointCloud, kernel: Kernel, alpha: float, n_unlabeled: int) -> WeightedGraph:
    sig = base_weights(cloud, kernel)
    degs = degrees(cloud, kernel, n_unlabeled)
    return normalize_max_weight(self_tuning_weights(sig, degs, alpha))


def binary_threshold(u: np.ndarray) -> np.ndarray:
    """Labels +1 where u > 0 and -1 elsewhere (the zero level goes to -1,
    matching the lowest-class tie rule of the multi-class pipeline)."""
    return np.where(u > 0.0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# Learned-surface experiment (2D box, two labels)
# ---------------------------------------------------------------------------

def sample_slope_density(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draws on [0,1]^2 with density 1/4 + (3/2) x1 (inverse CDF in x1)."""
    u = rng.random(n)
    # CDF x/4 + 3x^2/4 = u  ->  3x^2 + x - 4u = 0
    x1 = (-1.0 + np.sqrt(1.0 + 48.0 * u)) / 6.0
    return np.column_stack([x1, rng.random(n)])


def run_surface2d(cfg: ExperimentConfig) -> dict:
    """Two labels g(0, 0.5) = 0 and g(1, 0.5) = 1 on a sampled box cloud;
    writes one (x, y, u) CSV per alpha and returns a per-alpha summary."""
    if cfg.dim != 2:
        raise ValueError("surface2d requires dim == 2")
    if cfg.n < 1:
        raise ValueError("surface2d needs at least one unlabeled vertex")
    rng = make_rng(cfg.seed)
    if cfg.density == "uniform":
        pts = rng.random((cfg.n, 2))
    elif cfg.density == "slope":
        pts = sample_slope_density(rng, cfg.n)
    else:
        raise ValueError(f"unknown density {cfg.density!r} (want uniform or slope)")
    pts = np.vstack([pts, [[0.0, 0.5], [1.0, 0.5]]])
    cloud, inv = _sorted_cloud(pts, Metric.EUCLIDEAN)
    labeled = inv[np.array([cfg.n, cfg.n + 1])]
    g = np.array([0.0, 1.0])
    kern = cfg.make_kernel()
    sig = base_weights(cloud, kern)
    degs = degrees(cloud, kern, cfg.n)

    summary = {}
    for alpha in cfg.alphas:
        graph = normalize_max_weight(self_tuning_weights(sig, degs, alpha))
        problem = LabelProblem(graph, labeled, g)
        sol = solve(problem, tol=cfg.tol, max_iter=cfg.max_iter, init=Init.NEAREST_LABEL)
        path = cfg.out_path(f"surface2d_alpha{alpha:g}.csv")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "u"])
            for p, v in zip(cloud.points, sol.u):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v))])
        summary[alpha] = {
            "path": str(path),
            "mean_u": float(sol.u.mean()),
            "converged": sol.converged,
            "u": sol.u[inv],
            "iterations": sol.iterations,
        }
    return summary


# ---------------------------------------------------------------------------
# 1D oracle validation sweep
# ---------------------------------------------------------------------------

def run_oracle1d_validation(cfg: ExperimentConfig) -> list[dict]:
    """For each (n, h) level, alpha, and trial: sample the dip density,
    pin labels -1 at -x1 and +1 at x2, solve on the self-tuned graph, and
    record sup |u_n - u_alpha| plus empirical vs closed-form accuracy."""
    mu = cfg.mus[0]
    x1 = 0.9 if cfg.x1 is None else cfg.x1
    x2 = 0.25 if cfg.x2 is None else cfg.x2
    levels = cfg.levels if cfg.levels else ((cfg.n, cfg.h),)
    rows = []
    for n, h in levels:
        kern = cfg.make_kernel(h)
        for trial in range(cfg.trials):
            rng = make_rng(cfg.seed, trial)
            xs = np.sort(sample_dip_1d(rng, n, mu, cfg.delta))
            pts = np.concatenate([xs, [-x1, x2]])[:, None]
            cloud, inv = _sorted_cloud(pts, Metric.EUCLIDEAN)
            sig = base_weights(cloud, kern)
            degs = degrees(cloud, kern, n)
            labeled = inv[np.array([n, n + 1])]
            free = np.ones(cloud.n, dtype=bool)
            free[labeled] = False
            truth = np.where(cloud.points[free, 0] >= 0.0, 1.0, -1.0)
            for alpha in cfg.alphas:
                model = OneDModel(mu=mu, delta=cfg.delta, x1=x1, x2=x2, alpha=alpha)
                graph = normalize_max_weight(self_tuning_weights(sig, degs, alpha))
                problem = LabelProblem(graph, labeled, np.array([-1.0, 1.0]))
                exact = eval_u_alpha(model, cloud.points[:, 0])
                u0 = exact if cfg.warm_start else None
                sol = solve(problem, tol=cfg.tol, max_iter=cfg.max_iter, u0=u0)
                sup_err = float(np.max(np.abs(sol.u - exact)))
                pred = binary_threshold(sol.u[free])
                rows.append({
                    "n": n, "h": h, "alpha": alpha, "trial": trial,
                    "sup_error": sup_err,
                    "accuracy": float(np.mean(pred == truth)),
                    "closed_form_accuracy": closed_form_accuracy(model),
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                })
    path = cfg.out_path("oracle1d.csv")
    _write_rows(path, rows)
    return rows


# ---------------------------------------------------------------------------
# Synthetic d-dimensional classification sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationResult:
    alpha: float
    mu: float
    accuracies: np.ndarray
    n_nonconverged: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


def run_synth_classify(cfg: ExperimentConfig) -> list[ClassificationResult]:
    """Dip-density data on [-1,1] x [0,1]^(d-1), one random label per
    side, threshold the solved function at zero, and score against the
    sign of x1. Trials are paired across (alpha, mu) combinations."""
    if cfg.dim < 2:
        raise ValueError("classify requires dim >= 2")
    results = []
    for mu in cfg.mus:
        per_alpha = {alpha: [] for alpha in cfg.alphas}
        nonconv = {alpha: 0 for alpha in cfg.alphas}
        for trial in range(cfg.trials):
            rng = make_rng(cfg.seed, trial)
            spec = SamplerSpec(SamplerKind.DIP_DENSITY_BOX, seed=int(rng.integers(2 ** 62)), mu=mu, delta=cfg.delta)
            data = sample(spec, cfg.n, cfg.dim)
            x1 = float(rng.uniform(cfg.delta, 1.0))
            x2 = float(rng.uniform(cfg.delta, 1.0))
            lab = np.vstack([
                np.concatenate([[-x1], rng.random(cfg.dim - 1)]),
                np.concatenate([[x2], rng.random(cfg.dim - 1)]),
            ])
            pts = np.vstack([data.points, lab])
            cloud, inv = _sorted_cloud(pts, Metric.EUCLIDEAN)
            labeled = inv[np.array([cfg.n, cfg.n + 1])]
            kern = cfg.make_kernel()
            sig = base_weights(cloud, kern)
            degs = degrees(cloud, kern, cfg.n)
            free = np.ones(cloud.n, dtype=bool)
            free[labeled] = False
            truth = np.where(cloud.points[free, 0] >= 0.0, 1.0, -1.0)
            for alpha in cfg.alphas:
                graph = normalize_max_weight(self_tuning_weights(sig, degs, alpha))
                problem = LabelProblem(graph, labeled, np.array([-1.0, 1.0]))
                u0 = None
                if cfg.warm_start:
                    model = OneDModel(mu=mu, delta=cfg.delta, x1=x1, x2=x2, alpha=alpha)
                    u0 = eval_u_alpha(model, np.clip(cloud.points[:, 0], -1.0, 1.0))
                sol = solve(problem, tol=cfg.tol, max_iter=cfg.max_iter, u0=u0, init=Init.NEAREST_LABEL)
                if not sol.converged:
                    nonconv[alpha] += 1
                pred = binary_threshold(sol.u[free])
                per_alpha[alpha].append(float(np.mean(pred == truth)))
        for alpha in cfg.alphas:
            results.append(ClassificationResult(alpha=alpha, mu=mu, accuracies=np.array(per_alpha[alpha]),
                                                n_nonconverged=nonconv[alpha]))
    rows = [{
        "alpha": r.alpha, "mu": r.mu, "trials": len(r.accuracies),
        "mean_accuracy": r.mean, "std_accuracy": r.std,
    } for r in results]
    _write_rows(cfg.out_path("classify.csv"), rows)
    return results


# ---------------------------------------------------------------------------
# One-vs-rest multi-class pipeline
# ---------------------------------------------------------------------------

def build_multiclass_graph(cloud: PointCloud, cfg: ExperimentConfig) -> WeightedGraph:
    rule = KnnWeightRule(cfg.knn_rule)
    alpha = cfg.alphas[0]
    return normalize_max_weight(knn_self_tuning_weights(cloud, cfg.k, alpha, rule))


def run_multiclass(graph: WeightedGraph, labeled: np.ndarray, classes: np.ndarray,
                   n_classes: int, tol: float = 1e-5, max_iter: int = 10 ** 6):
    """One-vs-rest scores and argmax predictions.

    Each class solves the Dirichlet problem with value 1 on its own
    labels and 0 on the rest, giving scores in [0, 1]. Ties go to the
    lowest class id. With exactly two classes one signed solve provides
    both scores (they are exact affine images of each other), so the
    predictions coincide bitwise with the binary threshold pipeline.
    Returns (scores, predictions, solutions).
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    classes = np.asarray(classes, dtype=np.int64)
    counts = np.bincount(classes, minlength=n_classes)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"class {int(missing[0])} has no labeled vertices")
    n = graph.n_vertices
    scores = np.zeros((n, n_classes))
    sols = []
    if n_classes == 2:
        signed = np.where(classes == 1, 1.0, -1.0)
        sol = solve(LabelProblem(graph, labeled, signed), tol=tol, max_iter=max_iter)
        sols.append(sol)
        scores[:, 1] = 0.5 * (1.0 + sol.u)
        scores[:, 0] = 0.5 * (1.0 - sol.u)
        preds = np.where(sol.u > 0.0, 1, 0).astype(np.int64)
        return scores, preds, sols
    for c in range(n_classes):
        g = (classes == c).astype(np.float64)
        sol = solve(LabelProblem(graph, labeled, g), tol=tol, max_iter=max_iter)
        sols.append(sol)
        scores[:, c] = sol.u
    preds = np.argmax(scores, axis=1).astype(np.int64)  # first max = lowest class id
    return scores, preds, sols


def gaussian_blob_problem(rng: np.random.Generator, n_per_class: int, n_classes: int = 3,
                          spread: float = 0.12, labels_per_class: int = 5):
    """Well-separated Gaussian clusters on the plane with a few labeled
    vertices per class: the desk-scale stand-in for image benchmarks."""
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = np.column_stack([np.cos(angles), np.sin(angles)])
    pts = []
    classes = []
    for c in range(n_classes):
        pts.append(centers[c] + spread * rng.standard_normal((n_per_class, 2)))
        classes.append(np.full(n_per_class, c))
    pts = np.vstack(pts)
    classes = np.concatenate(classes)
    perm = rng.permutation(len(pts))
    pts, classes = pts[perm], classes[perm]
    labeled = np.concatenate([
        rng.choice(np.flatnonzero(classes == c), size=labels_per_class, replace=False)
        for c in range(n_classes)
    ])
    return PointCloud(pts, Metric.EUCLIDEAN), classes, labeled


def run_multiclass_blobs(cfg: ExperimentConfig) -> list[dict]:
    """Repeated blob trials through the k-NN self-tuned pipeline; writes
    and returns per-trial accuracies on the unlabeled vertices."""
    rows = []
    for trial in range(cfg.trials):
        rng = make_rng(cfg.seed, trial)
        cloud, classes, labeled = gaussian_blob_problem(
            rng, n_per_class=max(1, cfg.n // cfg.n_classes), n_classes=cfg.n_classes,
            labels_per_class=cfg.labels_per_class,
        )
        graph = build_multiclass_graph(cloud, cfg)
        _, preds, sols = run_multiclass(graph, labeled, classes[labeled], cfg.n_classes,
                                        tol=cfg.tol, max_iter=cfg.max_iter)
        mask = np.ones(cloud.n, dtype=bool)
        mask[labeled] = False
        rows.append({"trial": trial, "accuracy": float(np.mean(preds[mask] == classes[mask])),
                     "converged": all(s.converged for s in sols)})
    _write_rows(cfg.out_path("multiclass.csv"), rows)
    return rows


def save_multiclass_outputs(scores: np.ndarray, preds: np.ndarray, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    score_path = out_dir / "multiclass_scores.csv"
    with score_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"score_{c}" for c in range(scores.shape[1])] + ["prediction"])
        for i, (row, p) in enumerate(zip(scores, preds)):
            w.writerow([i] + [repr(float(v)) for v in row] + [int(p)])
    return score_path


# ---------------------------------------------------------------------------
# Consistency and KDE sweeps
# ---------------------------------------------------------------------------

def run_consistency_sweep(cfg: ExperimentConfig, spacing_factor: float = 20.0) -> list[ConsistencyReport]:
    """Quantitative indicator-kernel check at alpha = 0 on torus lattices
    with spacing h/spacing_factor: phi = x1 + x1^2 at the origin, target
    operator value 2."""
    hs = [h for _, h in cfg.levels] if cfg.levels else [cfg.h]
    phi = quadratic_test_function(np.eye(cfg.dim)[0], 2.0 * np.outer(np.eye(cfg.dim)[0], np.eye(cfg.dim)[0]))
    f = constant_density()
    reports = []
    for h in hs:
        per_side = int(round(spacing_factor / h))
        cloud = grid_cloud(per_side, cfg.dim, Metric.TORUS)
        kern = Kernel(KernelProfile.INDICATOR, h)
        reports.append(discrete_consistency_check(cloud, kern, 0.0, phi, f, x_index=0))
    rows = [{"h": r.h, "discrete": r.discrete, "continuum": r.continuum, "error": r.error} for r in reports]
    _write_rows(cfg.out_path("consistency.csv"), rows)
    return reports


def run_kde_sweep(cfg: ExperimentConfig) -> list[dict]:
    """R = sup |d - C_Phi| on uniform torus data for each (n, h) level,
    reported both raw and relative to the kernel mass."""
    levels = cfg.levels if cfg.levels else ((cfg.n, cfg.h),)
    rows = []
    for n, h in levels:
        kern = cfg.make_kernel(h)
        c_phi = kernel_integral(kern, cfg.dim)
        for trial in range(cfg.trials):
            rng = make_rng(cfg.seed, trial)
            spec = SamplerSpec(SamplerKind.UNIFORM_BOX, seed=int(rng.integers(2 ** 62)), metric=Metric.TORUS)
            cloud = sample(spec, n, cfg.dim)
            r, r_over_h = kde_error(cloud, kern, lambda x: c_phi, n)
            rows.append({"n": n, "h": h, "trial": trial, "R": r, "R_over_h": r_over_h,
                         "R_over_CPhi": r / c_phi})
    _write_rows(cfg.out_path("kde.csv"), rows)
    return rows


# ---------------------------------------------------------------------------
# IDX ingestion
# ---------------------------------------------------------------------------

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_exact(fh, count: int, offset: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise IdxFormatError(f"truncated IDX file: wanted {count} bytes for {what} at offset {offset}, "
                             f"got {len(buf)}")
    return buf


def ingest_idx(images_file, labels_file, limit: int | None = None):
    """Read big-endian IDX image/label files into a flattened Euclidean
    cloud (pixels scaled to [0, 1]) plus integer class labels."""
    images_file, labels_file = Path(images_file), Path(labels_file)
    with images_file.open("rb") as fh:
        magic, = struct.unpack(">i", _read_exact(fh, 4, 0, "magic"))
        if magic != _IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x} at offset 0 in {images_file}")
        count, rows, cols = struct.unpack(">iii", _read_exact(fh, 12, 4, "dimensions"))
        take = count if limit is None else min(limit, count)
        raw = _read_exact(fh, take * rows * cols, 16, f"{take} images")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(take, rows * cols)
    with labels_file.open("rb") as fh:
        magic, = struct.unpack(">i", _read_exact(fh, 4, 0, "magic"))
        if magic != _IDX_LABELS_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x} at offset 0 in {labels_file}")
        lcount, = struct.unpack(">i", _read_exact(fh, 4, 4, "count"))
        if lcount != count:
            raise IdxFormatError(f"label count {lcount} does not match image count {count}")
        raw = _read_exact(fh, take, 8, f"{take} labels")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    cloud = PointCloud(pixels.astype(np.float64) / 255.0, Metric.EUCLIDEAN)
    return cloud, labels


def _write_rows(path, rows: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow(row)
