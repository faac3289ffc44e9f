"""Graph-based Lipschitz learning with self-tuning weights.

Labels on a few vertices of a geometric graph are extended to the rest by
solving the graph infinity-Laplace equation (max + min of weighted
differences equal to zero) with a monotone fixed-point iteration. Edge
weights can be modulated by a kernel density estimate of the unlabeled
data, which makes the extension sensitive to the data distribution; the
exponent alpha controls how strongly.
"""

from .analysis import (
    ConsistencyReport,
    DensityModel,
    SmoothTestFunction,
    constant_density,
    continuum_operator,
    discrete_consistency_check,
    kde_error,
    linear_test_function,
    quadratic_test_function,
    smoothed_dip_density,
    trigonometric_density,
    trigonometric_test_function,
)
from .geometry import (
    Metric,
    PointCloud,
    SamplerKind,
    SamplerSpec,
    distance,
    fill_distance,
    grid_cloud,
    k_nearest,
    load_points_csv,
    make_rng,
    neighbors_within,
    sample,
    save_points_csv,
)
from .graph import (
    Kernel,
    KernelProfile,
    KnnWeightRule,
    WeightedGraph,
    base_weights,
    degrees,
    kernel_graph,
    kernel_integral,
    knn_self_tuning_weights,
    load_graph_text,
    normalize_max_weight,
    save_graph_text,
    self_tuning_weights,
)
from .harness import (
    ClassificationResult,
    ExperimentConfig,
    IdxFormatError,
    ingest_idx,
    load_config,
    run_multiclass,
    run_oracle1d_validation,
    run_surface2d,
    run_synth_classify,
)
from .oracle import (
    OneDModel,
    accuracy_by_crossing,
    closed_form_accuracy,
    eval_u_alpha,
    pair_density_oracle,
    variational_grid_oracle,
    zero_crossing,
)
from .solver import (
    GraphConnectivityError,
    Init,
    LabelProblem,
    Solution,
    SolverError,
    inf_laplacian,
    lipschitz_gradient,
    solve,
    verify_comparison,
)

__version__ = "0.1.0"
