"""Set matching for detection-style problems.

Builds cost matrices between predicted and true object sets, then matches
them three ways: exact one-to-one assignment (Hungarian), entropic optimal
transport (Sinkhorn, plain or log-domain), and KL-relaxed unbalanced
transport plans that can split, shed, or reweight mass.  Includes a
deterministic scene generator and an experiment harness behind the
``setmatch`` command-line tool.
"""

from ._backend import available_backends, default_backend
from .cost import (
    CostMatrix,
    CostWeights,
    background_augmented_cost,
    classification_cost,
    default_background_cost,
    pairwise_cost_matrix,
)
from .geometry import BBox, giou, giou_rescaled, iou, l1_box_distance
from .harness import (
    AblationCell,
    ComparisonRecord,
    SweepRecord,
    TimingRecord,
    ablation_grid,
    compare_matchers,
    emit_heatmap,
    epsilon_sweep,
    fit_loglog_slope,
    giou_similarity_matrix,
    match_quality,
    timing_benchmark,
)
from .scenes import (
    GroundTruth,
    Prediction,
    Scene,
    SceneConfig,
    SceneFormatError,
    canonical_scene,
    generate_scene,
    load_scene,
    save_scene,
)
from .solvers import (
    Assignment,
    Marginals,
    SinkhornNumericalError,
    SolverDiagnostics,
    TransportPlan,
    adaptive_epsilon,
    brute_force_assignment,
    entropy,
    extract_hard_matches,
    hungarian,
    regularized_objective,
    rtp_unbalanced,
    sinkhorn_balanced,
    sinkhorn_log_domain,
    transport_cost,
)

__version__ = "0.1.0"

__all__ = [
    "AblationCell",
    "Assignment",
    "BBox",
    "ComparisonRecord",
    "CostMatrix",
    "CostWeights",
    "GroundTruth",
    "Marginals",
    "Prediction",
    "Scene",
    "SceneConfig",
    "SceneFormatError",
    "SinkhornNumericalError",
    "SolverDiagnostics",
    "SweepRecord",
    "TimingRecord",
    "TransportPlan",
    "ablation_grid",
    "adaptive_epsilon",
    "available_backends",
    "background_augmented_cost",
    "brute_force_assignment",
    "canonical_scene",
    "classification_cost",
    "compare_matchers",
    "default_background_cost",
    "default_backend",
    "emit_heatmap",
    "entropy",
    "epsilon_sweep",
    "extract_hard_matches",
    "fit_loglog_slope",
    "generate_scene",
    "giou",
    "giou_rescaled",
    "giou_similarity_matrix",
    "hungarian",
    "iou",
    "l1_box_distance",
    "load_scene",
    "match_quality",
    "pairwise_cost_matrix",
    "regularized_objective",
    "rtp_unbalanced",
    "save_scene",
    "sinkhorn_balanced",
    "sinkhorn_log_domain",
    "timing_benchmark",
    "transport_cost",
]
