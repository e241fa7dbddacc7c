"""Constrained latent max-margin clustering with interactive feedback.

Pipeline: trajectories -> latent feature variants -> margin-based
clustering under must-link/cannot-link constraints and cluster-size bounds
-> iterative refinement from (real or simulated) user feedback.
"""

from .assignment import (
    BalanceBounds,
    ConstraintSet,
    ContradictionError,
    InfeasibleError,
    assignment_cost,
    canonicalize,
    solve_exact,
    solve_heuristic,
    validate,
)
from .evaluation import LabeledPartition, kmeans, nmi, purity, rand_index
from .features import (
    GaussianMixture,
    PercentileBins,
    SceneContext,
    Trajectory,
    VariantSpec,
    build_dataset,
    build_sample,
    distance_histogram,
    fit_gmm,
    load_trajectories,
    nearest_entities,
    percentile_edges,
    soft_histogram,
    velocity_feature,
)
from .feedback import (
    ClusteringSession,
    FeedbackBatch,
    FeedbackLog,
    derive_constraints,
    manually_labeled_purity,
    run_feedback_loop,
    simulate_user,
)
from .model import (
    Assignment,
    FeatureVariant,
    ModelParams,
    Sample,
    objective,
    score,
    score_matrix,
)
from .synth import ClassArchetype, SyntheticSpec, default_archetypes, generate_synthetic
from .training import SolveReport, SolveSpec, alternate, bounds_from_fractions, init_params, update_weights

__version__ = "0.1.0"
