"""prunescope: train, prune, corrupt, and compare small classifiers
through the geometry of their penultimate feature space."""

from .nn import (
    DimensionMismatch,
    Gradients,
    LabeledDataset,
    Layer,
    Network,
    NetworkSpec,
    TrainConfig,
    TrainingDiverged,
    accuracy,
    backward,
    finite_diff_importance,
    forward,
    init_network,
    loss,
    predict,
    train,
)
from .pruning import (
    BipropConfig,
    ImportanceScores,
    PruneMask,
    apply_mask,
    biprop_train,
    default_prunable_layers,
    prune_by_scores,
    prune_magnitude,
    prune_random,
    sparsity,
    taylor_importance,
)
from .geometry import (
    ClassDirections,
    DegenerateFeature,
    GeometrySample,
    GeometrySnapshot,
    angle,
    angles_to_all,
    class_directions,
    decompose_probability,
    geometry_snapshot,
    margin,
    signed_margin,
)
from .corruption import (
    CORRUPTION_TYPES,
    DEFAULT_DESK_TYPES,
    SEVERITIES,
    SEVERITY_TABLES,
    ArchiveError,
    CorruptedDataset,
    CorruptionSpec,
    RobustnessRecord,
    aggregate_robustness,
    build_suite,
    corrupt,
    export_archive,
    ingest_archive,
    per_sample_robustness,
)
from .stats import (
    AngleExperimentResult,
    CorrelationReport,
    DensityCurve,
    MarginChangeResult,
    UndefinedCorrelation,
    density,
    metric_robustness_correlations,
    pearson,
    random_angle_experiment,
    relative_margin_change,
)
from .registry import (
    Combination,
    DuplicateCombination,
    EvaluationRow,
    EvaluationTable,
    MissingSnapshot,
    Registry,
    RegistryError,
    SubsetSelection,
    TrajectoryPair,
    TrajectoryResult,
    corrupted_dataset_id,
    join_trajectories,
    metric_difference_select,
    parse_corrupted_id,
)

__version__ = "0.1.0"
