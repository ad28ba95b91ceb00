__version__ = "0.1.0"

from .datamodel import (
    DimensionSet,
    ManifestKind,
    PairRole,
    SampleRecord,
    ScoreScale,
    Violation,
)
from .dataset_io import (
    DatasetManifest,
    binarize_median,
    binarize_threshold,
    load_manifest,
    normalize_manifest_scores,
    reformulate_to_pairwise,
    save_manifest,
    validate_manifest,
)
from .embedding_store import (
    EmbeddingStore,
    ToyFeaturizerConfig,
    featurize_manifest,
    read_store,
    store_from_entries,
    write_store,
)
from .errors import (
    DatasetValidationError,
    DegenerateCorrelationError,
    DivergenceError,
    EmptyInputError,
    ManifestParseError,
    MissingEmbeddingError,
    RewardKitError,
    SingularSystemError,
    StoreFormatError,
    StoreTruncatedError,
    UsageError,
)
from .harness import (
    DEFAULT_BINARY_GOLD_THRESHOLD,
    BenchReport,
    EvalReport,
    bench,
    evaluate,
    format_table,
    render_report,
    report_to_dict,
)
from .metrics import (
    PairOutcome,
    binary_accuracy,
    kendall_tau_b,
    kendall_tau_c,
    level_accuracy,
    pairwise_accuracy,
)
from .multi_head import (
    DEFAULT_ALPHA_GRID,
    AlphaTrace,
    MultiObjectiveRidge,
    RidgeModel,
    alpha_search,
    fit_ridge,
    load_ridge_model,
    predict_multi,
    save_ridge_model,
    train_multi,
)
from .reward_head import (
    RewardHead,
    RewardHeadModel,
    TrainConfig,
    init_head,
    init_std,
    load_reward_head,
    predict_reward,
    save_reward_head,
    train_reward,
)

__all__ = [
    "__version__",
    "DatasetManifest",
    "DimensionSet",
    "ManifestKind",
    "PairRole",
    "SampleRecord",
    "ScoreScale",
    "Violation",
    "binarize_median",
    "binarize_threshold",
    "load_manifest",
    "normalize_manifest_scores",
    "reformulate_to_pairwise",
    "save_manifest",
    "validate_manifest",
    "EmbeddingStore",
    "ToyFeaturizerConfig",
    "featurize_manifest",
    "read_store",
    "store_from_entries",
    "write_store",
    "DatasetValidationError",
    "DegenerateCorrelationError",
    "DivergenceError",
    "EmptyInputError",
    "ManifestParseError",
    "MissingEmbeddingError",
    "RewardKitError",
    "SingularSystemError",
    "StoreFormatError",
    "StoreTruncatedError",
    "UsageError",
    "DEFAULT_BINARY_GOLD_THRESHOLD",
    "BenchReport",
    "EvalReport",
    "bench",
    "evaluate",
    "format_table",
    "render_report",
    "report_to_dict",
    "PairOutcome",
    "binary_accuracy",
    "kendall_tau_b",
    "kendall_tau_c",
    "level_accuracy",
    "pairwise_accuracy",
    "DEFAULT_ALPHA_GRID",
    "AlphaTrace",
    "MultiObjectiveRidge",
    "RidgeModel",
    "alpha_search",
    "fit_ridge",
    "load_ridge_model",
    "predict_multi",
    "save_ridge_model",
    "train_multi",
    "RewardHead",
    "RewardHeadModel",
    "TrainConfig",
    "init_head",
    "init_std",
    "load_reward_head",
    "predict_reward",
    "save_reward_head",
    "train_reward",
]
