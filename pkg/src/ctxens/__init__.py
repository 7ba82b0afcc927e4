"""Contextual anomaly detection with actively learned context importances.

The pipeline: enumerate every context/behavior split of the feature set,
fit a per-context two-step detector (reference groups in contextual space,
one isolation forest per group, scores unified to [0, 1]), spend a small
label budget to estimate how trustworthy each context is, then combine the
per-context scores as a pruned importance-weighted ensemble.
"""
from .active import (
    ActiveSession,
    AuditRecord,
    ImportanceState,
    PendingQuery,
    QueryStrategy,
    STRATEGY_KINDS,
    audit_to_jsonl,
    detection_error,
    importance,
    margin_rate,
    predictions,
    run_active_loop,
    sample_weight,
    select_query,
)
from .contexts import (
    MAX_ENUMERABLE_DIM,
    PcaProjection,
    Standardizer,
    apply_pca,
    enumerate_contexts,
    fit_pca,
    fit_standardizer,
)
from .data import (
    Context,
    ContextSet,
    Dataset,
    LabeledPool,
    ScoreMatrix,
    stratified_split,
    validate_dataset,
)
from .datagen import (
    BUILTIN_DATASETS,
    ContextBlock,
    GeneratorSpec,
    builtin_dataset,
    generate_conditional,
    generate_global,
    inject_behavioral_swaps,
    load_csv,
    save_csv,
    save_manifest,
)
from .detector import (
    ContextModel,
    DetectorConfig,
    build_score_matrix,
    fit_context_model,
    score_unified,
    unify,
)
from .ensemble import (
    COMBINER_KINDS,
    EnsembleResult,
    combine,
    combine_average,
    combine_maximum,
    combine_weighted,
    prune,
    score_test,
    select_single,
)
from .evaluation import (
    ExperimentConfig,
    ExperimentReport,
    auc_pr,
    auc_roc,
    confidence_histogram,
    context_performance_distribution,
    fit_pipeline,
    run_experiment,
    summarize_reports,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # data
    "Context",
    "ContextSet",
    "Dataset",
    "LabeledPool",
    "ScoreMatrix",
    "stratified_split",
    "validate_dataset",
    # contexts
    "MAX_ENUMERABLE_DIM",
    "PcaProjection",
    "Standardizer",
    "apply_pca",
    "enumerate_contexts",
    "fit_pca",
    "fit_standardizer",
    # detector
    "ContextModel",
    "DetectorConfig",
    "build_score_matrix",
    "fit_context_model",
    "score_unified",
    "unify",
    # active loop
    "ActiveSession",
    "AuditRecord",
    "ImportanceState",
    "PendingQuery",
    "QueryStrategy",
    "STRATEGY_KINDS",
    "audit_to_jsonl",
    "detection_error",
    "importance",
    "margin_rate",
    "predictions",
    "run_active_loop",
    "sample_weight",
    "select_query",
    # ensemble
    "COMBINER_KINDS",
    "EnsembleResult",
    "combine",
    "combine_average",
    "combine_maximum",
    "combine_weighted",
    "prune",
    "score_test",
    "select_single",
    # datagen
    "BUILTIN_DATASETS",
    "ContextBlock",
    "GeneratorSpec",
    "builtin_dataset",
    "generate_conditional",
    "generate_global",
    "inject_behavioral_swaps",
    "load_csv",
    "save_csv",
    "save_manifest",
    # evaluation
    "ExperimentConfig",
    "ExperimentReport",
    "auc_pr",
    "auc_roc",
    "confidence_histogram",
    "context_performance_distribution",
    "fit_pipeline",
    "run_experiment",
    "summarize_reports",
]
