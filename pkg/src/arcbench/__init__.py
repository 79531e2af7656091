"""Class-incremental learning benchmark with test-time classifier retention
and correction over frozen feature vectors."""

__version__ = "0.1.0"

from .arc import (
    ArcConfig,
    ArcEvalResult,
    PredictionRecord,
    adaptive_correction,
    adaptive_retention,
    arc_evaluate,
    tss,
)
from .core import (
    EPS_LOG,
    LinearHead,
    TaskLayout,
    TrainConfig,
    cross_entropy,
    entropy,
    expand_head,
    fit_task,
    forward,
    new_head,
    retention_gradient,
    sgd_step,
    softmax,
)
from .data import (
    EmbeddingFormatError,
    SyntheticSpec,
    TaskData,
    TaskStream,
    generate_synthetic,
    load_embeddings,
    streams_equal,
    write_embeddings,
)
from .harness import (
    MetricsReport,
    OtdValidationReport,
    ProbeRow,
    RMatrix,
    RunResult,
    StageTrace,
    Variant,
    ablation_grid,
    average_accuracy,
    bias_histogram,
    forgetting,
    linear_probe_experiment,
    otd_validation,
    run_stream,
    train_sequence,
)
from .otd import (
    ConfidenceReport,
    OtdDecision,
    Thresholds,
    classify_sample,
    confidence,
    masked_confidence,
)

__all__ = [
    "ArcConfig",
    "ArcEvalResult",
    "ConfidenceReport",
    "EPS_LOG",
    "EmbeddingFormatError",
    "LinearHead",
    "MetricsReport",
    "OtdDecision",
    "OtdValidationReport",
    "PredictionRecord",
    "ProbeRow",
    "RMatrix",
    "RunResult",
    "StageTrace",
    "SyntheticSpec",
    "TaskData",
    "TaskLayout",
    "TaskStream",
    "Thresholds",
    "TrainConfig",
    "Variant",
    "ablation_grid",
    "adaptive_correction",
    "adaptive_retention",
    "arc_evaluate",
    "average_accuracy",
    "bias_histogram",
    "classify_sample",
    "confidence",
    "cross_entropy",
    "entropy",
    "expand_head",
    "fit_task",
    "forgetting",
    "forward",
    "generate_synthetic",
    "linear_probe_experiment",
    "load_embeddings",
    "masked_confidence",
    "new_head",
    "otd_validation",
    "retention_gradient",
    "run_stream",
    "sgd_step",
    "softmax",
    "streams_equal",
    "train_sequence",
    "tss",
    "write_embeddings",
]
