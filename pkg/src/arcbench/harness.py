"""Experiment orchestration over a task stream.

A run trains the shared head sequentially (task by task, optionally with a
small replay reservoir) and evaluates every seen test set twice after each
stage: plain argmax and the full test-time pipeline. Accuracies land in two
lower-triangular matrices from which the summary metrics derive. Harness RNG
substreams are keyed (seed, stage, tag[, extra]) with the tags below.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .arc import ArcConfig, ArcEvalResult, PredictionRecord, arc_evaluate
from .core import LinearHead, TaskLayout, TrainConfig, expand_head, fit_task, forward, new_head
from .data import TaskStream
from .otd import OtdDecision, Thresholds
from .seeding import substream

TRAIN_TAG = 11
EVAL_TAG = 12
REPLAY_TAG = 13
PROBE_TAG = 14


@dataclass
class RMatrix:
    """Lower-triangular accuracy matrix: entry (stage t, task i) for i <= t."""

    values: np.ndarray  # (N, N), NaN where unfilled

    @classmethod
    def empty(cls, num_tasks: int) -> "RMatrix":
        if num_tasks < 1:
            raise ValueError("num_tasks must be >= 1")
        return cls(np.full((num_tasks, num_tasks), np.nan))

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    def set_entry(self, stage: int, task: int, accuracy: float) -> None:
        if not 1 <= task <= stage <= self.num_tasks:
            raise ValueError(f"entry ({stage}, {task}) outside the lower triangle")
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy {accuracy} outside [0, 1]")
        self.values[stage - 1, task - 1] = accuracy

    def entry(self, stage: int, task: int) -> float:
        v = self.values[stage - 1, task - 1]
        if np.isnan(v):
            raise ValueError(f"entry ({stage}, {task}) not filled")
        return float(v)

    def row(self, stage: int) -> np.ndarray:
        return self.values[stage - 1, :stage]


def average_accuracy(r: RMatrix) -> float:
    """Mean of the final row: (1/T) * sum_i R[T][i]."""
    final = r.row(r.num_tasks)
    if np.any(np.isnan(final)):
        raise ValueError("final row incomplete")
    return float(np.mean(final))


def forgetting(r: RMatrix) -> float:
    """Mean drop from each task's own-stage accuracy to its final accuracy."""
    t = r.num_tasks
    if t < 2:
        raise ValueError("forgetting undefined for a single task")
    drops = [r.entry(i, i) - r.entry(t, i) for i in range(1, t)]
    return float(np.mean(drops))


def bias_histogram(
    predicted: np.ndarray, labels: np.ndarray, layout: TaskLayout, visible_tasks: int
) -> np.ndarray:
    """Bucket each wrong prediction by the task owning its predicted class.

    Input arrays are one entry per evaluated sample (typically the first
    task's test set after the final stage); counts[j-1] is the number of
    wrong predictions landing in task j's class range.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if visible_tasks < 2:
        raise ValueError("bias histogram needs at least two visible tasks")
    if predicted.shape != labels.shape:
        raise ValueError("predicted and labels must align")
    if len(predicted) and (predicted.min() < 0 or predicted.max() >= layout.step * visible_tasks):
        raise ValueError("predicted classes outside the visible range")
    wrong = predicted != labels
    return np.bincount(predicted[wrong] // layout.step, minlength=visible_tasks)


@dataclass
class MetricsReport:
    """Summary of one evaluation pipeline over a full run."""

    seed: int
    pipeline: str  # "arc" or "baseline"
    average_accuracy: float
    forgetting: float | None  # None for single-task streams
    stage_accuracy: list[float]  # mean over seen tasks after each stage
    config: dict


@dataclass
class StageTrace:
    """Pipeline records for one stage's shuffled test stream, with ground truth."""

    stage: int
    records: list[PredictionRecord]
    true_labels: np.ndarray
    true_tasks: np.ndarray
    retention_updates: int
    warnings: list[str]


@dataclass
class OtdValidationReport:
    """How well the two detection branches match ground truth.

    Precisions are None when nothing was flagged; counts are kept so every
    ratio can be recomputed from persisted records.
    """

    assumption1_precision: float | None
    assumption2_precision: float | None
    assumption1_rate: float
    assumption2_rate: float
    flagged1: int
    flagged1_true: int
    flagged2: int
    flagged2_true: int
    samples: int


@dataclass
class ProbeRow:
    stage: int
    task: int
    independent_accuracy: float
    shared_accuracy: float


@dataclass
class RunResult:
    seed: int
    r_with_arc: RMatrix
    r_without_arc: RMatrix
    metrics_with_arc: MetricsReport
    metrics_without_arc: MetricsReport
    stage_heads: list[LinearHead]
    arc_traces: list[StageTrace]
    bias_histogram: np.ndarray | None  # None for single-task streams
    task1_predictions: np.ndarray | None
    task1_labels: np.ndarray | None


def train_sequence(stream: TaskStream, train_cfg: TrainConfig, seed: int) -> list[LinearHead]:
    """Sequential training; returns the head as of the end of each stage."""
    layout = stream.layout
    head = new_head(stream.dim, layout.step)
    heads: list[LinearHead] = []
    replay_x: list[np.ndarray] = []
    replay_y: list[np.ndarray] = []
    for t in range(1, layout.num_tasks + 1):
        if t > 1:
            head = expand_head(head, layout)
        data = stream.train[t - 1]
        x, y = data.features, data.labels
        if replay_x:
            x = np.vstack([x, *replay_x])
            y = np.concatenate([y, *replay_y])
        head = fit_task(head, x, y, train_cfg, seed=(seed, t, TRAIN_TAG))
        heads.append(head)
        if train_cfg.replay_per_class > 0:
            for cls in layout.class_range(t):
                mask = np.flatnonzero(data.labels == cls)
                keep = min(train_cfg.replay_per_class, len(mask))
                rng = substream(seed, t, REPLAY_TAG, cls)
                picks = mask[rng.choice(len(mask), size=keep, replace=False)]
                replay_x.append(data.features[picks])
                replay_y.append(data.labels[picks])
    return heads


def _plain_stage_accuracies(stream: TaskStream, head: LinearHead, t: int) -> np.ndarray:
    accs = np.empty(t)
    for i in range(1, t + 1):
        data = stream.test[i - 1]
        preds = forward(head, data.features).argmax(axis=1)
        accs[i - 1] = np.mean(preds == data.labels)
    return accs


def _arc_stage_eval(
    stream: TaskStream, head: LinearHead, t: int, cfg: ArcConfig, seed: int
) -> tuple[np.ndarray, StageTrace]:
    """Evaluate tasks 1..t as one shuffled online stream through the pipeline."""
    x = np.vstack([stream.test[i - 1].features for i in range(1, t + 1)])
    y = np.concatenate([stream.test[i - 1].labels for i in range(1, t + 1)])
    tasks = np.concatenate(
        [np.full(len(stream.test[i - 1]), i, dtype=np.int64) for i in range(1, t + 1)]
    )
    perm = substream(seed, t, EVAL_TAG).permutation(len(y))
    x, y, tasks = x[perm], y[perm], tasks[perm]
    batches = [x[i : i + cfg.batch_size] for i in range(0, len(y), cfg.batch_size)]
    result: ArcEvalResult = arc_evaluate(head, batches, t, stream.layout.step, cfg)
    final = np.fromiter((r.final_class for r in result.records), dtype=np.int64, count=len(y))
    accs = np.empty(t)
    for i in range(1, t + 1):
        mask = tasks == i
        accs[i - 1] = np.mean(final[mask] == y[mask])
    trace = StageTrace(t, result.records, y, tasks, result.retention_updates, result.warnings)
    return accs, trace


def _metrics(
    seed: int, pipeline: str, r: RMatrix, config: dict
) -> MetricsReport:
    n = r.num_tasks
    return MetricsReport(
        seed=seed,
        pipeline=pipeline,
        average_accuracy=average_accuracy(r),
        forgetting=forgetting(r) if n >= 2 else None,
        stage_accuracy=[float(np.mean(r.row(t))) for t in range(1, n + 1)],
        config=config,
    )


def _config_echo(train_cfg: TrainConfig, arc_cfg: ArcConfig) -> dict:
    return {"train": asdict(train_cfg), "arc": asdict(arc_cfg)}


def run_stream(
    stream: TaskStream,
    train_cfg: TrainConfig,
    arc_cfg: ArcConfig,
    seed: int,
) -> RunResult:
    """Full protocol: sequential training plus paired plain / pipeline evaluation.

    Pipeline-side head updates never leak across stages: each stage's online
    evaluation starts from that stage's trained head and its updates are
    discarded afterwards.
    """
    stream.validate()
    layout = stream.layout
    n = layout.num_tasks
    heads = train_sequence(stream, train_cfg, seed)

    r_arc = RMatrix.empty(n)
    r_plain = RMatrix.empty(n)
    traces: list[StageTrace] = []
    for t, head in enumerate(heads, start=1):
        for i, acc in enumerate(_plain_stage_accuracies(stream, head, t), start=1):
            r_plain.set_entry(t, i, float(acc))
        stage_cfg = arc_cfg.for_stage(is_final_stage=(t == n))
        accs, trace = _arc_stage_eval(stream, head, t, stage_cfg, seed)
        for i, acc in enumerate(accs, start=1):
            r_arc.set_entry(t, i, float(acc))
        traces.append(trace)

    bias = task1_preds = task1_labels = None
    if n >= 2:
        data = stream.test[0]
        task1_preds = forward(heads[-1], data.features).argmax(axis=1)
        task1_labels = data.labels
        bias = bias_histogram(task1_preds, task1_labels, layout, n)

    echo = _config_echo(train_cfg, arc_cfg)
    return RunResult(
        seed=seed,
        r_with_arc=r_arc,
        r_without_arc=r_plain,
        metrics_with_arc=_metrics(seed, "arc", r_arc, echo),
        metrics_without_arc=_metrics(seed, "baseline", r_plain, echo),
        stage_heads=heads,
        arc_traces=traces,
        bias_histogram=bias,
        task1_predictions=task1_preds,
        task1_labels=task1_labels,
    )


def otd_validation(traces: list[StageTrace]) -> OtdValidationReport:
    """Precision and flag rates of the two detection branches vs ground truth.

    A PAST_CORRECT flag counts as true when the sample really is from a past
    task and its initial prediction matched the ground-truth label; a
    PAST_MISCLASSIFIED flag counts as true when the sample is from a past task.
    """
    flagged1 = flagged1_true = flagged2 = flagged2_true = samples = 0
    for trace in traces:
        samples += len(trace.records)
        for rec, label, task in zip(trace.records, trace.true_labels, trace.true_tasks):
            is_past = task < trace.stage
            if rec.decision is OtdDecision.PAST_CORRECT:
                flagged1 += 1
                flagged1_true += int(is_past and rec.initial_class == label)
            elif rec.decision is OtdDecision.PAST_MISCLASSIFIED:
                flagged2 += 1
                flagged2_true += int(is_past)
    return OtdValidationReport(
        assumption1_precision=flagged1_true / flagged1 if flagged1 else None,
        assumption2_precision=flagged2_true / flagged2 if flagged2 else None,
        assumption1_rate=flagged1 / samples if samples else 0.0,
        assumption2_rate=flagged2 / samples if samples else 0.0,
        flagged1=flagged1,
        flagged1_true=flagged1_true,
        flagged2=flagged2,
        flagged2_true=flagged2_true,
        samples=samples,
    )


def linear_probe_experiment(
    stream: TaskStream, train_cfg: TrainConfig, seed: int
) -> list[ProbeRow]:
    """Per-task probe heads vs the shared sequential head on past test sets.

    After each stage t, a fresh step-wide head is trained on each past task
    i < t alone (same epoch budget as the shared head) and both are scored on
    task i's test set. The widening gap is the shared classifier's bias.
    """
    stream.validate()
    layout = stream.layout
    heads = train_sequence(stream, train_cfg, seed)
    rows: list[ProbeRow] = []
    for t in range(2, layout.num_tasks + 1):
        shared = heads[t - 1]
        for i in range(1, t):
            train = stream.train[i - 1]
            test = stream.test[i - 1]
            base = layout.step * (i - 1)
            probe = fit_task(
                new_head(stream.dim, layout.step),
                train.features,
                train.labels - base,
                train_cfg,
                seed=(seed, t, PROBE_TAG, i),
            )
            probe_acc = np.mean(
                forward(probe, test.features).argmax(axis=1) == test.labels - base
            )
            shared_acc = np.mean(
                forward(shared, test.features).argmax(axis=1) == test.labels
            )
            rows.append(ProbeRow(t, i, float(probe_acc), float(shared_acc)))
    return rows


@dataclass(frozen=True)
class Variant:
    """One cell of the ablation grid over the pipeline's knobs."""

    loss: str = "both"         # retention objective: "ce" | "em" | "both"
    temperature: str = "on"    # "on" = configured value, "off" = 1.0
    w_mode: str = "ratio"      # "ratio" | "raw"
    beta: float = 0.8
    gamma: float = 0.8

    def __post_init__(self):
        if self.loss not in ("ce", "em", "both"):
            raise ValueError(f"unknown loss variant {self.loss!r}")
        if self.temperature not in ("on", "off"):
            raise ValueError(f"unknown temperature variant {self.temperature!r}")
        if self.w_mode not in ("ratio", "raw"):
            raise ValueError(f"unknown w_mode variant {self.w_mode!r}")

    def key(self) -> str:
        return (
            f"loss={self.loss},temp={self.temperature},w={self.w_mode},"
            f"beta={self.beta:g},gamma={self.gamma:g}"
        )

    def apply(self, base: ArcConfig) -> ArcConfig:
        return replace(
            base,
            thresholds=Thresholds(self.beta, self.gamma),
            temperature=base.temperature if self.temperature == "on" else 1.0,
            w_mode=self.w_mode,
            retention_loss=self.loss,
        )


def ablation_grid(
    stream: TaskStream,
    train_cfg: TrainConfig,
    base_arc: ArcConfig,
    variants: list[Variant],
    seed: int,
) -> list[tuple[Variant, MetricsReport]]:
    """One pipeline MetricsReport per variant; training is shared across them."""
    if not variants:
        return []
    stream.validate()
    layout = stream.layout
    n = layout.num_tasks
    heads = train_sequence(stream, train_cfg, seed)
    out: list[tuple[Variant, MetricsReport]] = []
    for variant in variants:
        cfg = variant.apply(base_arc)
        r = RMatrix.empty(n)
        for t, head in enumerate(heads, start=1):
            stage_cfg = cfg.for_stage(is_final_stage=(t == n))
            accs, _ = _arc_stage_eval(stream, head, t, stage_cfg, seed)
            for i, acc in enumerate(accs, start=1):
                r.set_entry(t, i, float(acc))
        echo = _config_echo(train_cfg, cfg)
        echo["variant"] = variant.key()
        out.append((variant, _metrics(seed, "arc", r, echo)))
    return out
