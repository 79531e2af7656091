"""Test-time retention and correction over an online stream of batches.

Flagged past-task samples drive a single classifier gradient update per batch
(retention); suspected misclassifications into the current task are relabeled
through per-task softmax scores (correction). The evaluation loop visits each
batch exactly once and never revisits a sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .core import EPS_LOG, LinearHead, forward, sgd_step, softmax
from .otd import ConfidenceReport, OtdDecision, Thresholds, classify_sample

W_MODES = ("ratio", "raw")
RETENTION_LOSSES = ("both", "ce", "em")


@dataclass(frozen=True)
class ArcConfig:
    """Settings for the test-time pipeline.

    ``temperature`` flattens earlier tasks' score prefixes; 1.0 disables the
    scaling (ablation mode), the standard setting is > 1. ``arc_last``
    restricts retention/correction to the final stage.
    """

    thresholds: Thresholds = field(default_factory=Thresholds)
    temperature: float = 2.0
    lr: float = 0.1
    retention_enabled: bool = True
    correction_enabled: bool = True
    batch_size: int = 64
    arc_last: bool = False
    w_mode: str = "ratio"
    retention_loss: str = "both"

    def __post_init__(self):
        if not self.temperature >= 1.0:
            raise ValueError(f"temperature must be >= 1, got {self.temperature}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.w_mode not in W_MODES:
            raise ValueError(f"w_mode must be one of {W_MODES}, got {self.w_mode!r}")
        if self.retention_loss not in RETENTION_LOSSES:
            raise ValueError(
                f"retention_loss must be one of {RETENTION_LOSSES}, got {self.retention_loss!r}"
            )

    def for_stage(self, is_final_stage: bool) -> "ArcConfig":
        """Stage-effective config: with arc_last, only the final stage adapts."""
        if not self.arc_last or is_final_stage:
            return self
        return replace(self, retention_enabled=False, correction_enabled=False)


def tss(z: np.ndarray, t: int, s: int, temperature: float) -> np.ndarray:
    """Per-task softmax scores S_1..S_t.

    The score for task i is the max softmax probability over task i's class
    block, with the softmax taken over only the first s*i logits after
    dividing them by temperature**(t - i). Later tasks' logits never enter
    earlier tasks' scores.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (s * t,):
        raise ValueError(f"expected {s * t} logits, got shape {z.shape}")
    if not temperature >= 1.0:
        raise ValueError(f"temperature must be >= 1, got {temperature}")
    scores = np.empty(t)
    for i in range(1, t + 1):
        p = softmax(z[: s * i] / temperature ** (t - i))
        scores[i - 1] = np.max(p[s * (i - 1) : s * i])
    return scores


def adaptive_correction(
    z: np.ndarray, t: int, s: int, temperature: float
) -> tuple[int, int, np.ndarray]:
    """Reassign a suspected misclassification to its most plausible task.

    Returns (chosen task, corrected class, scores). The chosen task is the
    argmax of the per-task scores (lowest index on ties) and the corrected
    class is the raw-logit argmax inside that task's class range.
    """
    scores = tss(z, t, s, temperature)
    task = int(np.argmax(scores)) + 1
    lo = s * (task - 1)
    cls = lo + int(np.argmax(z[lo : lo + s]))
    return task, cls, scores


def adaptive_retention(
    head: LinearHead,
    features: np.ndarray,
    pseudo_labels: np.ndarray,
    cfg: ArcConfig,
) -> tuple[LinearHead, np.ndarray, bool]:
    """One mean-gradient SGD update of the head on a batch of flagged samples.

    The pseudo-label of each sample is its own predicted class; only the
    classifier moves, never the features. Returns the (possibly) updated
    head, fresh argmax predictions for the batch, and whether the step was
    applied (a non-finite loss or gradient skips the step).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(pseudo_labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != head.dim:
        raise ValueError(f"features shape {x.shape} incompatible with head dim {head.dim}")
    n = x.shape[0]
    if n == 0:
        return head, np.empty(0, dtype=np.int64), False

    include_ce = cfg.retention_loss in ("both", "ce")
    include_em = cfg.retention_loss in ("both", "em")
    # batched form of the per-sample gradient; for a single sample this
    # reduces bit-for-bit to retention_gradient followed by sgd_step
    p = softmax(forward(head, x))
    logp = np.log(np.clip(p, EPS_LOG, None))
    dz = np.zeros_like(p)
    loss = 0.0
    if include_ce:
        loss += -logp[np.arange(n), y].sum()
        dz += p
        dz[np.arange(n), y] -= 1.0
    if include_em:
        ent = -(p * logp).sum(axis=1)
        loss += ent.sum()
        dz += -p * (logp + ent[:, None])
    dw = dz.T @ x
    dw /= n
    db = dz.sum(axis=0)
    db /= n
    loss /= n
    if not (np.isfinite(loss) and np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
        return head, forward(head, x).argmax(axis=1), False
    updated = sgd_step(head, dw, db, cfg.lr)
    return updated, forward(updated, x).argmax(axis=1), True


@dataclass
class PredictionRecord:
    """Trace of one test sample through the pipeline."""

    initial_class: int
    final_class: int
    decision: OtdDecision
    report: ConfidenceReport
    tss: tuple[float, ...] | None = None
    retention_applied: bool = False


@dataclass
class ArcEvalResult:
    records: list[PredictionRecord]
    head: LinearHead
    retention_updates: int
    warnings: list[str]


def arc_evaluate(
    head: LinearHead,
    batches: Iterable[np.ndarray],
    t: int,
    s: int,
    cfg: ArcConfig,
) -> ArcEvalResult:
    """Run the full test-time loop over an ordered stream of feature batches.

    For each batch: classify every sample against the head as of the batch's
    arrival; if retention is enabled, the PAST_CORRECT subset feeds exactly
    one gradient update and those samples are re-predicted with the updated
    head; if correction is enabled, PAST_MISCLASSIFIED samples are relabeled
    from their arrival logits. Updates only ever affect later batches.
    """
    if head.visible_tasks != t:
        raise ValueError(f"head sees {head.visible_tasks} tasks, expected {t}")
    if head.num_classes != s * t:
        raise ValueError("head width inconsistent with s * t")

    raw_w = cfg.w_mode == "raw"
    records: list[PredictionRecord] = []
    warnings: list[str] = []
    updates = 0
    for batch_index, x in enumerate(batches):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != head.dim:
            raise ValueError(f"batch {batch_index} shape {x.shape} incompatible with head")
        z = forward(head, x)
        decided = [classify_sample(zi, t, s, cfg.thresholds, raw_w) for zi in z]
        initial = np.array([rep.predicted_class for _, rep in decided], dtype=np.int64)
        final = initial.copy()
        scores: list[tuple[float, ...] | None] = [None] * len(decided)
        applied = np.zeros(len(decided), dtype=bool)

        flagged = [i for i, (d, _) in enumerate(decided) if d is OtdDecision.PAST_CORRECT]
        if cfg.retention_enabled and flagged:
            head2, repreds, ok = adaptive_retention(head, x[flagged], initial[flagged], cfg)
            if ok:
                head = head2
                updates += 1
                final[flagged] = repreds
                applied[flagged] = True
            else:
                warnings.append(f"batch {batch_index}: non-finite retention loss, step skipped")

        if cfg.correction_enabled:
            for i, (d, _) in enumerate(decided):
                if d is OtdDecision.PAST_MISCLASSIFIED:
                    _, cls, sc = adaptive_correction(z[i], t, s, cfg.temperature)
                    final[i] = cls
                    scores[i] = tuple(sc.tolist())

        for i, (d, rep) in enumerate(decided):
            records.append(
                PredictionRecord(
                    initial_class=int(initial[i]),
                    final_class=int(final[i]),
                    decision=d,
                    report=rep,
                    tss=scores[i],
                    retention_applied=bool(applied[i]),
                )
            )
    return ArcEvalResult(records, head, updates, warnings)
