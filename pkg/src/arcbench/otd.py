"""Out-of-task detection from the head's own confidence quantities.

At stage t with step s, a test sample predicted into a past task's class
range with high max-softmax confidence is taken to be a correctly classified
past-task sample; one predicted into the current task's range whose
confidence is low relative to its confidence over past classes alone is
taken to be a misclassified past-task sample. Everything else passes through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import softmax


class OtdDecision(Enum):
    PAST_CORRECT = "past_correct"
    PAST_MISCLASSIFIED = "past_misclassified"
    PASSTHROUGH = "passthrough"


@dataclass(frozen=True)
class Thresholds:
    """Detection thresholds: beta gates retention, gamma gates correction.

    beta = 0 flags every past-predicted sample; gamma = inf flags every
    current-predicted one (both are useful diagnostic extremes).
    """

    beta: float = 0.8
    gamma: float = 0.8

    def __post_init__(self):
        if math.isnan(self.beta) or not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if math.isnan(self.gamma) or self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class ConfidenceReport:
    """Per-sample confidence quantities feeding the detection branches.

    ``confidence`` is the max softmax probability over all visible classes;
    ``masked_confidence`` is the same over past-task logits only (undefined at
    stage 1), and ``ratio`` is their quotient.
    """

    predicted_class: int
    confidence: float
    masked_confidence: float | None
    ratio: float | None


def confidence(z: np.ndarray) -> tuple[int, float]:
    """Predicted class (argmax, lowest index on ties) and its softmax probability."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("confidence expects a single logits vector")
    p = softmax(z)  # rejects empty / non-finite input
    k = int(np.argmax(z))
    return k, float(p[k])


def masked_confidence(z: np.ndarray, t: int, s: int) -> float:
    """Max softmax probability over the first s*(t-1) logits only."""
    z = np.asarray(z, dtype=np.float64)
    if t < 2:
        raise ValueError("masked confidence is undefined at the first task")
    if z.shape != (s * t,):
        raise ValueError(f"expected {s * t} logits, got shape {z.shape}")
    return float(np.max(softmax(z[: s * (t - 1)])))


def classify_sample(
    z: np.ndarray,
    t: int,
    s: int,
    thresholds: Thresholds,
    raw_confidence_w: bool = False,
) -> tuple[OtdDecision, ConfidenceReport]:
    """Sort one test sample into a detection branch.

    A past-predicted sample with confidence >= beta is PAST_CORRECT; a
    current-predicted one (t >= 2) whose ratio w = c / c_hat is <= gamma is
    PAST_MISCLASSIFIED; anything else is PASSTHROUGH. At t = 1 every class is
    current so the sample always passes through. ``raw_confidence_w`` is an
    ablation switch replacing the ratio test with c <= gamma.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (s * t,):
        raise ValueError(f"expected {s * t} logits, got shape {z.shape}")
    predicted, c = confidence(z)
    if t == 1:
        return OtdDecision.PASSTHROUGH, ConfidenceReport(predicted, c, None, None)

    c_hat = masked_confidence(z, t, s)
    w = c / c_hat
    report = ConfidenceReport(predicted, c, c_hat, w)
    if predicted < s * (t - 1):
        if c >= thresholds.beta:
            return OtdDecision.PAST_CORRECT, report
    else:
        stat = c if raw_confidence_w else w
        if stat <= thresholds.gamma:
            return OtdDecision.PAST_MISCLASSIFIED, report
    return OtdDecision.PASSTHROUGH, report
