"""Dense numerics for an incrementally expanding linear classification head.

The head is the only trainable object in the package: features are frozen
vectors, and everything here is float64 numpy acting on a caller-owned
``LinearHead``. All update operations are functional (they return a new head).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import substream

# Floor under log() so losses stay finite; far below every test tolerance.
EPS_LOG = 1e-12


@dataclass(frozen=True)
class TaskLayout:
    """Fixed class layout: task i (1-based) owns 0-based classes [step*(i-1), step*i)."""

    num_tasks: int
    step: int

    def __post_init__(self):
        if self.num_tasks < 1:
            raise ValueError(f"num_tasks must be >= 1, got {self.num_tasks}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")

    @property
    def num_classes(self) -> int:
        return self.num_tasks * self.step

    def class_range(self, task: int) -> range:
        """0-based class indices owned by a 1-based task."""
        if not 1 <= task <= self.num_tasks:
            raise ValueError(f"task {task} outside 1..{self.num_tasks}")
        return range(self.step * (task - 1), self.step * task)

    def task_of_class(self, cls: int) -> int:
        """1-based task owning a 0-based class index."""
        if not 0 <= cls < self.num_classes:
            raise ValueError(f"class {cls} outside 0..{self.num_classes - 1}")
        return cls // self.step + 1


@dataclass
class LinearHead:
    """Expandable linear classifier: logits = weights @ x + bias.

    ``weights`` is (K, D) and ``bias`` is (K,) where K = step * visible_tasks.
    Rows for a class keep their index across expansions.
    """

    weights: np.ndarray
    bias: np.ndarray
    visible_tasks: int

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearHead":
        return LinearHead(self.weights.copy(), self.bias.copy(), self.visible_tasks)


def new_head(dim: int, step: int) -> LinearHead:
    """Zero-initialized head seeing only the first task."""
    if dim < 1 or step < 1:
        raise ValueError("dim and step must be >= 1")
    return LinearHead(np.zeros((step, dim)), np.zeros(step), 1)


def forward(head: LinearHead, x: np.ndarray) -> np.ndarray:
    """Logits W @ x + b for a feature vector (D,) or a batch (n, D).

    Each logit is reduced over the feature axis with an order that depends
    only on D (never on the number of classes or the batch size), so
    expanding the head preserves old classes' logits bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != head.dim:
        raise ValueError(f"feature shape {x.shape} incompatible with head dim {head.dim}")
    return np.sum(x[..., None, :] * head.weights, axis=-1) + head.bias


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax along the last axis."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("empty logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(p: np.ndarray, label: int) -> float:
    """-log p[label], with p[label] floored at EPS_LOG."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= label < p.shape[-1]:
        raise ValueError(f"label {label} outside 0..{p.shape[-1] - 1}")
    return float(-np.log(max(p[label], EPS_LOG)))


def entropy(p: np.ndarray) -> float:
    """-sum p_i log p_i with the 0*log(0) terms taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    return float(-np.sum(p * np.log(np.clip(p, EPS_LOG, None))))


def retention_gradient(
    head: LinearHead,
    x: np.ndarray,
    pseudo_label: int,
    include_ce: bool = True,
    include_em: bool = True,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Analytic gradient of the test-time objective at the current head.

    The objective is cross-entropy against ``pseudo_label`` plus the entropy
    of the predicted distribution; either term can be switched off for
    ablations. With p = softmax(W x + b):

        d(CE)/dz = p - onehot(pseudo_label)
        d(EM)/dz_i = -p_i * (log p_i - sum_j p_j log p_j)

    Returns (dW, db, loss) where dW = (dL/dz) x^T and db = dL/dz.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.dim,):
        raise ValueError(f"feature shape {x.shape} incompatible with head dim {head.dim}")
    if not 0 <= pseudo_label < head.num_classes:
        raise ValueError(f"pseudo_label {pseudo_label} outside 0..{head.num_classes - 1}")
    if not (include_ce or include_em):
        raise ValueError("at least one loss term must be enabled")

    p = softmax(forward(head, x))
    logp = np.log(np.clip(p, EPS_LOG, None))
    dz = np.zeros_like(p)
    loss = 0.0
    if include_ce:
        loss += cross_entropy(p, pseudo_label)
        dz += p
        dz[pseudo_label] -= 1.0
    if include_em:
        ent = entropy(p)
        loss += ent
        dz += -p * (logp + ent)
    return np.outer(dz, x), dz, loss


def sgd_step(head: LinearHead, dw: np.ndarray, db: np.ndarray, lr: float) -> LinearHead:
    """One plain SGD update: W - lr*dW, b - lr*db. Exactly one update per call."""
    dw = np.asarray(dw, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    if dw.shape != head.weights.shape or db.shape != head.bias.shape:
        raise ValueError("gradient shapes do not match head")
    if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
        raise ValueError("non-finite gradient")
    if not np.isfinite(lr):
        raise ValueError("non-finite learning rate")
    return LinearHead(head.weights - lr * dw, head.bias - lr * db, head.visible_tasks)


def expand_head(head: LinearHead, layout: TaskLayout) -> LinearHead:
    """Grow the head by one task's worth of zero-initialized rows.

    Zero init makes expansion logit-preserving: old classes keep bit-identical
    rows, new classes score exactly 0 until trained.
    """
    if head.num_classes != layout.step * head.visible_tasks:
        raise ValueError("head shape inconsistent with layout")
    if head.visible_tasks >= layout.num_tasks:
        raise ValueError(f"cannot expand past {layout.num_tasks} tasks")
    weights = np.vstack([head.weights, np.zeros((layout.step, head.dim))])
    bias = np.concatenate([head.bias, np.zeros(layout.step)])
    return LinearHead(weights, bias, head.visible_tasks + 1)


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch SGD settings for fitting the head on one task.

    ``weight_decay`` shrinks the weight rows a little on every step. During
    sequential fitting only the current task's rows are regrown, so decay is
    what makes the shared head drift toward the newest task at desk scale;
    set it to 0 for pure cross-entropy fitting.
    """

    epochs: int = 20
    lr: float = 5.0
    batch_size: int = 64
    weight_decay: float = 1.5e-4
    replay_per_class: int = 0  # exemplars kept per past class; 0 = memory-free

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.replay_per_class < 0:
            raise ValueError("replay_per_class must be >= 0")


def fit_task(
    head: LinearHead,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    seed: int | tuple[int, ...] = 0,
) -> LinearHead:
    """Train the head with mini-batch SGD on cross-entropy over the given examples.

    Deterministic given ``seed`` (shuffling comes from a dedicated substream).
    Labels must fall inside the head's visible class range; the caller is
    responsible for restricting them to the current task when running
    memory-free.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != head.dim:
        raise ValueError(f"features shape {x.shape} incompatible with head dim {head.dim}")
    if y.shape != (x.shape[0],):
        raise ValueError("labels must be one per feature row")
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    if y.min() < 0 or y.max() >= head.num_classes:
        raise ValueError("labels outside the head's visible classes")

    rng = substream(*seed) if isinstance(seed, tuple) else substream(seed)
    head = head.copy()
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = x[idx]
            # plain matmul here: training is a hot loop and nothing downstream
            # depends on its reduction order
            dz = softmax(batch @ head.weights.T + head.bias)
            dz[np.arange(len(idx)), y[idx]] -= 1.0
            dz /= len(idx)
            dw = dz.T @ batch
            if cfg.weight_decay:
                dw += cfg.weight_decay * head.weights
            head = sgd_step(head, dw, dz.sum(axis=0), cfg.lr)
    return head
