"""Per-frame class probabilities: matrix I/O and a reference frame classifier.

Any model that produces a LogProbMatrix can drive the aligner. The built-in
classifier is a multinomial log-linear model over feature rows, kept small
so ensembles train in seconds and gradients stay checkable.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np

from .features import FeatureMatrix

ROW_SUM_TOL = 1e-6
RENORM_TOL = 1e-4
LOG_ZERO = -1e30  # stand-in for log(0); keeps path arithmetic total


class InventoryError(ValueError):
    """Unknown class label or degenerate class inventory."""


class MatrixFormatError(ValueError):
    """Probability matrix file or values violate the format contract."""


class TrainingError(RuntimeError):
    """Classifier training cannot proceed or diverged."""


@dataclass(frozen=True)
class ClassInventory:
    """Ordered set of segment-class names."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise InventoryError("class labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __iter__(self):
        return iter(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise InventoryError(f"label {label!r} not in inventory {list(self.labels)}") from None


@dataclass(frozen=True)
class LogProbMatrix:
    """n frames by k classes of natural-log probabilities.

    Every row must exponentiate to a distribution (within ROW_SUM_TOL).
    Construct with check=False only when deliberately bypassing validation.
    """

    values: np.ndarray
    inventory: ClassInventory
    frame_advance_s: float
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if check:
            self.validate()

    def validate(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.inventory):
            raise MatrixFormatError(
                f"expected shape (n, {len(self.inventory)}), got {self.values.shape}"
            )
        if np.any(np.isnan(self.values)):
            raise MatrixFormatError("log probabilities contain NaN")
        if np.any(self.values > 1e-9):
            raise MatrixFormatError("log probabilities must be <= 0")
        row_sums = np.exp(self.values).sum(axis=1)
        worst = np.max(np.abs(row_sums - 1.0))
        if worst > ROW_SUM_TOL:
            raise MatrixFormatError(f"rows must sum to 1 in probability; worst deviation {worst:g}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def log_prob_matrix_from_linear(
    probs: np.ndarray,
    inventory: ClassInventory,
    frame_advance_s: float,
    renorm_tol: float = RENORM_TOL,
) -> LogProbMatrix:
    """Convert linear-domain probabilities, renormalizing small row-sum drift.

    Rows whose sums deviate from 1 by more than renorm_tol are rejected;
    zero probabilities map to LOG_ZERO instead of -inf.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != len(inventory):
        raise MatrixFormatError(f"expected shape (n, {len(inventory)}), got {probs.shape}")
    if not np.all(np.isfinite(probs)):
        raise MatrixFormatError("probabilities contain non-finite values")
    if np.any(probs < 0.0):
        raise MatrixFormatError("probabilities must be non-negative")
    sums = probs.sum(axis=1)
    bad = np.abs(sums - 1.0) > renorm_tol
    if np.any(bad):
        row = int(np.argmax(np.abs(sums - 1.0)))
        raise MatrixFormatError(f"row {row} sums to {sums[row]:.6g}, beyond tolerance {renorm_tol:g}")
    normalized = probs / sums[:, None]
    with np.errstate(divide="ignore"):
        values = np.where(normalized > 0.0, np.log(normalized), LOG_ZERO)
    return LogProbMatrix(values, inventory, frame_advance_s)


def load_prob_matrix(text: str, inventory: ClassInventory | None = None) -> LogProbMatrix:
    """Parse the text matrix format.

    Line 1: `n k frame_advance_s`; line 2: class names; then n rows of k
    linear-domain probabilities. When an inventory is given the file's
    class names must match it exactly.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise MatrixFormatError("matrix file needs a size line and a class-name line")
    head = lines[0].split()
    if len(head) != 3:
        raise MatrixFormatError(f"size line must be 'n k frame_advance_s', got {lines[0]!r}")
    try:
        n, k, advance = int(head[0]), int(head[1]), float(head[2])
    except ValueError as exc:
        raise MatrixFormatError(f"bad size line {lines[0]!r}") from exc
    names = tuple(lines[1].split())
    if len(names) != k:
        raise MatrixFormatError(f"declared {k} classes but named {len(names)}")
    if inventory is not None and names != inventory.labels:
        raise MatrixFormatError(
            f"class names {list(names)} do not match inventory {list(inventory.labels)}"
        )
    inv = inventory if inventory is not None else ClassInventory(names)
    if len(lines) - 2 != n:
        raise MatrixFormatError(f"declared {n} rows but found {len(lines) - 2}")
    try:
        probs = np.array([[float(v) for v in ln.split()] for ln in lines[2:]], dtype=np.float64)
    except ValueError as exc:
        raise MatrixFormatError("non-numeric probability entry") from exc
    if probs.size and probs.shape[1] != k:
        raise MatrixFormatError("row width does not match declared class count")
    return log_prob_matrix_from_linear(probs, inv, advance)


def format_prob_matrix(p: LogProbMatrix) -> str:
    """Serialize to the text matrix format with 9 significant digits."""
    lines = [
        f"{p.n_frames} {len(p.inventory)} {p.frame_advance_s:.9g}",
        " ".join(p.inventory.labels),
    ]
    probs = np.exp(p.values)
    for row in probs:
        lines.append(" ".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FrameClassifier:
    """Log-linear frame classifier: weights of shape (n_features + 1, k)."""

    weights: np.ndarray
    inventory: ClassInventory

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[1] != len(self.inventory):
            raise InventoryError(
                f"weights shape {weights.shape} does not match {len(self.inventory)} classes"
            )
        object.__setattr__(self, "weights", weights)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0] - 1


def _augment(features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def score_frames(
    model: FrameClassifier,
    features: FeatureMatrix | np.ndarray,
    frame_advance_s: float | None = None,
) -> LogProbMatrix:
    """Score every frame; row i is the log-distribution for frame i."""
    if isinstance(features, FeatureMatrix):
        rows = features.frames
        advance = features.frame_advance_s
    else:
        rows = np.atleast_2d(np.asarray(features, dtype=np.float64))
        advance = frame_advance_s if frame_advance_s is not None else 0.010
    if rows.shape[1] != model.n_features:
        raise InventoryError(
            f"model expects {model.n_features} features per frame, got {rows.shape[1]}"
        )
    logits = _augment(rows) @ model.weights
    return LogProbMatrix(_log_softmax(logits), model.inventory, advance)


def cross_entropy(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under the model."""
    logp = _log_softmax(_augment(features) @ weights)
    return float(-logp[np.arange(len(labels)), labels].mean())


def cross_entropy_grad(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Analytic gradient of cross_entropy with respect to the weights."""
    aug = _augment(features)
    probs = np.exp(_log_softmax(aug @ weights))
    probs[np.arange(len(labels)), labels] -= 1.0
    return aug.T @ probs / len(labels)


def train_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    inventory: ClassInventory,
    *,
    epochs: int = 100,
    learning_rate: float = 0.1,
    batch_size: int = 32,
    seed: int = 0,
) -> FrameClassifier:
    """Mini-batch SGD on cross-entropy; deterministic given the seed."""
    k = len(inventory)
    if k < 2:
        raise InventoryError(f"need at least 2 classes to train, got {k}")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != labels.shape[0]:
        raise TrainingError("features and labels disagree on example count")
    if labels.min() < 0 or labels.max() >= k:
        raise TrainingError(f"labels must lie in [0, {k})")
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        empty = inventory.labels[int(np.argmin(counts))]
        raise TrainingError(f"class {empty!r} has no training examples")

    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=(features.shape[1] + 1, k))
    n = features.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            weights -= learning_rate * cross_entropy_grad(weights, features[idx], labels[idx])
        loss = cross_entropy(weights, features, labels)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch}")
    return FrameClassifier(weights, inventory)


def make_ensemble(
    features: np.ndarray,
    labels: np.ndarray,
    inventory: ClassInventory,
    *,
    n_members: int = 10,
    base_seed: int = 0,
    seeds: Sequence[int] | None = None,
    epochs: int = 100,
    learning_rate: float = 0.1,
    batch_size: int = 32,
) -> list[FrameClassifier]:
    """Train one classifier per seed; seeds default to base_seed..base_seed+E-1."""
    if seeds is None:
        seeds = range(base_seed, base_seed + n_members)
    seeds = list(seeds)
    if not seeds:
        raise TrainingError("ensemble needs at least one member")
    members = []
    for i, seed in enumerate(seeds):
        try:
            members.append(
                train_classifier(
                    features,
                    labels,
                    inventory,
                    epochs=epochs,
                    learning_rate=learning_rate,
                    batch_size=batch_size,
                    seed=seed,
                )
            )
        except (TrainingError, InventoryError) as exc:
            raise TrainingError(f"member {i} (seed {seed}) failed: {exc}") from exc
    return members


def synthetic_frame_data(
    inventory: ClassInventory,
    n_per_class: int,
    n_features: int = 39,
    separation: float = 3.0,
    spread: float = 1.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class clusters for classifier smoke training."""
    k = len(inventory)
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(k, n_features))
    features = np.vstack(
        [means[c] + rng.normal(0.0, spread, size=(n_per_class, n_features)) for c in range(k)]
    )
    labels = np.repeat(np.arange(k), n_per_class)
    order = rng.permutation(len(labels))
    return features[order], labels[order]


CLASSIFIER_MAGIC = "ensalign-classifier v1"


def format_classifier(model: FrameClassifier) -> str:
    lines = [CLASSIFIER_MAGIC, " ".join(model.inventory.labels)]
    rows, cols = model.weights.shape
    lines.append(f"{rows} {cols}")
    for row in model.weights:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_classifier(text: str) -> FrameClassifier:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CLASSIFIER_MAGIC:
        raise MatrixFormatError(f"not a classifier file (expected header {CLASSIFIER_MAGIC!r})")
    inventory = ClassInventory(tuple(lines[1].split()))
    rows, cols = (int(v) for v in lines[2].split())
    weights = np.array(
        [[float(v) for v in ln.split()] for ln in lines[3 : 3 + rows]], dtype=np.float64
    )
    if weights.shape != (rows, cols):
        raise MatrixFormatError(f"expected {rows}x{cols} weights, got {weights.shape}")
    return FrameClassifier(weights, inventory)


def save_classifier(model: FrameClassifier, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_classifier(model))


def load_classifier(path) -> FrameClassifier:
    with open(path, "r", encoding="utf-8") as f:
        return parse_classifier(f.read())
