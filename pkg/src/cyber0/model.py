"""Learning objectives: multiclass logistic regression and two analytic test losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_math import DimensionError


class EmptyBatchError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` of shape ``(N, d_x)`` and integer labels ``y``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be (N, d_x) with one label per row")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.y[indices], self.num_classes)


@dataclass(frozen=True)
class MulticlassLogistic:
    """Softmax regression; ``w`` is the row-major ``(num_classes, d_x [+1])`` matrix."""

    num_classes: int
    num_features: int
    bias: bool = False

    @property
    def dim(self) -> int:
        return self.num_classes * (self.num_features + int(self.bias))


@dataclass(frozen=True, eq=False)
class Linear:
    c: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.c)


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``0.5 * ||w - center||^2``."""

    center: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.center)


LossSpec = MulticlassLogistic | Linear | Quadratic


def _check_w(spec, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != spec.dim:
        raise DimensionError(f"model dimension {w.shape[-1]} != expected {spec.dim}")
    return w


def _features(spec: MulticlassLogistic, batch: Dataset) -> np.ndarray:
    if batch is None or len(batch) == 0:
        raise EmptyBatchError("batch is empty")
    if batch.num_features != spec.num_features:
        raise DimensionError(f"batch has {batch.num_features} features, spec expects {spec.num_features}")
    if spec.bias:
        return np.hstack([batch.X, np.ones((len(batch), 1))])
    return batch.X


def _logistic_from_logits(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean cross-entropy over the last-but-one axis; logits (..., B, C)."""
    top = logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(logits - top).sum(axis=-1)) + top[..., 0]
    picked = logits[..., np.arange(len(y)), y]
    return (lse - picked).mean(axis=-1)


def loss(spec: LossSpec, w, batch: Dataset | None = None) -> float:
    w = _check_w(spec, w)
    if isinstance(spec, Quadratic):
        diff = w - spec.center
        return 0.5 * float(np.sum(diff * diff))
    if isinstance(spec, Linear):
        return float(np.sum(spec.c * w))
    X = _features(spec, batch)
    W = w.reshape(spec.num_classes, -1)
    return float(_logistic_from_logits(X @ W.T, batch.y))


def grad(spec: LossSpec, w, batch: Dataset | None = None) -> np.ndarray:
    w = _check_w(spec, w)
    if isinstance(spec, Quadratic):
        return w - spec.center
    if isinstance(spec, Linear):
        return np.array(spec.c, dtype=np.float64)
    X = _features(spec, batch)
    W = w.reshape(spec.num_classes, -1)
    logits = X @ W.T
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    p[np.arange(len(batch)), batch.y] -= 1.0
    return (p.T @ X).ravel() / len(batch)


def losses_along(spec: LossSpec, w, directions: np.ndarray, mu: float,
                 batch: Dataset | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Losses at ``w + mu*z_r`` and ``w - mu*z_r`` for every row ``z_r`` of ``directions``.

    Logistic regression is evaluated through the logits, which are linear in
    the weights, so all ``2K`` losses cost one ``(K*C, d_x) x (d_x, B)`` product.
    """
    w = _check_w(spec, w)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != spec.dim:
        raise DimensionError(f"directions have dimension {directions.shape[1]}, expected {spec.dim}")
    if not isinstance(spec, MulticlassLogistic):
        plus = np.array([loss(spec, w + mu * z, batch) for z in directions])
        minus = np.array([loss(spec, w - mu * z, batch) for z in directions])
        return plus, minus
    X = _features(spec, batch)
    C = spec.num_classes
    base = X @ w.reshape(C, -1).T                                     # (B, C)
    shift = directions.reshape(-1, X.shape[1]) @ X.T                  # (K*C, B)
    shift = shift.reshape(len(directions), C, -1).transpose(0, 2, 1)  # (K, B, C)
    plus = _logistic_from_logits(base + mu * shift, batch.y)
    minus = _logistic_from_logits(base - mu * shift, batch.y)
    return plus, minus


def predict(spec: MulticlassLogistic, w, data: Dataset) -> np.ndarray:
    w = _check_w(spec, w)
    X = _features(spec, data)
    # argmax picks the lowest class index on ties
    return np.argmax(X @ w.reshape(spec.num_classes, -1).T, axis=1)


def accuracy(spec: MulticlassLogistic, w, test: Dataset) -> float:
    if test is None or len(test) == 0:
        raise EmptyBatchError("test set is empty")
    return float(np.mean(predict(spec, w, test) == test.y))


def estimate_lipschitz(spec: LossSpec, w, batch: Dataset | None = None, probes: int = 32,
                       radius: float = 1.0, rng: np.random.Generator | None = None) -> float:
    """Largest observed ``||grad(a) - grad(b)|| / ||a - b||`` around ``w``."""
    rng = rng or np.random.default_rng(0)
    w = _check_w(spec, w)
    best = 0.0
    for _ in range(probes):
        a = w + radius * rng.standard_normal(w.shape)
        b = a + radius * 1e-2 * rng.standard_normal(w.shape)
        num = np.linalg.norm(grad(spec, a, batch) - grad(spec, b, batch))
        best = max(best, num / np.linalg.norm(a - b))
    return float(best)
