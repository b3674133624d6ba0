"""Robust aggregation rules.

The rules only see an ``(n, k)`` stack of vectors, so the same code aggregates
K-dimensional projection vectors and full d-dimensional gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


KRUM_TIE_RTOL = 1e-12


class AggregationError(ValueError):
    pass


def _stack(updates) -> np.ndarray:
    arr = np.asarray(updates, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise AggregationError("expected a non-empty (n, dim) stack of updates")
    return arr


def _shifted_mean(x: np.ndarray) -> np.ndarray:
    # first row plus mean deviation: exact when all rows coincide
    return x[0] + (x - x[0]).mean(axis=0)


def mean(updates) -> np.ndarray:
    return _shifted_mean(_stack(updates))


def trim_count(n: int, beta: float) -> int:
    return math.floor(beta * n)


def cwtm(updates, beta: float) -> np.ndarray:
    """Coordinate-wise trimmed mean: drop the ``floor(beta*n)`` smallest and largest per coordinate."""
    x = _stack(updates)
    n = len(x)
    if not 0 <= beta < 0.5:
        raise AggregationError(f"beta must lie in [0, 1/2), got {beta}")
    b = trim_count(n, beta)
    if n - 2 * b < 1:
        raise AggregationError(f"trimming {b} from each side leaves nothing of {n} values")
    kept = np.sort(x, axis=0, kind="stable")[b:n - b]
    return _shifted_mean(kept)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distances computed from explicit differences (no Gram-matrix cancellation)."""
    out = np.empty((len(x), len(x)))
    for i in range(len(x)):
        diff = x - x[i]
        out[i] = np.sqrt(np.sum(diff * diff, axis=1))
    return out


def _nearest(dist_row: np.ndarray) -> np.ndarray:
    # stable sort on distance keeps ties in client-index order
    return np.argsort(dist_row, kind="stable")


def krum_scores(updates, f: int, squared: bool = False) -> np.ndarray:
    x = _stack(updates)
    n = len(x)
    m = n - f - 2
    if m < 1:
        raise AggregationError(f"Krum needs n - f - 2 >= 1 (n={n}, f={f})")
    dist = pairwise_distances(x)
    if squared:
        dist = dist * dist
    scores = np.empty(n)
    for i in range(n):
        order = [j for j in _nearest(dist[i]) if j != i]
        scores[i] = np.sum(dist[i, order[:m]])
    return scores


def krum(updates, f: int, squared: bool = False) -> np.ndarray:
    """Input vector with the smallest summed distance to its ``n - f - 2`` nearest neighbours."""
    x = _stack(updates)
    scores = krum_scores(x, f, squared)
    # scores equal up to rounding are ties (they arise exactly in 1-D); lowest index wins
    tied = np.flatnonzero(scores <= scores.min() * (1 + KRUM_TIE_RTOL))
    return x[int(tied[0])].copy()


def nnm(updates, f: int) -> np.ndarray:
    """Nearest-neighbour mixing: replace each vector by the mean of its ``n - f`` nearest (itself included)."""
    x = _stack(updates)
    n = len(x)
    if n - f < 1 or f < 0:
        raise AggregationError(f"NNM needs 0 <= f < n (n={n}, f={f})")
    dist = pairwise_distances(x)
    out = np.empty_like(x)
    for i in range(n):
        # neighbours summed in index order so that f=0 reproduces mean() exactly
        out[i] = _shifted_mean(x[np.sort(_nearest(dist[i])[:n - f])])
    return out


@dataclass(frozen=True)
class AggregationRule:
    """``base`` in {"mean", "cwtm", "krum"}, optionally preceded by NNM."""

    base: str = "mean"
    beta: float = 0.0
    f: int = 0
    nnm: bool = False
    nnm_f: int | None = None
    krum_squared: bool = False

    def __post_init__(self):
        if self.base not in ("mean", "cwtm", "krum"):
            raise AggregationError(f"unknown aggregation rule {self.base!r}")

    def without_nnm(self) -> "AggregationRule":
        return AggregationRule(self.base, self.beta, self.f, False, None, self.krum_squared)

    def check(self, n: int) -> None:
        if self.base == "cwtm" and (not 0 <= self.beta < 0.5 or n - 2 * trim_count(n, self.beta) < 1):
            raise AggregationError(f"CWTM(beta={self.beta}) invalid for n={n}")
        if self.base == "krum" and n - self.f - 2 < 1:
            raise AggregationError(f"Krum(f={self.f}) invalid for n={n}")
        if self.nnm and n - self.mixing_f < 1:
            raise AggregationError(f"NNM(f={self.mixing_f}) invalid for n={n}")

    @property
    def mixing_f(self) -> int:
        return self.f if self.nnm_f is None else self.nnm_f

    @property
    def label(self) -> str:
        name = {"mean": "Mean", "cwtm": f"CWTM({self.beta:g})", "krum": f"Krum({self.f})"}[self.base]
        return f"{name}∘NNM({self.mixing_f})" if self.nnm else name


def aggregate(rule: AggregationRule, updates) -> np.ndarray:
    x = _stack(updates)
    if rule.nnm:
        x = nnm(x, rule.mixing_f)
    if rule.base == "cwtm":
        return cwtm(x, rule.beta)
    if rule.base == "krum":
        return krum(x, rule.f, rule.krum_squared)
    return mean(x)


def empirical_robustness(rule: AggregationRule, updates, honest) -> float:
    """``||Agg - mean_H||^2`` over the honest vectors' mean squared spread.

    Returns 0 when both are zero and ``inf`` when only the spread is zero.
    """
    x = _stack(updates)
    honest = np.asarray(sorted(honest), dtype=np.int64)
    if len(honest) < 1:
        raise AggregationError("honest set is empty")
    h = x[honest]
    centre = h.mean(axis=0)
    out = aggregate(rule, x) - centre
    num = float(np.sum(out * out))
    den = float(np.mean(np.sum((h - centre) ** 2, axis=1)))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den
