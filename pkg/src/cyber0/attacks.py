"""Byzantine client behaviours.

Gradient-style attacks take the honest clients' update vectors (projection
vectors for the zero-order protocol, gradients for FedAvg) and return the
single vector that every colluding Byzantine client submits.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationRule, aggregate, trim_count
from .model import Dataset

ATTACK_KINDS = ("none", "alie", "foe", "sf", "lf", "tma")


class AttackError(ValueError):
    pass


def default_omega_grid() -> tuple[float, ...]:
    return tuple(round(0.1 * i, 10) for i in range(51))


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    omega_grid: tuple[float, ...] = field(default_factory=default_omega_grid)
    # optimize omega against NNM∘Agg instead of Agg alone (the "-NNM" variants)
    target_nnm: bool = False
    # TMA trimming fraction; None -> the rule's CWTM beta, else f/n
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackError(f"unknown attack {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.kind in ("alie", "foe") and len(self.omega_grid) == 0:
            raise AttackError("omega_grid must be non-empty for ALIE/FOE")

    @property
    def crafts_vectors(self) -> bool:
        return self.kind in ("alie", "foe", "sf", "tma")


def honest_mean_and_std(honest_updates) -> tuple[np.ndarray, np.ndarray]:
    """Mean and per-coordinate population standard deviation of the honest updates."""
    h = np.atleast_2d(np.asarray(honest_updates, dtype=np.float64))
    if len(h) < 2:
        raise AttackError("standard deviation needs at least two honest updates")
    centre = h.mean(axis=0)
    return centre, np.sqrt(np.mean((h - centre) ** 2, axis=0))


def craft(kind: str, honest_updates, omega: float = 0.0) -> np.ndarray:
    if kind == "alie":
        centre, std = honest_mean_and_std(honest_updates)
        return centre + omega * std
    centre = np.atleast_2d(np.asarray(honest_updates, dtype=np.float64)).mean(axis=0)
    if kind == "foe":
        return (1.0 - omega) * centre
    if kind == "sf":
        return -centre
    raise AttackError(f"craft() does not handle attack {kind!r}")


def assemble(honest_updates, byzantine_vector, byzantine_mask) -> np.ndarray:
    """Full ``(n, dim)`` stack with the crafted vector in every Byzantine slot."""
    honest_updates = np.atleast_2d(np.asarray(honest_updates, dtype=np.float64))
    mask = np.asarray(byzantine_mask, dtype=bool)
    out = np.empty((len(mask), honest_updates.shape[1]))
    out[~mask] = honest_updates
    out[mask] = byzantine_vector
    return out


def optimize_omega(kind: str, honest_updates, rule: AggregationRule, f: int,
                   grid, byzantine_mask=None) -> tuple[float, np.ndarray]:
    """Grid value of omega that pushes ``rule``'s output furthest from the honest mean.

    Byzantine slots default to the last ``f`` positions. Ties go to the smallest omega.
    """
    if kind not in ("alie", "foe"):
        raise AttackError("omega optimization applies to ALIE and FOE only")
    if len(grid) == 0:
        raise AttackError("omega grid is empty")
    honest = np.atleast_2d(np.asarray(honest_updates, dtype=np.float64))
    if byzantine_mask is None:
        byzantine_mask = np.r_[np.zeros(len(honest), bool), np.ones(f, bool)]
    centre = honest.mean(axis=0)
    best = None
    for omega in sorted(float(w) for w in grid):
        vec = craft(kind, honest, omega)
        dist = float(np.linalg.norm(aggregate(rule, assemble(honest, vec, byzantine_mask)) - centre))
        if best is None or dist > best[0]:
            best = (dist, omega, vec)
    return best[1], best[2]


def label_flip(dataset: Dataset) -> Dataset:
    """Relabel ``l`` as ``C - 1 - l`` (``9 - l`` for ten classes)."""
    return Dataset(dataset.X, dataset.num_classes - 1 - dataset.y, dataset.num_classes)


def tma(honest_updates, beta: float, n: int) -> np.ndarray:
    """Transformed trimmed-mean attack, coordinate by coordinate.

    Where the honest mean is positive, submit the ``floor(beta*n)``-th smallest
    honest value, otherwise the ``floor(beta*n)``-th largest.
    """
    h = np.atleast_2d(np.asarray(honest_updates, dtype=np.float64))
    b = trim_count(n, beta)
    if b < 1:
        raise AttackError(f"TMA needs floor(beta*n) >= 1 (beta={beta}, n={n})")
    if b > len(h):
        raise AttackError(f"only {len(h)} honest values, cannot take order statistic {b}")
    ordered = np.sort(h, axis=0)
    # the sign probe uses honest values only; Byzantine entries are not yet defined
    probe = h.mean(axis=0)
    return np.where(probe > 0, ordered[b - 1], ordered[len(h) - b])


def byzantine_vector(spec: AttackSpec, honest_updates, rule: AggregationRule, f: int,
                     byzantine_mask) -> np.ndarray:
    """Dispatch used by the protocol engine for attacks that replace client updates."""
    n = len(byzantine_mask)
    if spec.kind == "sf":
        return craft("sf", honest_updates)
    if spec.kind in ("alie", "foe"):
        target = rule if spec.target_nnm else rule.without_nnm()
        return optimize_omega(spec.kind, honest_updates, target, f, spec.omega_grid, byzantine_mask)[1]
    if spec.kind == "tma":
        beta = spec.beta
        if beta is None:
            beta = rule.beta if rule.base == "cwtm" and rule.beta > 0 else f / n
        return tma(honest_updates, beta, n)
    raise AttackError(f"attack {spec.kind!r} does not craft vectors")


def flip_labels(y: np.ndarray, num_classes: int) -> np.ndarray:
    return num_classes - 1 - np.asarray(y)

