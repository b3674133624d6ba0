"""Two-point zero-order gradient estimates.

Sphere directions carry the dimension factor ``d`` so that ``z * g`` is an
unbiased estimate of the (smoothed) gradient; Gaussian directions already have
``E[z z^T] = I`` and are used without it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .core_math import DimensionError, DirectionKind, gaussian_block, sample_directions

STREAM_CHUNK = 8192  # coordinates generated per block by the in-place path; even


@dataclass(frozen=True)
class ZOEstimate:
    projections: np.ndarray  # includes the 1/K averaging factor
    mu: float
    kind: DirectionKind


def _dim_factor(kind: DirectionKind, d: int) -> float:
    return float(d) if DirectionKind(kind) is DirectionKind.SPHERE else 1.0


def two_point_scalar(spec, w, z, mu: float, batch=None,
                     kind: DirectionKind = DirectionKind.SPHERE) -> float:
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if w.shape != z.shape:
        raise DimensionError(f"direction shape {z.shape} != model shape {w.shape}")
    factor = _dim_factor(kind, len(w))
    if mu == 0:
        return factor * float(np.sum(model.grad(spec, w, batch) * z))
    diff = model.loss(spec, w + mu * z, batch) - model.loss(spec, w - mu * z, batch)
    return factor * diff / (2.0 * mu)


def projections(spec, w, directions: np.ndarray, mu: float, batch=None,
                kind: DirectionKind = DirectionKind.SPHERE) -> np.ndarray:
    """``(1/K) * g(w, z_r)`` for each row of ``directions``; vectorized over ``r``."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    directions = np.atleast_2d(directions)
    k, d = directions.shape
    factor = _dim_factor(kind, d)
    if mu == 0:
        g = model.grad(spec, w, batch)
        return factor * (directions @ g) / k
    plus, minus = model.losses_along(spec, w, directions, mu, batch)
    return factor * ((plus - minus) / (2.0 * mu)) / k


def multi_point_estimate(spec, w, seeds, mu: float, batch=None,
                         kind: DirectionKind = DirectionKind.SPHERE) -> ZOEstimate:
    if len(seeds) < 1:
        raise ValueError("need at least one perturbation seed")
    directions = sample_directions(seeds, len(np.asarray(w)), kind)
    return ZOEstimate(projections(spec, w, directions, mu, batch, kind), mu, DirectionKind(kind))


def reconstruct(directions: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``P @ rho`` accumulated direction by direction in ``r`` order."""
    out = np.zeros(directions.shape[1])
    for z, coef in zip(directions, rho):
        out += coef * z
    return out


def perturb_in_place(w: np.ndarray, seed: int, scale: float,
                     kind: DirectionKind = DirectionKind.GAUSSIAN) -> None:
    """``w += scale * z(seed)``, streaming ``z`` in blocks instead of allocating it.

    Float addition is not exactly invertible, so undoing a perturbation
    restores ``w`` up to rounding (a few ulps of ``scale * z``), not bit for bit.
    """
    d = len(w)
    norm = 1.0
    if DirectionKind(kind) is DirectionKind.SPHERE:
        sq = 0.0
        for start in range(0, d, STREAM_CHUNK):
            block = gaussian_block(seed, start, min(start + STREAM_CHUNK, d))
            sq += float(np.sum(block * block))
        norm = np.sqrt(sq)
    for start in range(0, d, STREAM_CHUNK):
        stop = min(start + STREAM_CHUNK, d)
        block = gaussian_block(seed, start, stop)
        if norm != 1.0:
            block /= norm
        w[start:stop] += scale * block


def zo_estimate_in_place(spec, w: np.ndarray, seed: int, mu: float, data=None) -> float:
    """Gaussian two-point estimate ``(F(w+mu z) - F(w-mu z)) / (2 mu)`` without a direction buffer."""
    if mu <= 0:
        raise ValueError("in-place estimation requires mu > 0")
    perturb_in_place(w, seed, mu)
    f1 = model.loss(spec, w, data)
    perturb_in_place(w, seed, -2.0 * mu)
    f2 = model.loss(spec, w, data)
    perturb_in_place(w, seed, mu)
    return (f1 - f2) / (2.0 * mu)
