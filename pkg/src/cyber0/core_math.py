"""Keyed pseudorandom directions and small dense-vector helpers.

Every perturbation direction is a pure function of a 64-bit seed. Seeds are
derived from ``(base, t, l, r)`` by bit-packing the indices and pushing them
through a bijective 64-bit mixer, so a client and the federator regenerate the
same direction without sharing any generator state.

The uniform stream behind a seed is the splitmix64 sequence evaluated at an
explicit counter, which makes any slice of a direction computable on its own
(see :func:`gaussian_block`).
"""
from __future__ import annotations

import enum
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# bit widths for packing (t, l, r) into one 64-bit word
T_BITS, L_BITS, R_BITS = 28, 12, 24

_U64_GAMMA = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / (1 << 53)


class DirectionKind(str, enum.Enum):
    SPHERE = "sphere"
    GAUSSIAN = "gaussian"


class DimensionError(ValueError):
    pass


def _mix64(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, t: int, l: int, r: int) -> int:
    """Seed for perturbation ``r`` of local epoch ``l`` in global epoch ``t``.

    Injective in ``(t, l, r)`` for a fixed base: the indices are packed into
    disjoint bit fields and the mixer is a bijection on 64-bit words.
    """
    for name, value, bits in (("t", t, T_BITS), ("l", l, L_BITS), ("r", r, R_BITS)):
        if not 0 <= value < (1 << bits):
            raise ValueError(f"{name}={value} outside [0, 2**{bits})")
    packed = (t << (L_BITS + R_BITS)) | (l << R_BITS) | r
    return _mix64(_mix64(base) ^ packed)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def uniform_stream(seeds, start: int, stop: int) -> np.ndarray:
    """Uniforms in (0, 1] at counters ``start..stop-1`` for each seed.

    ``seeds`` may be a scalar or a 1-D sequence; the result has shape
    ``(len(seeds), stop - start)`` in the latter case.
    """
    seeds_arr = np.asarray(seeds, dtype=np.uint64)
    counters = np.arange(start + 1, stop + 1, dtype=np.uint64)
    x = seeds_arr[..., None] + counters * _U64_GAMMA
    bits = _mix64_array(x) >> np.uint64(11)
    return (bits.astype(np.float64) + 1.0) * _INV_2_53


def gaussian_block(seeds, start: int, stop: int) -> np.ndarray:
    """Standard normal coordinates ``start..stop-1`` of the stream(s) for ``seeds``.

    Box-Muller on counter pairs: coordinate ``p`` uses uniforms ``2*(p//2)`` and
    ``2*(p//2)+1`` and takes the cosine branch for even ``p``, sine for odd.
    Any block of coordinates is therefore bit-identical to the same slice of
    the full vector.
    """
    if stop <= start:
        shape = (0,) if np.ndim(seeds) == 0 else (len(seeds), 0)
        return np.zeros(shape)
    first_pair, last_pair = start // 2, (stop - 1) // 2 + 1
    u = uniform_stream(seeds, 2 * first_pair, 2 * last_pair)
    u1, u2 = u[..., 0::2], u[..., 1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    out = np.empty(u.shape)
    out[..., 0::2] = radius * np.cos(angle)
    out[..., 1::2] = radius * np.sin(angle)
    offset = start - 2 * first_pair
    return out[..., offset:offset + (stop - start)]


def sample_directions(seeds, d: int, kind: DirectionKind = DirectionKind.SPHERE) -> np.ndarray:
    """Stack of directions, one row per seed, shape ``(len(seeds), d)``."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    seeds = [int(s) for s in seeds]
    z = gaussian_block(np.array(seeds, dtype=np.uint64), 0, d)
    if DirectionKind(kind) is DirectionKind.SPHERE:
        z /= np.sqrt(np.sum(z * z, axis=1))[:, None]
    return z


def sample_direction(seed: int, d: int, kind: DirectionKind = DirectionKind.SPHERE) -> np.ndarray:
    return sample_directions([seed], d, kind)[0]


def perturbation_seeds(base: int, t: int, l: int, k: int) -> list[int]:
    """Seeds of the ``k`` directions of local epoch ``l``, with ``r = 1..k``."""
    return [derive_seed(base, t, l, r) for r in range(1, k + 1)]


# -- dense vectors ---------------------------------------------------------

def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def _finite(v: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite entries in result")
    return v


def add(x, y) -> np.ndarray:
    x, y = _check_pair(x, y)
    with np.errstate(over="ignore", invalid="ignore"):
        return _finite(x + y)


def scale(x, a: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return _finite(float(a) * np.asarray(x, dtype=np.float64))


def dot(x, y) -> float:
    x, y = _check_pair(x, y)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(_finite(np.asarray(np.sum(x * y))))


def l2_norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(math.sqrt(np.sum(x * x)))


def coordinate(x, j: int) -> float:
    x = np.asarray(x)
    if not 0 <= j < x.shape[-1]:
        raise IndexError(f"coordinate {j} out of range for dimension {x.shape[-1]}")
    return float(x[j])
