"""Box feasible sets, projection, shrinkage and random directions."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class SamplingScheme(str, enum.Enum):
    """How perturbation directions are drawn."""

    UNIFORM_SPHERE = "uniform"
    COORDINATE_BASIS = "coordinate"
    GAUSSIAN_NORMALIZED = "gaussian"


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Axis-aligned box ``{x : lower <= x <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError(f"bounds must be 1-d of equal length, got {lower.shape} and {upper.shape}")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        if not np.all(upper > lower):
            raise ValueError("box must have a nonempty interior")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, low: float, high: float, d: int) -> "BoxSet":
        return cls(np.full(d, float(low)), np.full(d, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def inner_radius(self) -> float:
        """Radius of the largest ball centred at ``center`` inside the box."""
        return float(np.min(self.half_widths))

    @property
    def outer_radius(self) -> float:
        """Radius of the smallest ball centred at ``center`` containing the box."""
        return float(np.linalg.norm(self.half_widths))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def __eq__(self, other):
        if not isinstance(other, BoxSet):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"BoxSet(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


def project(box: BoxSet, y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``box`` (coordinate-wise clamp)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (box.dim,):
        raise ValueError(f"expected a vector of length {box.dim}, got shape {y.shape}")
    return np.minimum(np.maximum(y, box.lower), box.upper)


def shrink(box: BoxSet, gamma: float) -> BoxSet:
    """Contract ``box`` by ``1 - gamma`` about its center.

    Any point of the result perturbed by ``delta * u`` with ``||u|| = 1`` and
    ``delta <= gamma * box.inner_radius`` stays inside ``box``.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if gamma == 0.0:
        return box
    c, h = box.center, (1.0 - gamma) * box.half_widths
    return BoxSet(c - h, c + h)


def sample_direction(scheme: SamplingScheme | str, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a unit-norm direction in ``R^d`` according to ``scheme``."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    scheme = SamplingScheme(scheme)
    if scheme is SamplingScheme.UNIFORM_SPHERE:
        v = rng.standard_normal(d)
        return v / np.linalg.norm(v)
    if scheme is SamplingScheme.COORDINATE_BASIS:
        u = np.zeros(d)
        u[rng.integers(d)] = 1.0 if rng.random() < 0.5 else -1.0
        return u
    # Same law as UNIFORM_SPHERE. Kept as its own branch (Box-Muller from
    # uniforms) so that scheme sweeps exercise a distinct code path.
    n_pairs = (d + 1) // 2
    u1 = 1.0 - rng.random(n_pairs)
    u2 = rng.random(n_pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    v = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])[:d]
    return v / np.linalg.norm(v)


def sample_ball(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the closed unit ball in ``R^d``."""
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    u = sample_direction(SamplingScheme.UNIFORM_SPHERE, d, rng)
    return u * rng.random() ** (1.0 / d)


def sample_directions(scheme: SamplingScheme | str, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` directions as rows of an ``(n, d)`` array (vectorised ``sample_direction``).

    Same laws as the single-draw sampler, though not the same stream: a batch
    of ``n`` does not reproduce ``n`` sequential single draws.
    """
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    scheme = SamplingScheme(scheme)
    if scheme is SamplingScheme.COORDINATE_BASIS:
        U = np.zeros((n, d))
        U[np.arange(n), rng.integers(d, size=n)] = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        return U
    if scheme is SamplingScheme.UNIFORM_SPHERE:
        V = rng.standard_normal((n, d))
    else:
        n_pairs = (d + 1) // 2
        u1 = 1.0 - rng.random((n, n_pairs))
        u2 = rng.random((n, n_pairs))
        radius = np.sqrt(-2.0 * np.log(u1))
        V = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)], axis=1)[:, :d]
    return V / np.linalg.norm(V, axis=1, keepdims=True)
