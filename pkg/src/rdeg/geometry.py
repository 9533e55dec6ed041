"""Dense vectors, ball constraint sets, and Euclidean projection.

All arithmetic is float64. Vectors are validated on the way in: a NaN or
Inf is never stored, so a non-finite value anywhere downstream is a run
failure, not silent propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# feasibility slack, relative to the radius scale
FEAS_SLACK = 1e-9


def as_vector(values, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 1-D array, optionally checking length."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a nonempty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {v.size}")
    if not np.isfinite(v).all():
        raise ValueError("vector contains non-finite entries")
    return v


@dataclass(frozen=True)
class BallSet:
    """The Euclidean ball {v in R^dim : ||v|| <= radius}."""

    radius: float
    dim: int

    def __post_init__(self):
        if int(self.dim) <= 0:
            raise DimensionError("ball dimension must be positive")
        object.__setattr__(self, "dim", int(self.dim))
        r = float(self.radius)
        if not (np.isfinite(r) and r >= 0.0):
            raise ValueError("ball radius must be finite and nonnegative")
        object.__setattr__(self, "radius", r)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, v: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        v = as_vector(v, self.dim)
        return float(np.linalg.norm(v)) <= self.radius + slack * max(1.0, self.radius)


def project(set_: BallSet, v) -> np.ndarray:
    """Euclidean projection onto the ball: radial scaling when outside."""
    v = as_vector(v, set_.dim)
    norm = float(np.linalg.norm(v))
    if norm <= set_.radius:
        return v
    return v * (set_.radius / norm)


@dataclass
class IteratePair:
    """A point z = (x, y) in the product set X x Y."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        # own the storage: callers may reuse their buffers in place
        self.x = as_vector(self.x).copy()
        self.y = as_vector(self.y).copy()

    def copy(self) -> "IteratePair":
        return IteratePair(self.x.copy(), self.y.copy())


def pair_distance_sq(a: IteratePair, b: IteratePair) -> float:
    """||a.x - b.x||^2 + ||a.y - b.y||^2."""
    if a.x.size != b.x.size or a.y.size != b.y.size:
        raise DimensionError("iterate pairs have mismatched dimensions")
    dx = a.x - b.x
    dy = a.y - b.y
    return float(dx @ dx + dy @ dy)
