"""Robust univariate aggregation for gradient coordinates.

The aggregator splits the agent pool into two equal chunks. One chunk only
supplies order statistics: its sorted values at the ranks implied by the
resilience level eps give a clipping interval [gamma, beta]. The other
chunk is clamped into that interval and averaged. Corrupted values can
therefore shift the output by at most the width of an honest quantile
range, no matter how large they are.

The resilience level is eps = 8*alpha + 24*ln(4/delta)/M for corruption
fraction alpha and confidence delta over M agents. The level must stay
below 1/2 or the clipping ranks cross; `saturating_epsilon` caps it at the
tightest usable pair of ranks for regimes where the formula overshoots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfidenceOutOfRange,
    DimensionError,
    EmptyInputError,
    EpsilonOutOfRange,
)

ALPHA_LIMIT = 1.0 / 16.0

PARTITION_MODES = ("fixed", "per-round-reshuffled")


def _check_population(alpha: float, delta: float, m_agents: int, alpha_limit: float) -> None:
    if not isinstance(m_agents, (int, np.integer)):
        raise ValueError(f"agent count must be an integer, got {m_agents!r}")
    if m_agents < 2 or m_agents % 2:
        raise ValueError(f"agent count must be even and at least 2, got {m_agents}")
    if not 0.0 <= alpha < alpha_limit:
        raise ValueError(
            f"corruption fraction must lie in [0, {alpha_limit:g}), got {alpha:g}"
        )
    if not 0.0 < delta < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {delta:g}")
    floor = 4.0 * math.exp(-m_agents / 2.0)
    if delta < floor:
        raise ConfidenceOutOfRange(
            f"delta={delta:g} is below the admissible floor "
            f"4*exp(-M/2)={floor:.3g} for M={m_agents} agents"
        )


def _raw_epsilon(alpha: float, delta: float, m_agents: int) -> float:
    return 8.0 * alpha + 24.0 * math.log(4.0 / delta) / m_agents


def compute_epsilon(alpha: float, delta: float, m_agents: int) -> float:
    """Resilience level for the clipped mean; raises when out of regime.

    The level is only meaningful below 1/2. When the formula overshoots,
    the error names the smallest even agent count that would bring it back
    in range at the same alpha and delta.
    """
    _check_population(alpha, delta, m_agents, ALPHA_LIMIT)
    eps = _raw_epsilon(alpha, delta, m_agents)
    if eps >= 0.5:
        headroom = 0.5 - 8.0 * alpha
        min_m = math.floor(24.0 * math.log(4.0 / delta) / headroom) + 1
        min_m += min_m % 2
        while 4.0 * math.exp(-min_m / 2.0) > delta:
            min_m += 2
        raise EpsilonOutOfRange(
            f"resilience level {eps:.6g} is not below 1/2 for M={m_agents}; "
            f"alpha={alpha:g} and delta={delta:g} need at least M={min_m} agents"
        )
    return eps


def saturating_epsilon(alpha: float, delta: float, m_agents: int) -> float:
    """Resilience level capped at 1/2 - 1/M instead of raising.

    The cap selects the innermost admissible rank pair, so aggregation
    degrades to clipping at the two middle order statistics rather than
    refusing to run. Used by the experiment harness, whose standard agent
    counts sit far below what the formula level needs.
    """
    _check_population(alpha, delta, m_agents, alpha_limit=0.5)
    return min(_raw_epsilon(alpha, delta, m_agents), 0.5 - 1.0 / m_agents)


@dataclass(frozen=True)
class TrimParams:
    """Validated aggregation parameters with their derived resilience level."""

    alpha: float
    delta: float
    m_agents: int
    epsilon: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "epsilon", compute_epsilon(self.alpha, self.delta, self.m_agents)
        )

    def error_bound(self, sigma: float, dim: int, rounds: int, c: float = 6.0) -> float:
        """High-probability per-run deviation bound c*sigma*(sqrt(alpha) + sqrt(ln(4dT^2)/M))."""
        logterm = math.log(4.0 * dim * rounds**2)
        return c * sigma * (math.sqrt(self.alpha) + math.sqrt(logterm / self.m_agents))


def clip_levels(half: int, eps: float) -> tuple[int, int]:
    """1-based sorted ranks (k_lo, k_hi) whose values bound the clamp interval."""
    if half < 1:
        raise ValueError(f"chunk size must be positive, got {half}")
    _check_eps(eps)
    k_lo = max(1, math.ceil(eps * half))
    k_hi = min(half, math.ceil((1.0 - eps) * half))
    return k_lo, k_hi


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps < 0.5:
        raise ValueError(f"resilience level must lie in [0, 1/2), got {eps:g}")
    return eps


@dataclass(eq=False)
class ChunkPartition:
    """Disjoint agent-id split into a quantile chunk and an average chunk."""

    quantile_ids: np.ndarray
    average_ids: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quantile_ids, dtype=np.int64)
        a = np.asarray(self.average_ids, dtype=np.int64)
        if q.ndim != 1 or a.ndim != 1 or len(q) != len(a):
            raise ValueError("partition chunks must be 1-D and equally sized")
        merged = np.sort(np.concatenate([q, a]))
        if len(q) == 0 or not np.array_equal(merged, np.arange(len(merged))):
            raise ValueError("partition chunks must cover agent ids 0..M-1 exactly once")
        self.quantile_ids = q
        self.average_ids = a

    @property
    def half(self) -> int:
        return len(self.quantile_ids)

    @property
    def m_agents(self) -> int:
        return 2 * len(self.quantile_ids)


def make_partition(
    m_agents: int, mode: str = "fixed", seed: int = 0, round_index: int = 0
) -> ChunkPartition:
    """Build the round's chunk split.

    "fixed" puts even agent ids in the quantile chunk and odd ids in the
    average chunk every round. "per-round-reshuffled" draws a fresh split
    from the (seed, round_index) stream, independent of gradient noise.
    """
    if m_agents < 2 or m_agents % 2:
        raise ValueError(f"agent count must be even and at least 2, got {m_agents}")
    if mode == "fixed":
        ids = np.arange(m_agents, dtype=np.int64)
        return ChunkPartition(ids[0::2], ids[1::2])
    if mode == "per-round-reshuffled":
        from .rng import TAG_SHUFFLE, permutation

        perm = permutation(seed, (TAG_SHUFFLE, round_index), m_agents)
        half = m_agents // 2
        return ChunkPartition(np.sort(perm[:half]), np.sort(perm[half:]))
    raise ValueError(f"unknown partition mode {mode!r}; use one of {PARTITION_MODES}")


def _trim_block(q_block: np.ndarray, a_block: np.ndarray, eps: float) -> np.ndarray:
    """Clipped mean of each row of a_block, bounds from the matching q_block row.

    Both blocks are (dim, half) and C-contiguous so the per-row sort and
    mean reduce along memory order, matching a 1-D call bitwise.
    """
    half = q_block.shape[1]
    k_lo, k_hi = clip_levels(half, eps)
    ordered = np.sort(q_block, axis=1)
    gamma = ordered[:, k_lo - 1 : k_lo]
    beta = ordered[:, k_hi - 1 : k_hi]
    return np.clip(a_block, gamma, beta).mean(axis=1)


def _as_chunk(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def trimmed_mean_1d(quantile_chunk, average_chunk, eps: float) -> float:
    """Robust location estimate from one coordinate's two chunks."""
    q = _as_chunk(quantile_chunk, "quantile chunk")
    a = _as_chunk(average_chunk, "average chunk")
    if len(q) == 0 and len(a) == 0:
        raise EmptyInputError("trimmed mean needs at least one value per chunk")
    if len(q) != len(a):
        raise DimensionError(f"chunk sizes differ: {len(q)} vs {len(a)}")
    eps = _check_eps(eps)
    return float(_trim_block(q[None, :], a[None, :], eps)[0])


def trim_vectors(samples, params, partition: ChunkPartition) -> np.ndarray:
    """Coordinatewise clipped mean of an (M, dim) sample matrix.

    `params` is either a TrimParams or a bare resilience level. Each output
    coordinate equals trimmed_mean_1d on that coordinate's chunks exactly.
    """
    mat = np.ascontiguousarray(samples, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError(f"samples must be (M, dim), got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("samples contain non-finite values")
    if mat.shape[0] != partition.m_agents:
        raise DimensionError(
            f"sample rows ({mat.shape[0]}) do not match partition size "
            f"({partition.m_agents})"
        )
    m_declared = getattr(params, "m_agents", mat.shape[0])
    if m_declared != mat.shape[0]:
        raise DimensionError(
            f"sample rows ({mat.shape[0]}) do not match declared agent count "
            f"({m_declared})"
        )
    eps = _check_eps(getattr(params, "epsilon", params))
    q_block = np.ascontiguousarray(mat[partition.quantile_ids].T)
    a_block = np.ascontiguousarray(mat[partition.average_ids].T)
    return _trim_block(q_block, a_block, eps)


def mean_vectors(samples) -> np.ndarray:
    """Plain coordinatewise mean of an (M, dim) sample matrix."""
    mat = np.ascontiguousarray(samples, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError(f"samples must be (M, dim), got shape {mat.shape}")
    if mat.shape[0] == 0:
        raise EmptyInputError("mean aggregation needs at least one sample")
    return mat.mean(axis=0)
