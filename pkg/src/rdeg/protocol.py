"""Server loop for robust distributed extra-gradient optimization.

One round queries every agent at the current iterate z_t, aggregates the
uploads, steps to a midpoint (descent in x, ascent in y), queries everyone
again at the midpoint, aggregates, and takes the final step from z_t with
the midpoint gradient. Aggregation is either the two-chunk clipped mean
(robust path) or the naive coordinatewise mean (the baseline a colluding
minority can steer).

Every random draw is keyed by (seed, tag, round, query, agent), so a run
is bit-identical across repeats and any parallel schedule, and corrupted
agents reuse the honest stream they would have had.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .aggregation import (
    PARTITION_MODES,
    ChunkPartition,
    make_partition,
    mean_vectors,
    trim_vectors,
)
from .errors import DimensionError, FeasibilityError, NumericalAbort
from .geometry import IteratePair, pair_distance_sq, project
from .problems import GradientSample
from .rng import TAG_ATTACK, TAG_HONEST, normal_rows

# corrupted uploads are clipped per coordinate so runs can measure
# divergence instead of dying on overflow
BYZANTINE_CAP = 1e12


# ------------------------------------------------------------------ attacks


@dataclass(frozen=True)
class SignFlip:
    """Send the honest sample negated and rescaled."""

    scale: float = 3.0


@dataclass(frozen=True)
class GaussianBlast:
    """Replace the sample with pure seeded noise of the given std."""

    std: float


@dataclass(frozen=True)
class ConstantShift:
    """Add a fixed vector to both gradient blocks."""

    shift: np.ndarray


@dataclass(frozen=True)
class Collusive:
    """Steer the naive-mean update toward a chosen point.

    Each colluder sends (M/B) times the gradient that would move the
    anchor exactly onto the target in one step, so the group's share of
    a naive mean produces that move on its own.
    """

    target: IteratePair


@dataclass(frozen=True)
class AttackContext:
    """What a corrupted agent knows when crafting an upload."""

    anchor: IteratePair
    eta: float
    m_agents: int
    n_byzantine: int
    seed: int
    round_index: int
    query_index: int
    agent_ids: np.ndarray

    def attack_normals(self, cols: int) -> np.ndarray:
        """Seeded standard normals, one row per corrupted agent."""
        return normal_rows(
            self.seed,
            (TAG_ATTACK, self.round_index, self.query_index),
            self.agent_ids,
            cols,
        )


def corrupt_rows(
    strategy, gx_rows: np.ndarray, gy_rows: np.ndarray, ctx: AttackContext
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupted uploads for the context's agents, before capping.

    `gx_rows`/`gy_rows` hold the honest samples those agents would have
    sent (their own streams), which several strategies build on.
    """
    if isinstance(strategy, SignFlip):
        return -strategy.scale * gx_rows, -strategy.scale * gy_rows
    if isinstance(strategy, GaussianBlast):
        n = gx_rows.shape[1]
        m = gy_rows.shape[1]
        noise = strategy.std * ctx.attack_normals(n + m)
        return noise[:, :n], noise[:, n:]
    if isinstance(strategy, ConstantShift):
        shift = np.asarray(strategy.shift, dtype=np.float64)
        if shift.shape != (gx_rows.shape[1],) or shift.shape != (gy_rows.shape[1],):
            raise DimensionError(
                f"shift of shape {shift.shape} does not match gradient width"
            )
        return gx_rows + shift, gy_rows + shift
    if isinstance(strategy, Collusive):
        scale = ctx.m_agents / (ctx.n_byzantine * ctx.eta)
        gx = (ctx.anchor.x - strategy.target.x) * scale
        gy = (strategy.target.y - ctx.anchor.y) * scale
        rows = len(ctx.agent_ids)
        return np.tile(gx, (rows, 1)), np.tile(gy, (rows, 1))
    raise TypeError(f"unknown attack strategy {strategy!r}")


def byzantine_response(
    strategy, honest_sample: GradientSample, context: AttackContext
) -> GradientSample:
    """One corrupted upload, capped to the finite range the server tolerates."""
    gx_rows, gy_rows = corrupt_rows(
        strategy, honest_sample.gx[None, :], honest_sample.gy[None, :], context
    )
    return GradientSample(
        np.clip(gx_rows[0], -BYZANTINE_CAP, BYZANTINE_CAP),
        np.clip(gy_rows[0], -BYZANTINE_CAP, BYZANTINE_CAP),
    )


def honest_response(problem, at: IteratePair, agent_rng) -> GradientSample:
    """One honest upload: a fresh stochastic gradient from the agent's stream."""
    return problem.sample_gradient(at, agent_rng)


# --------------------------------------------------------------- population


@dataclass(frozen=True)
class AgentPopulation:
    """A fixed pool of agents; the leading ids are the corrupted ones."""

    m_agents: int
    byzantine_ids: np.ndarray
    strategy: object | None

    @property
    def n_byzantine(self) -> int:
        return int(self.byzantine_ids.size)


def make_population(m_agents: int, alpha: float, strategy=None) -> AgentPopulation:
    """Population with floor(alpha * M) corrupted agents at ids 0..B-1."""
    if not isinstance(m_agents, (int, np.integer)) or m_agents < 1:
        raise ValueError(f"agent count must be a positive integer, got {m_agents!r}")
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"corrupted fraction must lie in [0, 1], got {alpha:g}")
    n_byz = int(math.floor(alpha * m_agents + 1e-9))
    if n_byz > 0 and strategy is None:
        raise ValueError("a population with corrupted agents needs a strategy")
    return AgentPopulation(
        m_agents=int(m_agents),
        byzantine_ids=np.arange(n_byz, dtype=np.int64),
        strategy=strategy if n_byz > 0 else None,
    )


# -------------------------------------------------------------------- state


@dataclass
class RoundData:
    """Everything one round read and wrote, for audits and replay."""

    t: int
    z_prev: IteratePair
    z_hat: IteratePair
    z_next: IteratePair
    agg_x_anchor: np.ndarray
    agg_y_anchor: np.ndarray
    agg_x_mid: np.ndarray
    agg_y_mid: np.ndarray


@dataclass
class ServerState:
    """Mutable loop state: t counts the next round to execute, from 1."""

    t: int
    z: IteratePair
    z_hat: IteratePair | None
    sum_x: np.ndarray
    sum_y: np.ndarray
    last: RoundData | None = None


def initial_pair(problem) -> IteratePair:
    """Deterministic feasible start halfway to the boundary along ones."""
    x = np.full(problem.n, problem.set_x.radius / (2.0 * math.sqrt(problem.n)))
    y = np.full(problem.m, problem.set_y.radius / (2.0 * math.sqrt(problem.m)))
    return IteratePair(x, y)


def initial_state(problem, at: IteratePair | None = None) -> ServerState:
    z = at.copy() if at is not None else initial_pair(problem)
    if not (problem.set_x.contains(z.x) and problem.set_y.contains(z.y)):
        raise FeasibilityError("starting point lies outside the feasible sets")
    return ServerState(
        t=1, z=z, z_hat=None, sum_x=np.zeros(problem.n), sum_y=np.zeros(problem.m)
    )


@dataclass(frozen=True)
class RunTrace:
    """Per-round records plus the final averaged midpoint pair."""

    t: np.ndarray
    gap: np.ndarray
    dist_sq: np.ndarray
    err_x_t: np.ndarray
    err_y_t: np.ndarray
    err_x_hat: np.ndarray
    err_y_hat: np.ndarray
    wall_ms: np.ndarray
    averaged: IteratePair
    final: IteratePair
    eta: float
    rounds: list[RoundData] | None = None

    @property
    def n_rounds(self) -> int:
        return int(self.t.size)


# -------------------------------------------------------------------- rounds


def default_step(problem) -> float:
    """1/(2L) for the flat case, 1/(4L) under strong curvature."""
    if problem.L <= 0.0:
        raise ValueError("the degenerate zero problem has no default step; pass eta")
    return 1.0 / (2.0 * problem.L) if problem.mu == 0.0 else 1.0 / (4.0 * problem.L)


def _collect(
    problem, at: IteratePair, anchor: IteratePair, population, seed, t, q, eta
) -> tuple[np.ndarray, np.ndarray]:
    """All M uploads for one query: honest rows, then corrupted overwrites."""
    ids = np.arange(population.m_agents, dtype=np.int64)
    if problem.noise_sigma > 0.0:
        zeta = problem.noise_sigma * normal_rows(seed, (TAG_HONEST, t, q), ids, problem.n)
    else:
        zeta = np.zeros((population.m_agents, problem.n))
    gx_rows, gy_rows = problem.gradient_batch(at, zeta)
    byz = population.byzantine_ids
    if byz.size:
        ctx = AttackContext(
            anchor=anchor,
            eta=eta,
            m_agents=population.m_agents,
            n_byzantine=byz.size,
            seed=seed,
            round_index=t,
            query_index=q,
            agent_ids=byz,
        )
        bad_x, bad_y = corrupt_rows(population.strategy, gx_rows[byz], gy_rows[byz], ctx)
        gx_rows[byz] = np.clip(bad_x, -BYZANTINE_CAP, BYZANTINE_CAP)
        gy_rows[byz] = np.clip(bad_y, -BYZANTINE_CAP, BYZANTINE_CAP)
    return gx_rows, gy_rows


def _ensure_finite(gx_rows, gy_rows, t, q) -> None:
    if not (np.isfinite(gx_rows).all() and np.isfinite(gy_rows).all()):
        raise NumericalAbort(f"non-finite agent uploads at query {q}", round_index=t)


def _execute_round(state, problem, population, aggregate, eta, seed) -> ServerState:
    t = state.t
    z = state.z
    gx_rows, gy_rows = _collect(problem, z, z, population, seed, t, 0, eta)
    _ensure_finite(gx_rows, gy_rows, t, 0)
    agg_x_anchor, agg_y_anchor = aggregate(gx_rows, gy_rows, t)
    z_hat = IteratePair(
        project(problem.set_x, z.x - eta * agg_x_anchor),
        project(problem.set_y, z.y + eta * agg_y_anchor),
    )
    gx_rows, gy_rows = _collect(problem, z_hat, z, population, seed, t, 1, eta)
    _ensure_finite(gx_rows, gy_rows, t, 1)
    agg_x_mid, agg_y_mid = aggregate(gx_rows, gy_rows, t)
    # final step anchored at z_t with the midpoint gradient
    z_next = IteratePair(
        project(problem.set_x, z.x - eta * agg_x_mid),
        project(problem.set_y, z.y + eta * agg_y_mid),
    )
    state.sum_x += z_hat.x
    state.sum_y += z_hat.y
    state.z_hat = z_hat
    state.last = RoundData(
        t=t,
        z_prev=z,
        z_hat=z_hat,
        z_next=z_next,
        agg_x_anchor=agg_x_anchor,
        agg_y_anchor=agg_y_anchor,
        agg_x_mid=agg_x_mid,
        agg_y_mid=agg_y_mid,
    )
    state.z = z_next
    state.t = t + 1
    return state


def rdeg_round(
    state: ServerState,
    problem,
    population: AgentPopulation,
    params,
    partition: ChunkPartition,
    eta: float,
    seed: int = 0,
) -> ServerState:
    """One robust round using the given chunk split; mutates and returns state."""

    def aggregate(gx_rows, gy_rows, t):
        return (
            trim_vectors(gx_rows, params, partition),
            trim_vectors(gy_rows, params, partition),
        )

    return _execute_round(state, problem, population, aggregate, eta, seed)


def vanilla_round(
    state: ServerState, problem, population: AgentPopulation, eta: float, seed: int = 0
) -> ServerState:
    """One naive-mean round; mutates and returns state."""

    def aggregate(gx_rows, gy_rows, t):
        return mean_vectors(gx_rows), mean_vectors(gy_rows)

    return _execute_round(state, problem, population, aggregate, eta, seed)


# --------------------------------------------------------------------- runs


def _make_aggregator(params, m_agents: int, partition_mode: str, seed: int):
    if params is None:
        def aggregate(gx_rows, gy_rows, t):
            return mean_vectors(gx_rows), mean_vectors(gy_rows)

        return aggregate
    declared = getattr(params, "m_agents", None)
    if declared is not None and declared != m_agents:
        raise DimensionError(
            f"trim parameters expect M={declared} agents, population has {m_agents}"
        )
    if partition_mode not in PARTITION_MODES:
        raise ValueError(
            f"unknown partition mode {partition_mode!r}; use one of {PARTITION_MODES}"
        )
    if partition_mode == "fixed":
        part = make_partition(m_agents)

        def aggregate(gx_rows, gy_rows, t):
            return trim_vectors(gx_rows, params, part), trim_vectors(gy_rows, params, part)

        return aggregate
    make_partition(m_agents)  # fail fast on odd M

    def aggregate(gx_rows, gy_rows, t):
        part = make_partition(m_agents, partition_mode, seed, t)
        return trim_vectors(gx_rows, params, part), trim_vectors(gy_rows, params, part)

    return aggregate


def run(
    problem,
    population: AgentPopulation,
    params=None,
    eta: float | None = None,
    rounds: int = 1,
    seed: int = 0,
    partition_mode: str = "fixed",
    keep_rounds: bool = False,
) -> RunTrace:
    """Execute the full loop and record the trace.

    `params` selects aggregation: None means the naive mean; a TrimParams
    or a bare resilience level selects the robust path. The per-round gap
    is evaluated at the running average of the midpoints; dist_sq tracks
    the updated iterate against the saddle (NaN column when the problem
    has no interior saddle). A non-finite value anywhere stops the run
    with the partial trace attached to the error.
    """
    rounds = int(rounds)
    if rounds < 1:
        raise ValueError(f"round count must be at least 1, got {rounds}")
    if eta is None:
        eta = default_step(problem)
    eta = float(eta)
    if not (np.isfinite(eta) and eta > 0.0):
        raise ValueError(f"step size must be positive and finite, got {eta:g}")
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    aggregate = _make_aggregator(params, population.m_agents, partition_mode, seed)
    state = initial_state(problem)
    star = problem.saddle

    t_col = np.arange(1, rounds + 1, dtype=np.int64)
    gap = np.empty(rounds)
    dist_sq = np.empty(rounds)
    err_x_t = np.empty(rounds)
    err_y_t = np.empty(rounds)
    err_x_hat = np.empty(rounds)
    err_y_hat = np.empty(rounds)
    wall_ms = np.empty(rounds)
    kept: list[RoundData] | None = [] if keep_rounds else None

    def partial_trace(upto: int) -> RunTrace:
        if upto > 0:
            averaged = IteratePair(state.sum_x / upto, state.sum_y / upto)
        else:
            averaged = state.z.copy()
        return RunTrace(
            t=t_col[:upto].copy(),
            gap=gap[:upto].copy(),
            dist_sq=dist_sq[:upto].copy(),
            err_x_t=err_x_t[:upto].copy(),
            err_y_t=err_y_t[:upto].copy(),
            err_x_hat=err_x_hat[:upto].copy(),
            err_y_hat=err_y_hat[:upto].copy(),
            wall_ms=wall_ms[:upto].copy(),
            averaged=averaged,
            final=state.z.copy(),
            eta=eta,
            rounds=kept,
        )

    for idx in range(rounds):
        began = time.perf_counter()
        try:
            _execute_round(state, problem, population, aggregate, eta, seed)
        except NumericalAbort as abort:
            abort.trace = partial_trace(idx)
            raise
        rd = state.last
        pop_anchor = problem.population_gradient(rd.z_prev)
        pop_mid = problem.population_gradient(rd.z_hat)
        err_x_t[idx] = np.linalg.norm(rd.agg_x_anchor - pop_anchor.gx)
        err_y_t[idx] = np.linalg.norm(rd.agg_y_anchor - pop_anchor.gy)
        err_x_hat[idx] = np.linalg.norm(rd.agg_x_mid - pop_mid.gx)
        err_y_hat[idx] = np.linalg.norm(rd.agg_y_mid - pop_mid.gy)
        done = idx + 1
        gap[idx] = problem.primal_dual_gap(state.sum_x / done, state.sum_y / done)
        dist_sq[idx] = pair_distance_sq(star, state.z) if star is not None else np.nan
        if kept is not None:
            kept.append(rd)
        wall_ms[idx] = (time.perf_counter() - began) * 1e3
        if not np.isfinite(gap[idx]):
            abort = NumericalAbort("non-finite recorded gap", round_index=done)
            abort.trace = partial_trace(idx)
            raise abort

    return RunTrace(
        t=t_col,
        gap=gap,
        dist_sq=dist_sq,
        err_x_t=err_x_t,
        err_y_t=err_y_t,
        err_x_hat=err_x_hat,
        err_y_hat=err_y_hat,
        wall_ms=wall_ms,
        averaged=IteratePair(state.sum_x / rounds, state.sum_y / rounds),
        final=state.z.copy(),
        eta=eta,
        rounds=kept,
    )


# -------------------------------------------------------------------- audits


def replay_update(problem, rd: RoundData, eta: float) -> tuple[IteratePair, IteratePair]:
    """Recompute both updates from the recorded inputs, same operations."""
    z = rd.z_prev
    z_hat = IteratePair(
        project(problem.set_x, z.x - eta * rd.agg_x_anchor),
        project(problem.set_y, z.y + eta * rd.agg_y_anchor),
    )
    z_next = IteratePair(
        project(problem.set_x, z.x - eta * rd.agg_x_mid),
        project(problem.set_y, z.y + eta * rd.agg_y_mid),
    )
    return z_hat, z_next


def projected_update_residuals(rd: RoundData, eta: float, probe: IteratePair) -> np.ndarray:
    """Slack of the four projected-update inequalities at a feasible probe.

    For the descent block each update new = proj(old - eta*g) satisfies
    2*eta*<g, new - v> <= |v-old|^2 - |v-new|^2 - |new-old|^2 for every
    feasible v; the ascent block mirrors the sign. Returns the four
    right-minus-left slacks, nonnegative up to roundoff.
    """

    def slack(v, old, new, g, ascent):
        drop = float((v - old) @ (v - old) - (v - new) @ (v - new) - (new - old) @ (new - old))
        direction = (v - new) if ascent else (new - v)
        return drop - 2.0 * eta * float(g @ direction)

    return np.array(
        [
            slack(probe.x, rd.z_prev.x, rd.z_hat.x, rd.agg_x_anchor, ascent=False),
            slack(probe.y, rd.z_prev.y, rd.z_hat.y, rd.agg_y_anchor, ascent=True),
            slack(probe.x, rd.z_prev.x, rd.z_next.x, rd.agg_x_mid, ascent=False),
            slack(probe.y, rd.z_prev.y, rd.z_next.y, rd.agg_y_mid, ascent=True),
        ]
    )
