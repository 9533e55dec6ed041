"""Byzantine-resilient distributed extra-gradient for saddle-point games.

The package simulates a parameter server running the extra-gradient
method over M agents, some of which may upload adversarial gradients.
Univariate trimmed-mean aggregation keeps the updates close to the true
gradient field, so the run converges where a naive mean is steered away.

Layers: `geometry` and `rng` give feasible sets and counter-based
streams; `problems` holds closed-form saddle-point test games;
`aggregation` implements the robust estimator; `protocol` the
server/agent loop; `harness` configs, experiment files, and sweeps.
"""

from __future__ import annotations

from .aggregation import (
    ALPHA_LIMIT,
    PARTITION_MODES,
    ChunkPartition,
    TrimParams,
    clip_levels,
    compute_epsilon,
    make_partition,
    mean_vectors,
    saturating_epsilon,
    trim_vectors,
    trimmed_mean_1d,
)
from .errors import (
    ConfidenceOutOfRange,
    ConfigError,
    DimensionError,
    EmptyInputError,
    EpsilonOutOfRange,
    FeasibilityError,
    NoInteriorSaddleError,
    NumericalAbort,
    RdegError,
)
from .geometry import BallSet, IteratePair, pair_distance_sq, project
from .harness import (
    ALPHA_CAP,
    CONFIG_KEYS,
    RunConfig,
    __version__,
    SweepSpec,
    TrimPolicy,
    build_attack,
    error_floor,
    format_config,
    make_problem,
    parse_config,
    resolve_trim,
    run_experiment,
    run_sweep,
    selftest,
    validate_config,
)
from .problems import (
    PRESET_NAMES,
    BilinearGame,
    GradientSample,
    SaddleProblem,
    ScScQuadraticGame,
    make_preset,
)
from .protocol import (
    BYZANTINE_CAP,
    AgentPopulation,
    Collusive,
    ConstantShift,
    GaussianBlast,
    RoundData,
    RunTrace,
    ServerState,
    SignFlip,
    default_step,
    initial_pair,
    initial_state,
    make_population,
    projected_update_residuals,
    rdeg_round,
    replay_update,
    run,
    vanilla_round,
)
from .rng import CounterStream, normal_block, normal_rows, permutation, stream_key

__all__ = [
    "ALPHA_CAP",
    "ALPHA_LIMIT",
    "AgentPopulation",
    "BYZANTINE_CAP",
    "BallSet",
    "BilinearGame",
    "CONFIG_KEYS",
    "ChunkPartition",
    "Collusive",
    "ConfidenceOutOfRange",
    "ConfigError",
    "ConstantShift",
    "CounterStream",
    "DimensionError",
    "EmptyInputError",
    "EpsilonOutOfRange",
    "FeasibilityError",
    "GaussianBlast",
    "GradientSample",
    "IteratePair",
    "NoInteriorSaddleError",
    "NumericalAbort",
    "PARTITION_MODES",
    "PRESET_NAMES",
    "RdegError",
    "RoundData",
    "RunConfig",
    "RunTrace",
    "SaddleProblem",
    "ScScQuadraticGame",
    "ServerState",
    "SignFlip",
    "SweepSpec",
    "TrimParams",
    "TrimPolicy",
    "build_attack",
    "clip_levels",
    "compute_epsilon",
    "default_step",
    "error_floor",
    "format_config",
    "initial_pair",
    "initial_state",
    "make_partition",
    "make_population",
    "make_preset",
    "make_problem",
    "mean_vectors",
    "normal_block",
    "normal_rows",
    "pair_distance_sq",
    "parse_config",
    "permutation",
    "project",
    "projected_update_residuals",
    "rdeg_round",
    "replay_update",
    "resolve_trim",
    "run",
    "run_experiment",
    "run_sweep",
    "saturating_epsilon",
    "selftest",
    "stream_key",
    "trim_vectors",
    "trimmed_mean_1d",
    "validate_config",
    "vanilla_round",
]
