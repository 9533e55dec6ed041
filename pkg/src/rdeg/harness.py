"""Experiment harness: config files, single runs, and parameter sweeps.

A run is described by a small key=value text config. The harness resolves
it against the problem presets, executes the protocol, and writes
`trace.csv` (one row per round) plus `summary.json` (final numbers and a
re-parseable echo of the resolved config). Sweeps repeat runs over one
swept field and report whether the median error floors move in the
direction the aggregation guarantees predict.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .aggregation import PARTITION_MODES, _raw_epsilon, saturating_epsilon
from .errors import ConfidenceOutOfRange, ConfigError, EpsilonOutOfRange, NumericalAbort
from .geometry import IteratePair
from .problems import PRESET_NAMES, PRESET_SIGMA2, make_preset
from .protocol import (
    Collusive,
    ConstantShift,
    GaussianBlast,
    SignFlip,
    default_step,
    make_population,
    run,
)

__version__ = "0.1.0"

# config keys, in canonical echo order
CONFIG_KEYS = (
    "problem",
    "algo",
    "agents",
    "alpha",
    "delta",
    "sigma2",
    "eta",
    "rounds",
    "seed",
    "attack",
    "attack_scale",
    "partition_mode",
)

ALGO_NAMES = ("rdeg", "vanilla")
ATTACK_NAMES = ("collusive", "sign-flip", "gaussian-blast", "constant-shift")
SWEEP_PARAMS = ("alpha", "agents", "sigma2")

# the trimming guarantee assumes alpha < 1/16; the harness admits up to 1/8
# so stress sweeps can cross the guaranteed regime deliberately
ALPHA_CAP = 0.125

TRACE_COLUMNS = ("t", "gap", "dist_sq", "err_x_t", "err_y_t", "err_x_hat", "err_y_hat", "wall_ms")

# how the median error floor should move as the swept value grows
_SWEEP_DIRECTION = {
    "alpha": "nondecreasing",
    "agents": "nonincreasing",
    "sigma2": "nondecreasing",
}


@dataclass(frozen=True)
class RunConfig:
    """One fully resolved experiment: every field concrete and validated."""

    problem: str = "bilinear-sec6"
    algo: str = "rdeg"
    agents: int = 100
    alpha: float = 0.06
    delta: float = 0.05
    sigma2: float = PRESET_SIGMA2
    eta: float = 0.5
    rounds: int = 5000
    seed: int = 0
    attack: str = "collusive"
    attack_scale: float = 3.0
    partition_mode: str = "fixed"


@dataclass(frozen=True)
class SweepSpec:
    """A base config plus one swept field, its values, and trials per value."""

    base: RunConfig
    param: str
    values: tuple
    trials: int


@dataclass(frozen=True)
class TrimPolicy:
    """Trim levels actually used by a run.

    Unlike the strict TrimParams contract this carries the saturated
    epsilon, so configs outside the guaranteed (alpha, delta, M) regime
    still run with the heaviest trim the chunk size supports.
    """

    m_agents: int
    alpha: float
    delta: float
    epsilon: float
    saturated: bool


# ------------------------------------------------------------------- parsing


def _as_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ValueError(f"{text!r} is not an integer") from None


def _as_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{text!r} is not a number") from None
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


_CONVERTERS = {
    "problem": str,
    "algo": str,
    "agents": _as_int,
    "alpha": _as_float,
    "delta": _as_float,
    "sigma2": _as_float,
    "eta": lambda text: "auto" if text == "auto" else _as_float(text),
    "rounds": _as_int,
    "seed": _as_int,
    "attack": str,
    "attack_scale": _as_float,
    "partition_mode": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse key=value lines into a validated RunConfig.

    Blank lines and `#` comments (full-line or trailing) are ignored.
    Missing keys take the documented defaults; "auto" eta resolves to the
    problem's default step. Any violation raises ConfigError naming the
    offending line.
    """
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected key=value, got {body!r}", lineno)
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(
                f"unknown key {key!r}; known keys: {', '.join(CONFIG_KEYS)}", lineno
            )
        if key in raw:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {raw[key][1]})", lineno
            )
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        raw[key] = (value, lineno)

    fields: dict[str, object] = {}
    for key, (value, lineno) in raw.items():
        try:
            fields[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None

    def line_of(*keys: str) -> int | None:
        for key in keys:
            if key in raw:
                return raw[key][1]
        return None

    _check_fields(fields, line_of)

    # fill remaining defaults, then resolve "auto" eta from the preset
    cfg = RunConfig(**fields)
    if fields.get("eta", "auto") == "auto":
        problem = make_preset(cfg.problem, cfg.sigma2)
        cfg = dataclasses.replace(cfg, eta=default_step(problem))
    _check_regime(cfg, line_of)
    return cfg


def _check_fields(fields: dict, line_of) -> None:
    """Per-field constraints, raised with the offending line when known."""

    def fail(key: str, message: str):
        raise ConfigError(message, line_of(key))

    problem = fields.get("problem", "bilinear-sec6")
    if problem not in PRESET_NAMES:
        fail("problem", f"problem must be one of {', '.join(PRESET_NAMES)}; got {problem!r}")
    algo = fields.get("algo", "rdeg")
    if algo not in ALGO_NAMES:
        fail("algo", f"algo must be one of {', '.join(ALGO_NAMES)}; got {algo!r}")
    agents = fields.get("agents", 100)
    if agents < 1:
        fail("agents", f"agents must be a positive count; got {agents}")
    if algo == "rdeg" and agents % 2 != 0:
        fail(
            "agents",
            f"the two-chunk trimmed mean needs an even number of agents; got {agents}",
        )
    alpha = fields.get("alpha", 0.06)
    if not 0.0 <= alpha < ALPHA_CAP:
        fail(
            "alpha",
            f"alpha={alpha!r} outside [0, {ALPHA_CAP}): the trimming guarantee assumes "
            "alpha < 1/16, and values up to 1/8 are admitted only for stress sweeps",
        )
    delta = fields.get("delta", 0.05)
    if not 0.0 < delta < 1.0:
        fail("delta", f"delta must lie strictly between 0 and 1; got {delta!r}")
    sigma2 = fields.get("sigma2", PRESET_SIGMA2)
    if sigma2 < 0.0:
        fail("sigma2", f"sigma2 must be a nonnegative variance; got {sigma2!r}")
    eta = fields.get("eta", "auto")
    if eta != "auto" and eta <= 0.0:
        fail("eta", f"eta must be positive (or the string auto); got {eta!r}")
    if fields.get("rounds", 1) < 1:
        fail("rounds", f"rounds must be at least 1; got {fields['rounds']}")
    if fields.get("seed", 0) < 0:
        fail("seed", f"seed must be a nonnegative integer; got {fields['seed']}")
    attack = fields.get("attack", "collusive")
    if attack not in ATTACK_NAMES:
        fail("attack", f"attack must be one of {', '.join(ATTACK_NAMES)}; got {attack!r}")
    if fields.get("attack_scale", 3.0) <= 0.0:
        fail("attack_scale", f"attack_scale must be positive; got {fields['attack_scale']!r}")
    mode = fields.get("partition_mode", "fixed")
    if mode not in PARTITION_MODES:
        fail(
            "partition_mode",
            f"partition_mode must be one of {', '.join(PARTITION_MODES)}; got {mode!r}",
        )


def _check_regime(cfg: RunConfig, line_of) -> None:
    """Trim-level feasibility for rdeg runs (delta vs the confidence floor)."""
    if cfg.algo != "rdeg":
        return
    try:
        saturating_epsilon(cfg.alpha, cfg.delta, cfg.agents)
    except (ConfidenceOutOfRange, EpsilonOutOfRange) as exc:
        raise ConfigError(str(exc), line_of("delta", "agents")) from None


def validate_config(cfg: RunConfig) -> None:
    """Re-check a RunConfig built outside parse_config (e.g. via replace)."""

    def no_lines(*keys):
        return None

    _check_fields(dataclasses.asdict(cfg), no_lines)
    if not (isinstance(cfg.eta, float) and cfg.eta > 0.0 and math.isfinite(cfg.eta)):
        raise ConfigError(f"eta must be a resolved positive step; got {cfg.eta!r}")
    _check_regime(cfg, no_lines)


def format_config(cfg: RunConfig) -> str:
    """Canonical key=value echo. parse_config(format_config(cfg)) == cfg."""
    parts = []
    for key in CONFIG_KEYS:
        value = getattr(cfg, key)
        parts.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------- resolution


def make_problem(cfg: RunConfig):
    return make_preset(cfg.problem, cfg.sigma2)


def build_attack(cfg: RunConfig, problem):
    """Map the config's attack name onto a strategy instance."""
    if cfg.attack == "sign-flip":
        return SignFlip(scale=cfg.attack_scale)
    if cfg.attack == "gaussian-blast":
        return GaussianBlast(std=cfg.attack_scale)
    if cfg.attack == "constant-shift":
        return ConstantShift(shift=np.full(problem.n, cfg.attack_scale))
    # collusion steers toward the far corner of the feasible balls
    u = np.ones(problem.n) / math.sqrt(problem.n)
    target = IteratePair(problem.set_x.radius * u, -problem.set_y.radius * u)
    return Collusive(target=target)


def resolve_trim(cfg: RunConfig) -> TrimPolicy | None:
    """Trim levels for the run; None means plain averaging (vanilla)."""
    if cfg.algo != "rdeg":
        return None
    epsilon = saturating_epsilon(cfg.alpha, cfg.delta, cfg.agents)
    formula = _raw_epsilon(cfg.alpha, cfg.delta, cfg.agents)
    return TrimPolicy(
        m_agents=cfg.agents,
        alpha=cfg.alpha,
        delta=cfg.delta,
        epsilon=epsilon,
        saturated=epsilon < formula,
    )


def error_floor(gap: np.ndarray) -> float:
    """Mean gap over the final tenth of the rounds (at least one round)."""
    gap = np.asarray(gap, dtype=np.float64)
    if gap.size == 0:
        return float("nan")
    tail = max(1, gap.size // 10)
    return float(np.mean(gap[-tail:]))


# ------------------------------------------------------------------ running


def _json_float(value) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def _summarize(cfg: RunConfig, problem, policy: TrimPolicy | None, trace, abort) -> dict:
    empty = trace.n_rounds == 0
    return {
        "version": __version__,
        "config": {key: getattr(cfg, key) for key in CONFIG_KEYS},
        "config_text": format_config(cfg),
        "resolved": {
            "eta": cfg.eta,
            "epsilon": None if policy is None else policy.epsilon,
            "epsilon_saturated": None if policy is None else policy.saturated,
            "n_byzantine": int(math.floor(cfg.alpha * cfg.agents + 1e-9)),
            "problem_dim": int(problem.n),
            "radius": float(problem.set_x.radius),
            "smoothness": float(problem.L),
            "curvature": float(problem.mu),
        },
        "rounds_completed": int(trace.n_rounds),
        "final_gap": None if empty else _json_float(trace.gap[-1]),
        "final_dist_sq": None if empty else _json_float(trace.dist_sq[-1]),
        "error_floor": _json_float(error_floor(trace.gap)),
        "wall_ms_total": float(np.sum(trace.wall_ms)) if not empty else 0.0,
        "abort": abort,
    }


def _write_trace(trace, path: str) -> None:
    lines = [",".join(TRACE_COLUMNS)]
    for i in range(trace.n_rounds):
        lines.append(
            ",".join(
                [
                    str(int(trace.t[i])),
                    repr(float(trace.gap[i])),
                    repr(float(trace.dist_sq[i])),
                    repr(float(trace.err_x_t[i])),
                    repr(float(trace.err_y_t[i])),
                    repr(float(trace.err_x_hat[i])),
                    repr(float(trace.err_y_hat[i])),
                    repr(float(trace.wall_ms[i])),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg: RunConfig, out_dir=None, figures: bool = True):
    """Execute one config; optionally write trace.csv/summary.json/run.png.

    Returns (summary, trace). A numerical abort does not raise: the trace
    covers the completed rounds and summary["abort"] records the failing
    round, so sweeps and the CLI can report it.
    """
    validate_config(cfg)
    problem = make_preset(cfg.problem, cfg.sigma2)
    population = make_population(cfg.agents, cfg.alpha, build_attack(cfg, problem))
    policy = resolve_trim(cfg)
    abort = None
    try:
        trace = run(
            problem,
            population,
            params=policy,
            eta=cfg.eta,
            rounds=cfg.rounds,
            seed=cfg.seed,
            partition_mode=cfg.partition_mode,
        )
    except NumericalAbort as exc:
        if exc.trace is None:
            raise
        trace = exc.trace
        abort = {"round_index": exc.round_index, "message": str(exc)}
    summary = _summarize(cfg, problem, policy, trace, abort)
    if out_dir is not None:
        out_dir = str(out_dir)
        os.makedirs(out_dir, exist_ok=True)
        _write_trace(trace, os.path.join(out_dir, "trace.csv"))
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        if figures:
            from . import plots

            plots.render_run_figures(trace, os.path.join(out_dir, "run.png"), cfg)
    return summary, trace


# ------------------------------------------------------------------- sweeps


def _derive(spec: SweepSpec, value, trial: int) -> RunConfig:
    swept = {spec.param: int(value) if spec.param == "agents" else float(value)}
    return dataclasses.replace(spec.base, seed=spec.base.seed + trial, **swept)


def _sweep_point(config_text: str):
    """Worker entry: run one derived config without touching the filesystem."""
    cfg = parse_config(config_text)
    summary, _ = run_experiment(cfg, out_dir=None, figures=False)
    return (
        summary["error_floor"],
        summary["final_dist_sq"],
        None if summary["abort"] is None else summary["abort"]["round_index"],
    )


def run_sweep(spec: SweepSpec, out_dir=None, jobs: int = 1, figures: bool = True) -> dict:
    """Run trials for every swept value; write sweep.csv plus report.json.

    Rows are ordered value-major, trial-minor, and results are collected
    in submission order, so the emitted bytes do not depend on `jobs`.
    """
    if spec.param not in SWEEP_PARAMS:
        raise ConfigError(
            f"sweep param must be one of {', '.join(SWEEP_PARAMS)}; got {spec.param!r}"
        )
    if not spec.values:
        raise ConfigError("sweep needs at least one value")
    if spec.trials < 1:
        raise ConfigError(f"trials must be at least 1; got {spec.trials}")
    points = [
        (value, trial, _derive(spec, value, trial))
        for value in spec.values
        for trial in range(spec.trials)
    ]
    for value, _, cfg in points:
        try:
            validate_config(cfg)
        except ConfigError as exc:
            raise ConfigError(f"sweep value {value!r} for {spec.param}: {exc}") from None

    payloads = [format_config(cfg) for _, _, cfg in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(text) for text in payloads]

    rows = []
    aborts = []
    for (value, trial, _), (floor, final_dist, abort_round) in zip(points, results):
        rows.append(
            {
                "value": value,
                "trial": trial,
                "error_floor": float("nan") if floor is None else floor,
                "final_dist_sq": float("nan") if final_dist is None else final_dist,
            }
        )
        if abort_round is not None:
            aborts.append({"value": value, "trial": trial, "round_index": abort_round})

    floors_by_value = {
        value: [row["error_floor"] for row in rows if row["value"] == value]
        for value in spec.values
    }
    medians = [float(np.median(floors_by_value[value])) for value in spec.values]
    diffs = np.diff(medians)
    expected = _SWEEP_DIRECTION[spec.param]
    consistent = bool(np.all(diffs >= 0)) if expected == "nondecreasing" else bool(
        np.all(diffs <= 0)
    )
    if diffs.size == 0 or np.all(diffs == 0):
        observed = "constant"
    elif np.all(diffs >= 0):
        observed = "nondecreasing"
    elif np.all(diffs <= 0):
        observed = "nonincreasing"
    else:
        observed = "mixed"
    report = {
        "param": spec.param,
        "values": [int(v) if spec.param == "agents" else float(v) for v in spec.values],
        "trials": int(spec.trials),
        "median_floors": medians,
        "expected_direction": expected,
        "observed_direction": observed,
        "consistent": consistent,
        "aborts": aborts,
    }

    if out_dir is not None:
        out_dir = str(out_dir)
        os.makedirs(out_dir, exist_ok=True)
        lines = ["value,trial,error_floor,final_dist_sq"]
        for row in rows:
            value_text = (
                str(int(row["value"])) if spec.param == "agents" else repr(float(row["value"]))
            )
            lines.append(
                f"{value_text},{row['trial']},{repr(row['error_floor'])},"
                f"{repr(row['final_dist_sq'])}"
            )
        with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        if figures:
            from . import plots

            plots.render_sweep_figure(report, floors_by_value, os.path.join(out_dir, "sweep.png"))
    return report


# ----------------------------------------------------------------- selftest


def _selftest_checks():
    from .aggregation import compute_epsilon, make_partition, trim_vectors
    from .geometry import BallSet, project
    from .problems import BilinearGame
    from .protocol import (
        initial_state,
        projected_update_residuals,
        replay_update,
        vanilla_round,
    )
    from .rng import CounterStream

    def epsilon_formula():
        want = 8.0 * 0.01 + 24.0 * math.log(4.0 / 0.01) / 2400.0
        got = compute_epsilon(0.01, 0.01, 2400)
        assert abs(got - want) < 1e-15, f"epsilon {got} != {want}"

    def trim_confinement_and_repeatability():
        stream = CounterStream(7, 90)
        part = make_partition(20)
        policy = TrimPolicy(20, 0.05, 0.1, saturating_epsilon(0.05, 0.1, 20), True)
        for _ in range(25):
            rows = np.asarray(stream.standard_normal(20 * 3)).reshape(20, 3) * 10.0
            out = trim_vectors(rows, policy, part)
            slack = 8.0 * np.spacing(np.abs(rows).max())
            assert np.all(out >= rows.min(axis=0) - slack), "trim fell below the sample range"
            assert np.all(out <= rows.max(axis=0) + slack), "trim rose above the sample range"
            again = trim_vectors(rows, policy, make_partition(20))
            assert np.array_equal(out, again), "trim is not repeatable"

    def projection_feasibility():
        stream = CounterStream(7, 91)
        for _ in range(200):
            point = np.asarray(stream.standard_normal(4)) * 1e4
            radius = float(abs(np.asarray(stream.standard_normal(1))[0])) + 0.1
            ball = BallSet(radius=radius, dim=4)
            assert ball.contains(project(ball, point)), "projection left the ball"

    def gradient_unbiasedness():
        problem = make_preset("bilinear-sec6")
        at = IteratePair(np.ones(10), -np.ones(10))
        want = problem.population_gradient(at).gx[0]
        stream = CounterStream(7, 92)
        draws = [problem.sample_gradient(at, stream).gx[0] for _ in range(4000)]
        err = abs(float(np.mean(draws)) - float(want))
        assert err < 0.5, f"sample gradient biased by {err}"

    def hand_round():
        problem = BilinearGame(np.eye(1), radius=10.0, sigma2=0.0)
        state = initial_state(problem, IteratePair(np.ones(1), np.ones(1)))
        vanilla_round(state, problem, make_population(2, 0.0), eta=0.1)
        assert abs(state.z_hat.x[0] - 0.9) < 1e-12, "midpoint x"
        assert abs(state.z_hat.y[0] - 1.1) < 1e-12, "midpoint y"
        assert abs(state.z.x[0] - 0.89) < 1e-12, "committed x"
        assert abs(state.z.y[0] - 1.09) < 1e-12, "committed y"

    def replay_and_audits():
        problem = make_preset("bilinear-sec6", sigma2=1.0)
        population = make_population(10, 0.1, SignFlip())
        policy = TrimPolicy(10, 0.1, 0.3, saturating_epsilon(0.1, 0.3, 10), True)
        trace = run(problem, population, params=policy, rounds=25, seed=4, keep_rounds=True)
        probe = trace.final
        for rd in trace.rounds:
            z_hat, z_next = replay_update(problem, rd, trace.eta)
            assert np.array_equal(z_hat.x, rd.z_hat.x), "midpoint replay drifted"
            assert np.array_equal(z_next.y, rd.z_next.y), "commit replay drifted"
            slacks = projected_update_residuals(rd, trace.eta, probe)
            worst = float(np.min(slacks))
            assert worst >= -1e-8, f"projected-update audit failed: {worst}"

    def run_determinism():
        problem = make_preset("bilinear-sec6")
        population = make_population(10, 0.1, SignFlip())
        one = run(problem, population, params=None, rounds=20, seed=5)
        two = run(problem, population, params=None, rounds=20, seed=5)
        other = run(problem, population, params=None, rounds=20, seed=6)
        assert np.array_equal(one.gap, two.gap), "same seed, different gaps"
        assert not np.array_equal(one.gap, other.gap), "seed had no effect"

    return [
        ("epsilon formula", epsilon_formula),
        ("trim confinement and repeatability", trim_confinement_and_repeatability),
        ("projection feasibility", projection_feasibility),
        ("gradient unbiasedness", gradient_unbiasedness),
        ("hand-checked update", hand_round),
        ("replay and update audits", replay_and_audits),
        ("run determinism", run_determinism),
    ]


def selftest() -> int:
    """Run the built-in invariant checks; 0 when everything holds."""
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except AssertionError as exc:
            print(f"FAIL {name}: {exc}")
            failures += 1
        else:
            print(f"ok {name}")
    return 1 if failures else 0
