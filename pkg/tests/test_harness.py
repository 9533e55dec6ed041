"""Config parsing, experiment output files, sweeps, and the CLI."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import pytest

from rdeg import cli
from rdeg.aggregation import saturating_epsilon
from rdeg.errors import ConfigError
from rdeg.harness import (
    ALPHA_CAP,
    CONFIG_KEYS,
    RunConfig,
    SweepSpec,
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
from rdeg.problems import BilinearGame
from rdeg.protocol import Collusive, ConstantShift, GaussianBlast, SignFlip

TRACE_HEADER = "t,gap,dist_sq,err_x_t,err_y_t,err_x_hat,err_y_hat,wall_ms"

SMALL = "\n".join(
    [
        "problem=bilinear-sec6",
        "agents=20",
        "alpha=0.05",
        "sigma2=1.0",
        "rounds=50",
        "seed=3",
    ]
)


def strip_wall(text: str) -> str:
    # timing column is the last field of every line
    return "\n".join(line.rsplit(",", 1)[0] for line in text.splitlines())


# ------------------------------------------------------------------- parsing


def test_minimal_config_fills_documented_defaults():
    cfg = parse_config("problem=bilinear-sec6\n")
    assert cfg.problem == "bilinear-sec6"
    assert cfg.algo == "rdeg"
    assert cfg.agents == 100
    assert cfg.alpha == 0.06
    assert cfg.delta == 0.05
    assert cfg.sigma2 == 10.0
    assert math.isclose(cfg.eta, 0.5, rel_tol=1e-9)
    assert cfg.rounds == 5000
    assert cfg.seed == 0
    assert cfg.attack == "collusive"
    assert cfg.attack_scale == 3.0
    assert cfg.partition_mode == "fixed"
    # an empty config means "all defaults" as well
    assert parse_config("") == cfg


def test_comments_blanks_and_inline_comments():
    text = """
    # full-line comment
    problem=bilinear-sec6

    agents = 40   # trailing comment
    alpha=0.0
    """
    cfg = parse_config(text)
    assert cfg.agents == 40
    assert cfg.alpha == 0.0


def test_alpha_guard_names_the_estimator_regime():
    with pytest.raises(ConfigError) as info:
        parse_config("alpha=0.2")
    message = str(info.value)
    assert message.startswith("line 1:")
    assert "1/16" in message
    # the cap itself is exclusive
    with pytest.raises(ConfigError):
        parse_config(f"alpha={ALPHA_CAP!r}")
    with pytest.raises(ConfigError):
        parse_config("alpha=-0.01")
    assert parse_config("alpha=0.12").alpha == 0.12


def test_rdeg_needs_an_even_agent_count():
    with pytest.raises(ConfigError) as info:
        parse_config("agents=99")
    assert "even" in str(info.value)
    assert str(info.value).startswith("line 1:")
    cfg = parse_config("agents=99\nalgo=vanilla")
    assert cfg.agents == 99
    assert parse_config("agents=1\nalgo=vanilla").agents == 1


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("bogus=1", "unknown key"),
        ("agents=abc", "agents"),
        ("agents=10.5", "agents"),
        ("agents=0", "agents"),
        ("eta=fast", "eta"),
        ("eta=-0.5", "eta"),
        ("eta=0", "eta"),
        ("rounds=0", "rounds"),
        ("delta=0", "delta"),
        ("delta=1", "delta"),
        ("sigma2=-1", "sigma2"),
        ("seed=-1", "seed"),
        ("attack=zap", "attack"),
        ("attack_scale=0", "attack_scale"),
        ("partition_mode=weird", "partition"),
        ("problem=unknown-game", "problem"),
        ("algo=sgd", "algo"),
        ("alpha", "key=value"),
        ("alpha=", "empty value"),
        ("seed=1\nseed=2", "duplicate"),
    ],
)
def test_rejected_configs_cite_the_constraint(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert fragment in str(info.value)


def test_error_lines_point_at_the_offending_key():
    with pytest.raises(ConfigError) as info:
        parse_config("problem=bilinear-sec6\nbogus=1")
    assert str(info.value).startswith("line 2:")
    with pytest.raises(ConfigError) as info:
        parse_config("agents=10\n\n# pad\nrounds=0")
    assert str(info.value).startswith("line 4:")


def test_delta_confidence_floor_is_a_config_error():
    # 4 exp(-M/2) with M=8 is about 0.0733, above delta=0.05
    with pytest.raises(ConfigError) as info:
        parse_config("agents=8\ndelta=0.05")
    assert "delta" in str(info.value)
    cfg = parse_config("agents=8\ndelta=0.08")
    assert cfg.agents == 8
    assert parse_config("agents=10\ndelta=0.05").agents == 10
    # vanilla skips the trimming regime checks entirely
    assert parse_config("agents=8\ndelta=0.05\nalgo=vanilla").delta == 0.05


def test_eta_resolution_from_problem_constants():
    bilinear = parse_config("problem=bilinear-sec6")
    assert math.isclose(bilinear.eta, 0.5, rel_tol=1e-9)
    scsc = parse_config("problem=scsc-quadratic")
    problem = make_problem(scsc)
    assert math.isclose(scsc.eta, 1.0 / (4.0 * problem.L), rel_tol=1e-12)
    assert parse_config("eta=0.25").eta == 0.25


def test_format_config_round_trips():
    text = "\n".join(
        [
            "problem=scsc-quadratic",
            "algo=vanilla",
            "agents=30",
            "alpha=0.1",
            "delta=0.2",
            "sigma2=2.5",
            "eta=0.125",
            "rounds=77",
            "seed=11",
            "attack=sign-flip",
            "attack_scale=2.0",
            "partition_mode=per-round-reshuffled",
        ]
    )
    cfg = parse_config(text)
    echoed = format_config(cfg)
    assert parse_config(echoed) == cfg
    keys = [line.split("=", 1)[0] for line in echoed.splitlines()]
    assert tuple(keys) == CONFIG_KEYS


def test_validate_config_checks_replaced_values():
    cfg = parse_config(SMALL)
    validate_config(cfg)
    with pytest.raises(ConfigError):
        validate_config(dataclasses.replace(cfg, agents=21))
    with pytest.raises(ConfigError):
        validate_config(dataclasses.replace(cfg, alpha=0.5))


# ------------------------------------------------------- attacks and trimming


def test_attack_mapping_from_config():
    cfg = parse_config("attack=collusive")
    problem = make_problem(cfg)
    strategy = build_attack(cfg, problem)
    assert isinstance(strategy, Collusive)
    d = problem.n
    u = np.ones(d) / math.sqrt(d)
    assert np.allclose(strategy.target.x, problem.set_x.radius * u)
    assert np.allclose(strategy.target.y, -problem.set_y.radius * u)
    assert problem.set_x.contains(strategy.target.x)

    cfg = parse_config("attack=sign-flip\nattack_scale=2.5")
    strategy = build_attack(cfg, make_problem(cfg))
    assert strategy == SignFlip(scale=2.5)

    cfg = parse_config("attack=gaussian-blast\nattack_scale=7.0")
    strategy = build_attack(cfg, make_problem(cfg))
    assert strategy == GaussianBlast(std=7.0)

    cfg = parse_config("attack=constant-shift\nattack_scale=1.5")
    strategy = build_attack(cfg, make_problem(cfg))
    assert isinstance(strategy, ConstantShift)
    assert np.array_equal(strategy.shift, np.full(10, 1.5))


def test_trim_policy_resolution():
    assert resolve_trim(parse_config("algo=vanilla")) is None
    policy = resolve_trim(parse_config("agents=100\nalpha=0.06"))
    assert policy.m_agents == 100
    assert policy.epsilon == saturating_epsilon(0.06, 0.05, 100)
    assert policy.saturated
    wide = resolve_trim(parse_config("agents=2000\nalpha=0.0"))
    assert math.isclose(wide.epsilon, 24.0 * math.log(4.0 / 0.05) / 2000.0)
    assert not wide.saturated


# ------------------------------------------------------------- run_experiment


def test_error_floor_is_the_mean_over_the_final_tenth():
    gap = np.arange(1.0, 101.0)
    assert error_floor(gap) == float(np.mean(gap[-10:]))
    assert error_floor(np.array([3.0, 5.0, 7.0])) == 7.0
    assert error_floor(np.arange(19.0)) == 18.0
    assert error_floor(np.arange(20.0)) == 18.5


def test_run_experiment_writes_trace_and_summary(tmp_path):
    cfg = parse_config(SMALL)
    summary, trace = run_experiment(cfg, out_dir=tmp_path, figures=False)
    assert not (tmp_path / "run.png").exists()

    text = (tmp_path / "trace.csv").read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) == cfg.rounds + 1
    assert text.endswith("\n")
    for i in (0, 17, 49):
        fields = lines[1 + i].split(",")
        assert len(fields) == 8
        assert fields[0] == str(int(trace.t[i]))
        assert fields[1] == repr(float(trace.gap[i]))
        assert fields[2] == repr(float(trace.dist_sq[i]))
        assert all(math.isfinite(float(f)) for f in fields)

    loaded = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert loaded == summary
    assert summary["version"]
    assert tuple(sorted(summary["config"])) == tuple(sorted(CONFIG_KEYS))
    assert summary["abort"] is None
    assert summary["final_gap"] == float(trace.gap[-1])
    assert summary["final_dist_sq"] == float(trace.dist_sq[-1])
    assert summary["error_floor"] == float(np.mean(trace.gap[-5:]))
    assert summary["resolved"]["epsilon"] == saturating_epsilon(0.05, 0.05, 20)
    assert summary["resolved"]["n_byzantine"] == 1


def test_summary_config_echo_reruns_bit_exactly(tmp_path):
    cfg = parse_config(SMALL)
    summary, trace = run_experiment(cfg, out_dir=tmp_path, figures=False)
    echoed = parse_config(summary["config_text"])
    assert echoed == cfg
    _, again = run_experiment(echoed, out_dir=None, figures=False)
    assert np.array_equal(trace.gap, again.gap)
    assert np.array_equal(trace.dist_sq, again.dist_sq)
    assert np.array_equal(trace.final.x, again.final.x)


def test_trace_bytes_deterministic_modulo_timing(tmp_path):
    cfg = parse_config(SMALL)
    run_experiment(cfg, out_dir=tmp_path / "a", figures=False)
    run_experiment(cfg, out_dir=tmp_path / "b", figures=False)
    a = (tmp_path / "a" / "trace.csv").read_text(encoding="utf-8")
    b = (tmp_path / "b" / "trace.csv").read_text(encoding="utf-8")
    assert strip_wall(a) == strip_wall(b)
    other = dataclasses.replace(cfg, seed=cfg.seed + 1)
    run_experiment(other, out_dir=tmp_path / "c", figures=False)
    c = (tmp_path / "c" / "trace.csv").read_text(encoding="utf-8")
    assert strip_wall(a) != strip_wall(c)


def test_run_figures_rendered_when_asked(tmp_path):
    cfg = parse_config(SMALL)
    run_experiment(cfg, out_dir=tmp_path, figures=True)
    payload = (tmp_path / "run.png").read_bytes()
    assert payload.startswith(b"\x89PNG\r\n")


def test_numerical_abort_lands_in_summary(tmp_path, monkeypatch):
    def poisoned_preset(name, sigma2=None):
        problem = BilinearGame(np.eye(2), radius=5.0, sigma2=0.0)
        calls = {"n": 0}
        clean = problem.gradient_batch

        def sabotage(at, zeta):
            calls["n"] += 1
            gx, gy = clean(at, zeta)
            if calls["n"] > 6:
                gx = gx.copy()
                gx[0, 0] = np.nan
            return gx, gy

        problem.gradient_batch = sabotage
        return problem

    monkeypatch.setattr("rdeg.harness.make_preset", poisoned_preset)
    cfg = parse_config("agents=2\nalpha=0.0\nalgo=vanilla\nrounds=10\neta=0.1")
    summary, trace = run_experiment(cfg, out_dir=tmp_path, figures=False)
    assert summary["abort"]["round_index"] == 4
    assert "query" in summary["abort"]["message"]
    assert trace.n_rounds == 3
    lines = (tmp_path / "trace.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert summary["error_floor"] == float(trace.gap[-1])

    config_path = tmp_path / "bad.cfg"
    config_path.write_text("agents=2\nalpha=0.0\nalgo=vanilla\nrounds=10\neta=0.1")
    code = cli.main(
        ["run", "--config", str(config_path), "--out", str(tmp_path / "o"), "--no-figures"]
    )
    assert code == 3


# -------------------------------------------------------------------- sweeps


def test_sweep_rows_report_and_median_floors(tmp_path):
    base = parse_config("agents=10\nrounds=40\nsigma2=1.0\nseed=5")
    spec = SweepSpec(base=base, param="alpha", values=(0.0, 0.1), trials=2)
    report = run_sweep(spec, out_dir=tmp_path, figures=False)

    text = (tmp_path / "sweep.csv").read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == "value,trial,error_floor,final_dist_sq"
    assert len(lines) == 5

    floors = {}
    for value_index, value in enumerate((0.0, 0.1)):
        for trial in range(2):
            row = lines[1 + value_index * 2 + trial].split(",")
            assert row[0] == repr(value)
            assert row[1] == str(trial)
            derived = dataclasses.replace(base, alpha=value, seed=base.seed + trial)
            summary, _ = run_experiment(derived, out_dir=None, figures=False)
            assert float(row[2]) == summary["error_floor"]
            assert float(row[3]) == summary["final_dist_sq"]
            floors.setdefault(value, []).append(summary["error_floor"])

    assert report["param"] == "alpha"
    assert report["values"] == [0.0, 0.1]
    assert report["trials"] == 2
    assert report["expected_direction"] == "nondecreasing"
    medians = [float(np.median(floors[v])) for v in (0.0, 0.1)]
    assert report["median_floors"] == medians
    assert report["consistent"] == (medians[1] >= medians[0])
    assert report["aborts"] == []

    loaded = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert loaded == report


def test_sweep_output_identical_across_worker_counts(tmp_path):
    base = parse_config("agents=10\nrounds=30\nsigma2=1.0")
    spec = SweepSpec(base=base, param="agents", values=(10, 20), trials=2)
    run_sweep(spec, out_dir=tmp_path / "serial", jobs=1, figures=False)
    run_sweep(spec, out_dir=tmp_path / "pool", jobs=4, figures=False)
    serial = (tmp_path / "serial" / "sweep.csv").read_bytes()
    pool = (tmp_path / "pool" / "sweep.csv").read_bytes()
    assert serial == pool
    first = (tmp_path / "serial" / "sweep.csv").read_text(encoding="utf-8").splitlines()[1]
    assert first.split(",")[0] == "10"


def test_sweep_validates_before_running(tmp_path):
    base = parse_config("agents=10\nrounds=30")
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec(base, "agents", (99,), 1), out_dir=tmp_path)
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec(base, "temperature", (1.0,), 1), out_dir=tmp_path)
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec(base, "alpha", (), 1), out_dir=tmp_path)
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec(base, "alpha", (0.0,), 0), out_dir=tmp_path)
    assert not (tmp_path / "sweep.csv").exists()


def test_sweep_figure_rendered(tmp_path):
    base = parse_config("agents=10\nrounds=30\nsigma2=1.0")
    spec = SweepSpec(base=base, param="sigma2", values=(1.0, 4.0), trials=1)
    run_sweep(spec, out_dir=tmp_path, figures=True)
    assert (tmp_path / "sweep.png").read_bytes().startswith(b"\x89PNG\r\n")


# ----------------------------------------------------------------------- cli


def test_cli_run_paths_and_exit_codes(tmp_path, capsys):
    config_path = tmp_path / "run.cfg"
    config_path.write_text(SMALL + "\n", encoding="utf-8")
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(config_path), "--out", str(out), "--no-figures"]) == 0
    assert (out / "trace.csv").exists()
    assert (out / "summary.json").exists()
    capsys.readouterr()

    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 4
    assert "io error" in capsys.readouterr().err

    bad = tmp_path / "bad.cfg"
    bad.write_text("alpha=0.2\n", encoding="utf-8")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_seed_override(tmp_path):
    config_path = tmp_path / "run.cfg"
    config_path.write_text(SMALL + "\n", encoding="utf-8")
    out = tmp_path / "out"
    code = cli.main(
        ["run", "--config", str(config_path), "--seed", "9", "--out", str(out), "--no-figures"]
    )
    assert code == 0
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["config"]["seed"] == 9


def test_cli_sweep_and_value_parsing(tmp_path, capsys):
    config_path = tmp_path / "base.cfg"
    config_path.write_text("agents=10\nrounds=30\nsigma2=1.0\n", encoding="utf-8")
    out = tmp_path / "sweep"
    code = cli.main(
        [
            "sweep",
            "--config", str(config_path),
            "--param", "agents",
            "--values", "10,20",
            "--trials", "1",
            "--jobs", "1",
            "--out", str(out),
            "--no-figures",
        ]
    )
    assert code == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["values"] == [10, 20]
    capsys.readouterr()

    assert (
        cli.main(
            [
                "sweep",
                "--config", str(config_path),
                "--param", "alpha",
                "--values", "0.0,zap",
                "--trials", "1",
                "--out", str(tmp_path / "x"),
            ]
        )
        == 2
    )
    assert cli.main(["sweep", "--config", str(config_path), "--param", "humidity",
                     "--values", "1", "--trials", "1"]) == 2


def test_cli_selftest_and_function(capsys):
    assert selftest() == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if line]
    assert lines
    assert all(line.startswith("ok") for line in lines)
    assert cli.main(["selftest"]) == 0
