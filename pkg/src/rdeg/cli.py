"""Command-line front end: run, sweep, selftest."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ConfigError, NumericalAbort
from .harness import SweepSpec, parse_config, run_experiment, run_sweep, selftest


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdeg",
        description="Byzantine-resilient extra-gradient experiments on saddle-point games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one config and write trace/summary/figures")
    run_p.add_argument("--config", required=True, help="key=value config file")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default="rdeg-out", help="output directory")
    run_p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    sweep_p = sub.add_parser("sweep", help="repeat runs over one swept field")
    sweep_p.add_argument("--config", required=True, help="base key=value config file")
    sweep_p.add_argument("--param", required=True, choices=("alpha", "agents", "sigma2"))
    sweep_p.add_argument("--values", required=True, help="comma-separated swept values")
    sweep_p.add_argument("--trials", type=int, required=True, help="trials per value")
    sweep_p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep_p.add_argument("--out", default="rdeg-sweep", help="output directory")
    sweep_p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _parse_values(text: str, param: str) -> tuple:
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise ConfigError("--values needs at least one entry")
    try:
        if param == "agents":
            return tuple(int(item, 10) for item in items)
        return tuple(float(item) for item in items)
    except ValueError:
        raise ConfigError(f"--values for {param} must be numbers; got {text!r}") from None


def _cmd_run(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    summary, _ = run_experiment(cfg, out_dir=args.out, figures=not args.no_figures)
    if summary["abort"] is not None:
        print(f"numerical abort: {summary['abort']['message']}", file=sys.stderr)
        print(f"partial results in {args.out}", file=sys.stderr)
        return 3
    print(f"final gap {summary['final_gap']:.6g}")
    print(f"error floor {summary['error_floor']:.6g}")
    print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        base = parse_config(fh.read())
    spec = SweepSpec(
        base=base,
        param=args.param,
        values=_parse_values(args.values, args.param),
        trials=args.trials,
    )
    report = run_sweep(spec, out_dir=args.out, jobs=args.jobs, figures=not args.no_figures)
    for value, floor in zip(report["values"], report["median_floors"]):
        print(f"{args.param}={value}: median floor {floor:.6g}")
    verdict = "matches" if report["consistent"] else "does NOT match"
    print(
        f"median floors {report['observed_direction']}; "
        f"{verdict} the expected {report['expected_direction']} ordering"
    )
    print(f"wrote {args.out}")
    if report["aborts"]:
        print(f"numerical aborts in {len(report['aborts'])} sweep points", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())
