"""Command-line entry point: run, sweep, grid-error, report.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .belief import GridShape, SensorModel
from .config import ConfigError, load_spec
from .experiments import NOISE_PROFILES, aggregate, grid_error_experiment, parse_interval, run_sweep
from .merge import MergeStrategy, SolverParams
from .planner import PlanConfig
from .report import build_wins, emit_report, read_records, write_grid_error, write_records
from .sim import ConfigInvalid, SimConfig, run_trial
from .world import Pattern, TargetPolicy

log = logging.getLogger("beliefmerge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _sensor(args) -> SensorModel:
    alpha, beta = NOISE_PROFILES[args.noise]
    if args.alpha is not None:
        alpha = args.alpha
    if args.beta is not None:
        beta = args.beta
    return SensorModel(alpha, beta)


def _solver(args) -> SolverParams:
    return SolverParams(epsilon_floor=args.epsilon, max_iterations=args.max_iterations,
                        step_size=args.step_size, quantization_levels=args.quantization)


def cmd_run(args) -> int:
    cfg = SimConfig(
        shape=GridShape.parse(args.grid),
        num_agents=args.agents,
        sensor=_sensor(args),
        comm_interval=parse_interval(args.interval),
        max_steps=args.max_steps,
        plan=PlanConfig(args.horizon),
        strategy=MergeStrategy(args.strategy),
        target_policy=TargetPolicy(Pattern(args.pattern)),
        seed=args.seed,
        solver=_solver(args),
    )
    rec = run_trial(cfg)
    out = json.loads(rec.canonical())
    out["duration_ms"] = round(rec.duration_ms, 3)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_spec(args.config, {"trials": args.trials, "workers": args.workers, "base_seed": args.seed,
                                   "max_steps": args.max_steps})
    out = Path(args.out)
    n_jobs = len(spec.keys()) * spec.trials
    log.info("running %d trials over %d configurations", n_jobs, len(spec.keys()))

    def progress(done, total):
        if done % max(1, total // 20) == 0 or done == total:
            log.info("%d/%d trials", done, total)

    records = run_sweep(spec, progress=progress)
    write_records(out / "records.csv", records, timing=args.timing)
    stats = aggregate(records, spec.max_steps)
    emit_report(stats, build_wins(stats), out)
    print(out / "records.csv")
    return EXIT_OK


def cmd_grid_error(args) -> int:
    sizes = [GridShape.parse(s) for s in args.sizes.split(",")]
    rows = grid_error_experiment(sizes, trials=args.trials, params=_solver(args), agents=args.agents,
                                 seed=args.seed)
    path = write_grid_error(Path(args.out), rows)
    print(path)
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_records(args.records)
    stats = aggregate(records, args.max_steps)
    formats = ("csv", "markdown") if args.format == "all" else (args.format,)
    for p in emit_report(stats, build_wins(stats), Path(args.out), formats):
        print(p)
    return EXIT_OK


def _add_solver_args(p):
    p.add_argument("--epsilon", type=float, default=1e-5, help="numeric solver lower bound")
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--step-size", type=float, default=0.1)
    p.add_argument("--quantization", type=int, default=None, help="piecewise-linear segments")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefmerge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    # also accepted after the subcommand; SUPPRESS keeps it from resetting the top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a single trial and print its record")
    p.add_argument("--grid", default="10x10")
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--pattern", default="stationary", choices=[x.value for x in Pattern])
    p.add_argument("--interval", default="5", help="steps between merges; 0 = always, inf = never")
    p.add_argument("--strategy", default="visit_weighted", choices=[s.value for s in MergeStrategy])
    p.add_argument("--noise", default="baseline", choices=sorted(NOISE_PROFILES))
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=2500)
    p.add_argument("--horizon", type=int, default=3)
    _add_solver_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="run a sweep from a YAML file")
    p.add_argument("config")
    p.add_argument("--out", default="sweep-out")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--timing", action="store_true", help="write wall-clock durations (breaks byte-identity)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grid-error", parents=[common], help="numeric vs closed-form merge error by grid size")
    p.add_argument("--sizes", default="2x1,10x10,30x30,100x100")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="grid_error.csv")
    _add_solver_args(p)
    p.set_defaults(func=cmd_grid_error)

    p = sub.add_parser("report", parents=[common], help="re-aggregate an existing records CSV")
    p.add_argument("records")
    p.add_argument("--out", default="report-out")
    p.add_argument("--max-steps", type=int, default=2500, help="step count charged to failed trials")
    p.add_argument("--format", choices=["csv", "markdown", "all"], default="all")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigInvalid, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
