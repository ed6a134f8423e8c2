"""Command-line interface.

Subcommands: run (execute a config's sweep), verify (invariant suites),
stepsize (print the step sizes and constants for a problem snapshot),
schedule-gen (emit a delay schedule CSV).  Exit codes are stable:
0 success, 1 verification failure, 2 configuration error, 3 runtime
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .delay import DelayModelSpec, generate_schedule, write_schedule_csv
from .errors import ConfigError, InvariantViolation
from .experiments import (
    apply_seed_override,
    experiment_spec_from_config,
    run_sweep,
)
from .config import load_config
from .sim import delayed_step_size, stepsize_fixed_point
from .td import load_problem
from .verify import SUITES

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dasa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the sweep described by a config file")
    p_run.add_argument("--config", required=True, help="experiment config file")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_verify = sub.add_parser("verify", help="run an invariant verification suite")
    p_verify.add_argument("suite", choices=sorted(SUITES))
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--cases", type=int, default=None, help="case count (lemma1 only)")
    p_verify.add_argument("--out", default=".", help="where to write failing-case replays")

    p_step = sub.add_parser("stepsize", help="print step sizes and constants for a snapshot")
    p_step.add_argument("--snapshot", required=True, help="problem snapshot JSON")
    p_step.add_argument("--c1", type=float, default=1.0, help="safety constant (>= 1)")
    p_step.add_argument("--tau-max", type=int, default=0, help="max delay for the delayed baseline")

    p_sched = sub.add_parser("schedule-gen", help="emit a delay schedule CSV")
    p_sched.add_argument("--kind", required=True, choices=("constant", "uniform", "straggler"))
    p_sched.add_argument("--value", type=int, default=0)
    p_sched.add_argument("--tau-max", type=int, default=0)
    p_sched.add_argument("--p", type=float, default=0.0)
    p_sched.add_argument("--agents", type=int, required=True)
    p_sched.add_argument("--horizon", type=int, required=True)
    p_sched.add_argument("--seed", type=int, default=0)
    p_sched.add_argument("--out", required=True)
    return parser


def cmd_run(args) -> int:
    spec = experiment_spec_from_config(load_config(args.config), source=args.config)
    if args.seed is not None:
        spec = apply_seed_override(spec, args.seed)
    if args.out is not None:
        spec = _with_output(spec, Path(args.out))
    elif spec.output_dir is None:
        spec = _with_output(spec, Path("runs") / spec.name)
    outcome = run_sweep(spec, jobs=args.jobs)
    for point in outcome.points:
        rep = point.result
        print(
            f"{point.point.label}: alpha={point.point.config.alpha:.6g} "
            f"horizon={point.point.config.horizon} "
            f"updates={rep.mean_update_count:.1f} final_delta_sq={rep.mean_final_delta_sq:.6g}"
        )
    print(f"manifest: {outcome.manifest_path}")
    return EXIT_OK


def _with_output(spec, out: Path):
    from dataclasses import replace

    return replace(spec, output_dir=out)


def cmd_verify(args) -> int:
    suite = SUITES[args.suite]
    kwargs = {}
    if args.suite in ("lemma1", "assumptions", "oracle"):
        kwargs["seed"] = args.seed
    if args.suite == "lemma1" and args.cases is not None:
        kwargs["cases"] = args.cases
    results = suite(**kwargs)
    failures = [r for r in results if not r.passed]
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    print(f"{len(results) - len(failures)}/{len(results)} cases passed")
    if failures:
        replay_path = Path(args.out) / f"verify_{args.suite}_failures.json"
        replay_path.parent.mkdir(parents=True, exist_ok=True)
        replay_path.write_text(
            json.dumps(
                [
                    {"name": f.name, "detail": f.detail, "replay": f.replay}
                    for f in failures
                ],
                indent=2,
            )
        )
        print(f"replay data written to {replay_path}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_stepsize(args) -> int:
    if args.c1 < 1.0:
        raise ConfigError("c1 must be >= 1")
    snapshot = Path(args.snapshot)
    if not snapshot.exists():
        raise ConfigError(f"snapshot not found: {snapshot}")
    problem = load_problem(snapshot)
    alpha, tau_mix = stepsize_fixed_point(problem, args.c1)
    alpha_delayed = delayed_step_size(problem.mu, problem.L, tau_mix, args.tau_max, args.c1)
    print(f"alpha_dasa = {alpha!r}")
    print(f"alpha_delayed = {alpha_delayed!r}")
    print(f"tau_mix = {tau_mix}")
    print(f"mu = {problem.mu!r}")
    print(f"L = {problem.L!r}")
    print(f"omega = {problem.omega!r}")
    print(f"sigma = {problem.sigma!r}")
    print(f"c1 = {args.c1!r}")
    print("note: tau_mix solved jointly with alpha (two fixed-point rounds, floor 1)")
    return EXIT_OK


def cmd_schedule_gen(args) -> int:
    spec = DelayModelSpec(kind=args.kind, value=args.value, tau_max=args.tau_max, p=args.p)
    schedule = generate_schedule(spec, args.agents, args.horizon, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    write_schedule_csv(schedule, out)
    print(f"wrote {out} ({schedule.horizon} iterations x {schedule.n_agents} agents)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "verify": cmd_verify,
        "stepsize": cmd_stepsize,
        "schedule-gen": cmd_schedule_gen,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
