"""Experiment sweeps: configuration, execution, and output files.

A sweep is a cross product over aggregator / agent count / step size /
delay kind around a base run configuration.  The two shipped experiment
configurations realize the standard comparison protocol: the
delay-adaptive run executes for the configured horizon, then each
non-adaptive baseline gets the same number of *updates* (its horizon is
the adaptive run's realized mean update count).
"""

from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ConfigView, REQUIRED
from .delay import DelayModelSpec
from .errors import ConfigError
from .sim import (
    ProblemSpec,
    ReplicatedResult,
    RunConfig,
    build_problem,
    dasa_step_size,
    delayed_step_size,
    derive_seed,
    run_replicated,
    stepsize_fixed_point,
    write_curve_csv,
    write_trace_csv,
)
from .td import TDProblem, save_problem

MAX_SWEEP_POINTS = 10_000

SWEEPABLE = ("aggregator", "agents", "alpha", "delay.kind")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: RunConfig
    sweeps: dict[str, list]
    output_dir: Path | None = None
    alpha_mode: str = "fixed"  # "fixed" uses base.alpha, "auto" solves the step-size fixed point
    c1: float = 1.0
    baseline_budget: str = "full"  # "full" | "match_updates"
    save_replications: bool = False

    def __post_init__(self):
        unknown = set(self.sweeps) - set(SWEEPABLE)
        if unknown:
            raise ConfigError(f"unsupported sweep keys: {', '.join(sorted(unknown))}")
        size = 1
        for values in self.sweeps.values():
            size *= max(1, len(values))
        if size > MAX_SWEEP_POINTS:
            raise ConfigError(f"sweep cross product has {size} points (limit {MAX_SWEEP_POINTS})")
        if self.alpha_mode not in ("fixed", "auto"):
            raise ConfigError(f"alpha_mode must be 'fixed' or 'auto', got {self.alpha_mode!r}")
        if self.baseline_budget not in ("full", "match_updates"):
            raise ConfigError(
                f"baseline_budget must be 'full' or 'match_updates', got {self.baseline_budget!r}"
            )


@dataclass
class SweepPoint:
    label: str
    config: RunConfig
    coords: tuple  # non-aggregator sweep coordinates, used for budget matching


@dataclass
class PointResult:
    point: SweepPoint
    result: ReplicatedResult
    tau_mix: int | None


@dataclass
class SweepOutcome:
    spec: ExperimentSpec
    points: list[PointResult]
    problem: object
    tau_mix: int | None
    manifest_path: Path | None = None

    def by_label(self, label: str) -> PointResult:
        for point in self.points:
            if point.point.label == label:
                return point
        raise KeyError(label)


def build_sweep_points(spec: ExperimentSpec, problem, tau_mix: int | None) -> list[SweepPoint]:
    sweeps = {key: list(values) for key, values in spec.sweeps.items()}
    aggregators = sweeps.get("aggregator", [spec.base.aggregator])
    agent_counts = sweeps.get("agents", [spec.base.n_agents])
    alphas = sweeps.get("alpha", [None])
    delay_kinds = sweeps.get("delay.kind", [spec.base.delay_spec.kind])
    points = []
    for agg, n, alpha, kind in itertools.product(aggregators, agent_counts, alphas, delay_kinds):
        delay_spec = replace(spec.base.delay_spec, kind=kind) if kind != spec.base.delay_spec.kind else spec.base.delay_spec
        resolved_alpha = alpha
        if resolved_alpha is None:
            if spec.alpha_mode == "auto":
                resolved_alpha = _auto_alpha(problem, tau_mix, agg, delay_spec, spec.c1)
            else:
                resolved_alpha = spec.base.alpha
        config = replace(
            spec.base,
            aggregator=agg,
            n_agents=int(n),
            alpha=float(resolved_alpha),
            delay_spec=delay_spec,
        )
        label_parts = [agg]
        if "agents" in sweeps:
            label_parts.append(f"n{n}")
        if "alpha" in sweeps:
            label_parts.append(f"a{alpha}")
        if "delay.kind" in sweeps:
            label_parts.append(kind)
        coords = (int(n), alpha, kind)
        points.append(SweepPoint(label="_".join(label_parts), config=config, coords=coords))
    return points


def _auto_alpha(problem, tau_mix: int, aggregator: str, delay_spec: DelayModelSpec, c1: float) -> float:
    if aggregator == "delayed_average":
        return delayed_step_size(problem.mu, problem.L, tau_mix, delay_spec.max_transit(), c1)
    return dasa_step_size(problem.mu, problem.L, tau_mix, c1)


def _execute_point(args):
    config, problem, keep_traces = args
    return run_replicated(config, problem=problem, keep_traces=keep_traces)


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> SweepOutcome:
    """Execute every sweep point; two stages when baselines match update budgets."""
    problem = build_problem(spec.base)
    tau_mix = None
    if spec.alpha_mode == "auto":
        _, tau_mix = stepsize_fixed_point(problem, spec.c1)
    points = build_sweep_points(spec, problem, tau_mix)

    if spec.baseline_budget == "match_updates":
        stage_one = [p for p in points if p.config.aggregator == "dasa"]
        stage_two = [p for p in points if p.config.aggregator != "dasa"]
    else:
        stage_one, stage_two = points, []

    results: dict[str, PointResult] = {}

    def execute(batch: list[SweepPoint]):
        if not batch:
            return
        payload = [(p.config, problem, spec.save_replications) for p in batch]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outs = list(pool.map(_execute_point, payload))
        else:
            outs = [_execute_point(item) for item in payload]
        for point, out in zip(batch, outs):
            results[point.label] = PointResult(point=point, result=out, tau_mix=tau_mix)

    execute(stage_one)
    if stage_two:
        budgets = {
            p.point.coords: max(1, int(round(p.result.mean_update_count)))
            for p in results.values()
            if p.point.config.aggregator == "dasa"
        }
        rebudgeted = []
        for point in stage_two:
            horizon = budgets.get(point.coords)
            if horizon is not None:
                point = SweepPoint(
                    label=point.label,
                    config=replace(point.config, horizon=horizon),
                    coords=point.coords,
                )
            rebudgeted.append(point)
        execute(rebudgeted)

    ordered = [results[p.label] for p in points]
    outcome = SweepOutcome(spec=spec, points=ordered, problem=problem, tau_mix=tau_mix)
    if spec.output_dir is not None:
        outcome.manifest_path = write_outputs(outcome)
    return outcome


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_outputs(outcome: SweepOutcome) -> Path:
    """Write one mean-curve CSV and metadata sidecar per point, plus the manifest."""
    spec = outcome.spec
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = outcome.problem
    manifest_points = []
    for point_result in outcome.points:
        point, rep = point_result.point, point_result.result
        csv_name = f"{point.label}.csv"
        write_curve_csv(
            out / csv_name,
            delta_sq=rep.mean_delta_sq,
            gate=rep.mean_gate,
            median_error=rep.mean_median_error,
            epsilon=rep.epsilon,
            mean_staleness=rep.mean_staleness,
        )
        meta = {
            "label": point.label,
            "aggregator": point.config.aggregator,
            "n_agents": point.config.n_agents,
            "horizon": point.config.horizon,
            "alpha": point.config.alpha,
            "epsilon": rep.epsilon,
            "replications": rep.replications,
            "seeds": {
                "problem": point.config.problem_seed,
                "chains": point.config.chain_seed,
                "delay": point.config.delay_seed,
            },
            "delay": {
                "kind": point.config.delay_spec.kind,
                "value": point.config.delay_spec.value,
                "tau_max": point.config.delay_spec.tau_max,
                "p": point.config.delay_spec.p,
                "path": str(point.config.delay_spec.path) if point.config.delay_spec.path else None,
            },
            "constants": {
                "mu": float(problem.mu),
                "L": float(problem.L),
                "sigma": float(problem.sigma),
                "omega": float(getattr(problem, "omega", float("nan"))),
                "tau_mix": outcome.tau_mix,
            },
            "mean_update_count": rep.mean_update_count,
            "update_counts": rep.update_counts,
            "mean_final_delta_sq": rep.mean_final_delta_sq,
            "final_delta_sqs": rep.final_delta_sqs,
            "tau_avgs": rep.tau_avgs,
        }
        meta_name = f"{point.label}.meta.json"
        _atomic_write(out / meta_name, json.dumps(meta, indent=2))
        if spec.save_replications and rep.traces:
            reps_dir = out / "reps"
            reps_dir.mkdir(exist_ok=True)
            for r, trace in enumerate(rep.traces):
                write_trace_csv(reps_dir / f"{point.label}.rep{r}.csv", trace)
        manifest_points.append(
            {
                "label": point.label,
                "aggregator": point.config.aggregator,
                "n_agents": point.config.n_agents,
                "alpha": point.config.alpha,
                "horizon": point.config.horizon,
                "replications": rep.replications,
                "csv": csv_name,
                "meta": meta_name,
                "mean_update_count": rep.mean_update_count,
                "mean_final_delta_sq": rep.mean_final_delta_sq,
            }
        )
    problem_entry = {"kind": spec.base.problem.kind}
    if isinstance(problem, TDProblem):
        save_problem(problem, out / "problem.json")
        problem_entry["snapshot"] = "problem.json"
    problem_entry.update(
        {
            "mu": float(problem.mu),
            "L": float(problem.L),
            "sigma": float(problem.sigma),
            "tau_mix": outcome.tau_mix,
            "c1": spec.c1,
        }
    )
    manifest = {
        "name": spec.name,
        "columns": ["k", "delta_sq", "gate", "median_error", "epsilon", "mean_staleness"],
        "problem": problem_entry,
        "points": manifest_points,
    }
    manifest_path = out / "manifest.json"
    _atomic_write(manifest_path, json.dumps(manifest, indent=2))
    return manifest_path


def experiment_spec_from_config(raw: dict[str, str], source: str = "<config>") -> ExperimentSpec:
    """Translate a flat key/value mapping into an ExperimentSpec."""
    view = ConfigView(raw, source)
    name = view.get_str("name", REQUIRED)
    out = view.get_str("out", None)

    kind = view.get_str("problem.kind", "td", choices=("td", "linear"))
    problem = ProblemSpec(
        kind=kind,
        n_states=view.get_int("problem.n_states", 30),
        n_features=view.get_int("problem.n_features", 10),
        gamma=view.get_float("problem.gamma", 0.5),
        dim=view.get_int("problem.dim", 2),
    )

    delay_kind = view.get_str(
        "delay.kind", "constant", choices=("constant", "uniform", "straggler", "file")
    )
    delay_spec = DelayModelSpec(
        kind=delay_kind,
        value=view.get_int("delay.value", 0),
        tau_max=view.get_int("delay.tau_max", 0),
        p=view.get_float("delay.p", 0.0),
        path=view.get_str("delay.path", None),
    )

    alpha_raw = view.get_str("alpha", "auto")
    if alpha_raw == "auto":
        alpha_mode, alpha_value = "auto", 1.0  # placeholder, resolved per point
    else:
        try:
            alpha_value = float(alpha_raw)
        except ValueError:
            raise ConfigError(f"{source}: alpha = {alpha_raw!r} is not a number or 'auto'") from None
        alpha_mode = "fixed"

    depth_raw = view.get_str("history_depth", "none")
    history_depth = None if depth_raw.lower() == "none" else int(depth_raw)

    base = RunConfig(
        n_agents=view.get_int("agents", 10),
        horizon=view.get_int("horizon", REQUIRED),
        alpha=alpha_value,
        aggregator=view.get_str(
            "aggregator", "dasa", choices=("dasa", "delayed_average", "non_delayed")
        ),
        delay_spec=delay_spec,
        problem_seed=view.get_int("problem.seed", 0),
        chain_seed=view.get_int("chains.seed", 1),
        delay_seed=view.get_int("delay.seed", 2),
        history_depth=history_depth,
        replications=view.get_int("replications", 1),
        problem=problem,
    )

    sweeps: dict[str, list] = {}
    agg_sweep = view.get_list("sweep.aggregator", None)
    if agg_sweep:
        for agg in agg_sweep:
            if agg not in ("dasa", "delayed_average", "non_delayed"):
                raise ConfigError(f"{source}: sweep.aggregator contains unknown value {agg!r}")
        sweeps["aggregator"] = agg_sweep
    agents_sweep = view.get_list("sweep.agents", None)
    if agents_sweep:
        sweeps["agents"] = [int(v) for v in agents_sweep]
    alpha_sweep = view.get_list("sweep.alpha", None)
    if alpha_sweep:
        sweeps["alpha"] = [float(v) for v in alpha_sweep]
    kind_sweep = view.get_list("sweep.delay.kind", None)
    if kind_sweep:
        sweeps["delay.kind"] = kind_sweep

    spec = ExperimentSpec(
        name=name,
        base=base,
        sweeps=sweeps,
        output_dir=Path(out) if out else None,
        alpha_mode=alpha_mode,
        c1=view.get_float("alpha.c1", 1.0),
        baseline_budget=view.get_str(
            "baseline_budget", "full", choices=("full", "match_updates")
        ),
        save_replications=view.get_bool("save_replications", False),
    )
    view.reject_unknown()
    return spec


def apply_seed_override(spec: ExperimentSpec, seed: int) -> ExperimentSpec:
    """Derive all three base seeds from one master seed (the --seed flag)."""
    base = replace(
        spec.base,
        problem_seed=derive_seed(seed, 0),
        chain_seed=derive_seed(seed, 1),
        delay_seed=derive_seed(seed, 2),
    )
    return replace(spec, base=base)


def comparison_experiment_spec(
    output_dir: Path | str | None = None,
    horizon: int = 70_000,
    n_agents: int = 10,
    tau_max: int = 50,
    replications: int = 10,
    problem_seed: int = 7,
    chain_seed: int = 1001,
    delay_seed: int = 2002,
    c1: float = 1.0,
) -> ExperimentSpec:
    """Adaptive rule vs the two baselines at an equal update budget.

    The delay-adaptive run executes for ``horizon`` iterations; each
    baseline then runs for the adaptive rule's realized mean update
    count, so all curves spend the same number of updates.  The horizon
    is chosen so the adaptive run has pulled well ahead of the
    small-step-size baseline while the fresh-gradient baseline is still
    in the same error decade.
    """
    base = RunConfig(
        n_agents=n_agents,
        horizon=horizon,
        alpha=1.0,  # resolved per point by the step-size fixed point
        aggregator="dasa",
        delay_spec=DelayModelSpec(kind="uniform", tau_max=tau_max),
        problem_seed=problem_seed,
        chain_seed=chain_seed,
        delay_seed=delay_seed,
        replications=replications,
        problem=ProblemSpec(kind="td", n_states=30, n_features=10, gamma=0.5),
    )
    return ExperimentSpec(
        name="delay_comparison",
        base=base,
        sweeps={"aggregator": ["dasa", "delayed_average", "non_delayed"]},
        output_dir=Path(output_dir) if output_dir else None,
        alpha_mode="auto",
        c1=c1,
        baseline_budget="match_updates",
    )


def speedup_experiment_spec(
    output_dir: Path | str | None = None,
    horizon: int = 90_000,
    agent_counts: tuple[int, ...] = (1, 20),
    tau_max: int = 50,
    replications: int = 10,
    problem_seed: int = 7,
    chain_seed: int = 1001,
    delay_seed: int = 2002,
    c1: float = 1.0,
) -> ExperimentSpec:
    """Single-agent vs multi-agent runs at the same step size.

    Both agent counts share the instance and the step size, so the gap
    between their final errors isolates the averaging effect; the
    fresh-gradient baseline at each agent count gets the matching update
    budget.
    """
    base = RunConfig(
        n_agents=agent_counts[0],
        horizon=horizon,
        alpha=1.0,  # resolved per point by the step-size fixed point
        aggregator="dasa",
        delay_spec=DelayModelSpec(kind="uniform", tau_max=tau_max),
        problem_seed=problem_seed,
        chain_seed=chain_seed,
        delay_seed=delay_seed,
        replications=replications,
        problem=ProblemSpec(kind="td", n_states=30, n_features=10, gamma=0.5),
    )
    return ExperimentSpec(
        name="speedup",
        base=base,
        sweeps={"aggregator": ["dasa", "non_delayed"], "agents": list(agent_counts)},
        output_dir=Path(output_dir) if output_dir else None,
        alpha_mode="auto",
        c1=c1,
        baseline_budget="match_updates",
    )
