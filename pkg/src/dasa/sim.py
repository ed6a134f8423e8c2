"""Discrete-time server/agents simulation loop.

Each iteration: every agent takes one chain transition and evaluates the
noisy operator on the currently broadcast parameter; the report travels
up-link with its transit delay; the server aggregates the freshest
arrived report per agent under the configured rule and applies the step.
Runs are bit-for-bit deterministic given the three seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aggregation import epsilon_threshold, majority_size
from .delay import (
    DelayModelSpec,
    DelaySchedule,
    delay_stats,
    generate_schedule,
    min_updates_bound,
)
from .errors import ConfigError, HistoryUnderflowError, InvariantViolation
from .markov import AgentStreams, mixing_time_for_alpha
from .td import build_linear_sa_problem, build_td_problem

AGGREGATORS = ("dasa", "delayed_average", "non_delayed")

TRACE_COLUMNS = ("k", "delta_sq", "gate", "median_error", "epsilon", "mean_staleness")


@dataclass(frozen=True)
class ProblemSpec:
    """Which problem family a run builds when none is injected."""

    kind: str = "td"
    n_states: int = 30
    n_features: int = 10
    gamma: float = 0.5
    dim: int = 2  # linear family only

    def __post_init__(self):
        if self.kind not in ("td", "linear"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    n_agents: int = 10
    horizon: int = 1000
    alpha: float = 0.01
    aggregator: str = "dasa"
    delay_spec: DelayModelSpec = field(default_factory=lambda: DelayModelSpec(kind="constant"))
    problem_seed: int = 0
    chain_seed: int = 1
    delay_seed: int = 2
    history_depth: int | None = None
    replications: int = 1
    problem: ProblemSpec = field(default_factory=ProblemSpec)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(
                f"unknown aggregator {self.aggregator!r}, expected one of {AGGREGATORS}"
            )
        if self.history_depth is not None and self.history_depth < 1:
            raise ConfigError("history_depth must be >= 1 or unbounded")


@dataclass
class RunTrace:
    """Per-iteration records plus run aggregates.

    ``delta_sq[k]`` is the squared distance to theta_star before the
    update at iteration k; it changes between rows only where the gate
    was open.  ``final_delta_sq`` is the error after the last iteration.
    """

    aggregator: str
    n_agents: int
    horizon: int
    alpha: float
    epsilon: float
    delta_sq: np.ndarray
    gate: np.ndarray
    median_error: np.ndarray
    mean_staleness: np.ndarray
    update_count: int
    tau_avg: float
    tau_max_observed: int
    final_delta_sq: float
    wall_clock: float
    metadata: dict
    parameters: np.ndarray | None = None


def build_problem(config: RunConfig):
    spec = config.problem
    if spec.kind == "td":
        return build_td_problem(spec.n_states, spec.n_features, spec.gamma, config.problem_seed)
    return build_linear_sa_problem(spec.dim, config.problem_seed)


def run(
    config: RunConfig,
    problem=None,
    schedule: DelaySchedule | None = None,
    record_parameters: bool = False,
) -> RunTrace:
    """Execute one run and return its trace.

    ``problem`` and ``schedule`` can be injected for tests; otherwise they
    are built from the config seeds.  Raises InvariantViolation if a
    delay-adaptive run ends with fewer updates than the guaranteed floor.
    """
    if problem is None:
        problem = build_problem(config)
    T, N = config.horizon, config.n_agents
    alpha = config.alpha
    agg = config.aggregator
    M = majority_size(N)
    eps = epsilon_threshold(alpha, M)
    uses_delays = agg != "non_delayed"

    if uses_delays:
        if schedule is None:
            schedule = generate_schedule(config.delay_spec, N, T, config.delay_seed)
        if schedule.n_agents != N:
            raise ConfigError(
                f"schedule has {schedule.n_agents} agents, config asks for {N}"
            )
        if schedule.horizon < T:
            raise ConfigError(
                f"schedule covers {schedule.horizon} iterations, config asks for {T}"
            )
        if schedule.horizon > T:
            schedule = DelaySchedule(tau=schedule.tau[:T])
        stats = delay_stats(schedule)
        t_idx = schedule.compute_times()
        max_tau = stats.tau_max_observed
        mean_staleness = stats.per_iteration_mean
    else:
        stats = None
        t_idx = None
        max_tau = 0
        mean_staleness = np.zeros(T)

    if config.history_depth is not None and max_tau > config.history_depth - 1:
        offending = np.argwhere(schedule.tau > config.history_depth - 1)[0]
        raise HistoryUnderflowError(
            int(offending[1]), int(offending[0]), config.history_depth
        )
    depth = max_tau + 1 if config.history_depth is None else config.history_depth
    depth = min(depth, T + 1)
    dir_depth = max_tau + 1

    streams = AgentStreams.create(problem.chain, N, config.chain_seed)
    uniforms = np.empty((T, N))
    for i, rng in enumerate(streams.rngs):
        uniforms[:, i] = rng.random(T)

    m = problem.dim
    theta = np.zeros(m)
    theta_star = problem.theta_star
    cum_rows = problem.chain.cumulative
    states = streams.states.copy()
    agent_ids = np.arange(N)

    theta_ring = np.zeros((depth, m))
    dir_ring = np.zeros((dir_depth, N, m)) if uses_delays else None

    delta_sq = np.empty(T)
    gate = np.zeros(T, dtype=np.int8)
    median_error = np.zeros(T)
    parameters = np.empty((T + 1, m)) if record_parameters else None
    if record_parameters:
        parameters[0] = theta

    diff0 = theta - theta_star
    dsq = float(diff0 @ diff0)

    start = time.perf_counter()
    for k in range(T):
        rows = cum_rows[states]
        nxt = (rows <= uniforms[k][:, None]).sum(axis=1)
        fresh = problem.operator_batch(theta, states, nxt)
        states = nxt
        delta_sq[k] = dsq

        if agg == "non_delayed":
            direction = fresh.mean(axis=0)
            open_gate = True
        else:
            dir_ring[k % dir_depth] = fresh
            tk = t_idx[k]
            stale_thetas = theta_ring[tk % depth]
            d = stale_thetas - theta
            errors = np.sqrt(np.einsum("ij,ij->i", d, d))
            if agg == "dasa":
                order = np.argsort(errors, kind="stable")
                chosen = order[:M]
                med = float(errors[chosen[-1]])
                median_error[k] = med
                open_gate = med <= eps
                if open_gate:
                    direction = dir_ring[tk[chosen] % dir_depth, chosen].mean(axis=0)
            else:  # delayed_average
                median_error[k] = float(np.partition(errors, M - 1)[M - 1])
                direction = dir_ring[tk % dir_depth, agent_ids].mean(axis=0)
                open_gate = True

        if open_gate:
            gate[k] = 1
            theta = theta + alpha * direction
            diff = theta - theta_star
            dsq = float(diff @ diff)
        theta_ring[(k + 1) % depth] = theta
        if record_parameters:
            parameters[k + 1] = theta
    wall_clock = time.perf_counter() - start

    update_count = int(gate.sum())
    tau_avg = stats.tau_avg if stats is not None else 0.0
    tau_max_observed = stats.tau_max_observed if stats is not None else 0
    if agg == "dasa":
        floor = min_updates_bound(T, tau_avg)
        if update_count < floor:
            raise InvariantViolation(
                f"update count {update_count} fell below the guaranteed floor {floor} "
                f"(T={T}, tau_avg={tau_avg:.3f})"
            )

    metadata = {
        "aggregator": agg,
        "alpha": alpha,
        "epsilon": eps,
        "n_agents": N,
        "horizon": T,
        "problem_seed": config.problem_seed,
        "chain_seed": config.chain_seed,
        "delay_seed": config.delay_seed,
        "delay": _delay_meta(config.delay_spec) if uses_delays else {"kind": "none"},
        "mu": float(problem.mu),
        "L": float(problem.L),
        "sigma": float(problem.sigma),
    }
    if hasattr(problem, "omega"):
        metadata["omega"] = float(problem.omega)

    return RunTrace(
        aggregator=agg,
        n_agents=N,
        horizon=T,
        alpha=alpha,
        epsilon=eps,
        delta_sq=delta_sq,
        gate=gate,
        median_error=median_error,
        mean_staleness=np.asarray(mean_staleness, dtype=float),
        update_count=update_count,
        tau_avg=float(tau_avg),
        tau_max_observed=int(tau_max_observed),
        final_delta_sq=dsq,
        wall_clock=wall_clock,
        metadata=metadata,
        parameters=parameters,
    )


def _delay_meta(spec: DelayModelSpec) -> dict:
    meta = {"kind": spec.kind}
    if spec.kind == "constant":
        meta["value"] = spec.value
    elif spec.kind == "uniform":
        meta["tau_max"] = spec.tau_max
    elif spec.kind == "straggler":
        meta["tau_max"] = spec.tau_max
        meta["p"] = spec.p
    else:
        meta["path"] = str(spec.path)
    return meta


def derive_seed(base: int, index: int) -> int:
    """Stable per-replication seed derivation."""
    return int(np.random.SeedSequence([int(base), int(index)]).generate_state(1)[0])


@dataclass
class ReplicatedResult:
    """Pointwise mean and standard error of the error curve across replications."""

    aggregator: str
    n_agents: int
    horizon: int
    alpha: float
    epsilon: float
    replications: int
    mean_delta_sq: np.ndarray
    stderr_delta_sq: np.ndarray
    mean_gate: np.ndarray
    mean_median_error: np.ndarray
    mean_staleness: np.ndarray
    update_counts: list[int]
    final_delta_sqs: list[float]
    tau_avgs: list[float]
    traces: list[RunTrace]

    @property
    def mean_update_count(self) -> float:
        return float(np.mean(self.update_counts))

    @property
    def mean_final_delta_sq(self) -> float:
        return float(np.mean(self.final_delta_sqs))


def run_replicated(
    config: RunConfig, problem=None, keep_traces: bool = True
) -> ReplicatedResult:
    """Run ``config.replications`` runs with derived seeds and average them.

    The problem instance is shared across replications; chain and delay
    seeds are derived per replication.  With ``keep_traces=False`` only
    the aggregate curves are retained (constant memory in R).
    """
    if problem is None:
        problem = build_problem(config)
    R = config.replications
    T = config.horizon
    # Welford accumulation: exact zero spread for identical replications
    mean = np.zeros(T)
    m2 = np.zeros(T)
    sum_gate = np.zeros(T)
    sum_med = np.zeros(T)
    sum_stale = np.zeros(T)
    traces: list[RunTrace] = []
    update_counts: list[int] = []
    finals: list[float] = []
    tau_avgs: list[float] = []
    epsilon = None
    for r in range(R):
        cfg = replace(
            config,
            chain_seed=derive_seed(config.chain_seed, r),
            delay_seed=derive_seed(config.delay_seed, r),
        )
        trace = run(cfg, problem=problem)
        epsilon = trace.epsilon
        delta = trace.delta_sq - mean
        mean += delta / (r + 1)
        m2 += delta * (trace.delta_sq - mean)
        sum_gate += trace.gate
        sum_med += trace.median_error
        sum_stale += trace.mean_staleness
        update_counts.append(trace.update_count)
        finals.append(trace.final_delta_sq)
        tau_avgs.append(trace.tau_avg)
        if keep_traces:
            traces.append(trace)
    if R > 1:
        stderr = np.sqrt(m2 / (R - 1) / R)
    else:
        stderr = np.zeros(T)
    return ReplicatedResult(
        aggregator=config.aggregator,
        n_agents=config.n_agents,
        horizon=T,
        alpha=config.alpha,
        epsilon=float(epsilon),
        replications=R,
        mean_delta_sq=mean,
        stderr_delta_sq=stderr,
        mean_gate=sum_gate / R,
        mean_median_error=sum_med / R,
        mean_staleness=sum_stale / R,
        update_counts=update_counts,
        final_delta_sqs=finals,
        tau_avgs=tau_avgs,
        traces=traces,
    )


def dasa_step_size(mu: float, L: float, tau_mix: float, c1: float = 1.0) -> float:
    """Default step size mu / (c1 * L^2 * tau_mix) for delay-adaptive runs."""
    if mu <= 0 or L <= 0 or tau_mix <= 0:
        raise ValueError("mu, L and tau_mix must be positive")
    if c1 < 1.0:
        raise ValueError("safety constant c1 must be >= 1")
    return mu / (c1 * L * L * tau_mix)


def delayed_step_size(
    mu: float, L: float, tau_mix: float, tau_max: float, c1: float = 1.0
) -> float:
    """Step size mu / (c1 * L^2 * (tau_mix + tau_max)) for the non-adaptive baseline."""
    if tau_max < 0:
        raise ValueError("tau_max must be nonnegative")
    return dasa_step_size(mu, L, tau_mix + tau_max, c1)


def stepsize_fixed_point(problem, c1: float = 1.0, rounds: int = 2) -> tuple[float, int]:
    """Resolve the mutual dependence of the step size and the mixing time.

    The mixing precision depends on alpha while alpha depends on the
    mixing time; starting from alpha0 = mu / (c1 L^2) the two are iterated
    ``rounds`` times, flooring the mixing time at 1.  Returns
    (alpha, tau_mix).
    """
    tau_mix = 1
    alpha = dasa_step_size(problem.mu, problem.L, tau_mix, c1)
    for _ in range(rounds):
        tau_mix = max(1, mixing_time_for_alpha(problem.chain, alpha, problem.L))
        alpha = dasa_step_size(problem.mu, problem.L, tau_mix, c1)
    return alpha, tau_mix


def _fmt(x) -> str:
    return repr(float(x))


def write_trace_csv(path: str | Path, trace: RunTrace) -> None:
    """Write the per-iteration trace with round-trippable float formatting."""
    write_curve_csv(
        path,
        delta_sq=trace.delta_sq,
        gate=trace.gate,
        median_error=trace.median_error,
        epsilon=trace.epsilon,
        mean_staleness=trace.mean_staleness,
    )


def write_curve_csv(
    path: str | Path,
    delta_sq: np.ndarray,
    gate: np.ndarray,
    median_error: np.ndarray,
    epsilon: float,
    mean_staleness: np.ndarray,
) -> None:
    path = Path(path)
    T = len(delta_sq)
    eps_s = _fmt(epsilon)
    gate_int = np.issubdtype(np.asarray(gate).dtype, np.integer)
    lines = [",".join(TRACE_COLUMNS)]
    for k in range(T):
        g = str(int(gate[k])) if gate_int else _fmt(gate[k])
        lines.append(
            f"{k},{_fmt(delta_sq[k])},{g},{_fmt(median_error[k])},{eps_s},{_fmt(mean_staleness[k])}"
        )
    path.write_text("\n".join(lines) + "\n")


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a trace CSV back into column arrays (floats, k as int)."""
    lines = Path(path).read_text().splitlines()
    header = tuple(lines[0].split(","))
    if header != TRACE_COLUMNS:
        raise ConfigError(
            f"{path}: unexpected trace columns {header}, expected {TRACE_COLUMNS}"
        )
    data = np.array(
        [[float(cell) for cell in line.split(",")] for line in lines[1:] if line.strip()]
    )
    out = {name: data[:, j] for j, name in enumerate(TRACE_COLUMNS)}
    out["k"] = out["k"].astype(np.int64)
    return out
