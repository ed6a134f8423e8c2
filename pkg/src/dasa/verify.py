"""Verification suites exposed through ``dasa verify``.

Each suite exercises one family of guarantees end to end and reports a
list of cases; any failure includes enough data to replay the case.

  lemma1:      the update-count floor on delay-adaptive runs, over random
               and adversarial schedules of every supported source.
  assumptions: the numerical problem gate on freshly generated instances.
  mixing:      the mixing-time estimator against the two-state closed form.
  oracle:      the closed-form mean operator against exhaustive
               enumeration, and the zero-noise geometric recursion.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .delay import (
    DelayModelSpec,
    DelaySchedule,
    generate_schedule,
    min_updates_bound,
    write_schedule_csv,
)
from .errors import InvariantViolation
from .markov import FiniteMarkovChain, tv_mixing_time
from .sim import ProblemSpec, RunConfig, run
from .td import (
    build_linear_sa_problem,
    build_td_problem,
    enumerate_expected_operator,
    validate_problem,
    zero_noise_linear_problem,
)


@dataclass
class CaseResult:
    name: str
    passed: bool
    detail: str = ""
    replay: dict = field(default_factory=dict)


def _adversarial_schedule(kind: str, horizon: int, n_agents: int, rng) -> DelaySchedule:
    k = np.arange(horizon)[:, None]
    if kind == "freeze":
        # stale to iteration 0 until a cutover, fresh afterwards
        cut = int(rng.integers(1, horizon + 1))
        tau = np.where(k < cut, k, 0)
        tau = np.broadcast_to(tau, (horizon, n_agents)).copy()
    elif kind == "sawtooth":
        # compute-time index advances in blocks
        s = int(rng.integers(1, max(2, horizon // 2)))
        tau = np.broadcast_to(np.arange(horizon)[:, None] % s, (horizon, n_agents)).copy()
        tau = np.minimum(tau, k)
    elif kind == "full_stale":
        tau = np.broadcast_to(k, (horizon, n_agents)).copy()
    else:  # random_monotone: independent nondecreasing compute times per agent
        tau = np.empty((horizon, n_agents), dtype=np.int64)
        for i in range(n_agents):
            raw = rng.integers(0, np.arange(horizon) + 1)
            t = np.maximum.accumulate(raw)
            tau[:, i] = np.arange(horizon) - t
    return DelaySchedule(tau=tau.astype(np.int64))


def lemma1_suite(seed: int = 0, cases: int = 200) -> list[CaseResult]:
    """Random DASA runs across every schedule source; asserts the update floor."""
    rng = np.random.default_rng(seed)
    problems = {
        1: build_linear_sa_problem(1, 11),
        2: build_linear_sa_problem(2, 12),
        3: build_linear_sa_problem(3, 13),
    }
    models = ("constant", "uniform", "straggler", "freeze", "sawtooth", "full_stale", "random_monotone")
    results = []
    with tempfile.TemporaryDirectory(prefix="dasa-lemma1-") as tmp:
        for case in range(cases):
            n_agents = int(rng.integers(1, 33))
            horizon = int(round(10 ** rng.uniform(1.7, 4.0)))
            alpha = float(10 ** rng.uniform(-3, math.log10(0.5)))
            model = models[case % len(models)]
            delay_seed = int(rng.integers(0, 2**31))
            via_file = case % 11 == 3
            if model == "constant":
                spec = DelayModelSpec(kind="constant", value=int(rng.integers(0, horizon + 1)))
                schedule = generate_schedule(spec, n_agents, horizon, delay_seed)
            elif model == "uniform":
                spec = DelayModelSpec(kind="uniform", tau_max=int(rng.integers(0, horizon + 1)))
                schedule = generate_schedule(spec, n_agents, horizon, delay_seed)
            elif model == "straggler":
                spec = DelayModelSpec(
                    kind="straggler",
                    tau_max=int(rng.integers(0, horizon + 1)),
                    p=float(rng.random()),
                )
                schedule = generate_schedule(spec, n_agents, horizon, delay_seed)
            else:
                schedule = _adversarial_schedule(model, horizon, n_agents, rng)
                spec = DelayModelSpec(kind="constant")  # placeholder, schedule injected
            if via_file:
                path = Path(tmp) / f"case{case}.csv"
                write_schedule_csv(schedule, path)
                spec = DelayModelSpec(kind="file", path=path)
                schedule = None
            dim = int(rng.integers(1, 4))
            config = RunConfig(
                n_agents=n_agents,
                horizon=horizon,
                alpha=alpha,
                aggregator="dasa",
                delay_spec=spec,
                problem_seed=10 + dim,
                chain_seed=int(rng.integers(0, 2**31)),
                delay_seed=delay_seed,
                problem=ProblemSpec(kind="linear", dim=dim),
            )
            replay = {
                "model": model,
                "n_agents": n_agents,
                "horizon": horizon,
                "alpha": alpha,
                "chain_seed": config.chain_seed,
                "delay_seed": delay_seed,
                "dim": dim,
                "via_file": via_file,
            }
            name = f"case{case:03d}_{model}" + ("_file" if via_file else "")
            try:
                trace = run(config, problem=problems[dim], schedule=schedule)
            except InvariantViolation as exc:
                results.append(CaseResult(name, False, str(exc), replay))
                continue
            floor = min_updates_bound(trace.horizon, trace.tau_avg)
            ok = trace.update_count >= floor
            detail = f"updates={trace.update_count} floor={floor} tau_avg={trace.tau_avg:.2f}"
            results.append(CaseResult(name, ok, detail, replay if not ok else {}))
    return results


def assumptions_suite(seed: int = 0, instances: int = 20) -> list[CaseResult]:
    """Problem gate on freshly generated paper-scale instances."""
    results = []
    for i in range(instances):
        instance_seed = seed * 1000 + i
        name = f"instance{i:02d}_seed{instance_seed}"
        try:
            problem = build_td_problem(30, 10, 0.5, instance_seed)
            validate_problem(problem, seed=i, n_theta=1000)
            residual = float(np.linalg.norm(problem.expected_operator(problem.theta_star)))
            detail = (
                f"mu={problem.mu:.4f} L={problem.L:.3f} sigma={problem.sigma:.3f} "
                f"residual={residual:.2e}"
            )
            results.append(CaseResult(name, True, detail))
        except InvariantViolation as exc:
            results.append(CaseResult(name, False, str(exc), {"seed": instance_seed}))
    return results


def two_state_chain(a: float, b: float) -> FiniteMarkovChain:
    return FiniteMarkovChain.from_transition(np.array([[1 - a, a], [b, 1 - b]]))


def analytic_two_state_mixing_time(a: float, b: float, precision: float) -> int:
    """Closed form for the two-state chain: distance decays as |1-a-b|^t."""
    lam = abs(1.0 - a - b)
    pi_min = min(b / (a + b), a / (a + b))
    prefactor = 1.0 - pi_min
    if prefactor <= precision:
        return 0
    if lam == 0.0:
        return 1
    t = max(1, math.ceil(math.log(precision / prefactor) / math.log(lam)))
    while lam**t * prefactor > precision:
        t += 1
    while t > 0 and lam ** (t - 1) * prefactor <= precision:
        t -= 1
    return t


MIXING_TRIPLES = (
    (0.3, 0.3, 1e-3),
    (0.1, 0.2, 1e-4),
    (0.05, 0.9, 1e-2),
    (0.5, 0.5, 0.4),
    (0.2, 0.6, 1e-5),
    (0.45, 0.45, 1e-3),
    (0.02, 0.03, 1e-2),
    (0.7, 0.2, 1e-6),
    (0.33, 0.11, 1e-4),
    (0.25, 0.65, 1e-8),
)


def mixing_suite() -> list[CaseResult]:
    """Estimator vs the closed form on two-state chains."""
    results = []
    for a, b, precision in MIXING_TRIPLES:
        expected = analytic_two_state_mixing_time(a, b, precision)
        actual = tv_mixing_time(two_state_chain(a, b), precision)
        ok = actual == expected
        results.append(
            CaseResult(
                f"a={a}_b={b}_p={precision:g}",
                ok,
                f"estimator={actual} analytic={expected}",
                {} if ok else {"a": a, "b": b, "precision": precision},
            )
        )
    return results


def oracle_suite(seed: int = 0) -> list[CaseResult]:
    """Closed-form mean operator vs enumeration, and the geometric recursion."""
    results = []
    rng = np.random.default_rng(seed)
    for n, r in ((3, 2), (5, 3), (8, 4), (10, 5)):
        problem = build_td_problem(n, r, 0.5, seed * 100 + n)
        worst = 0.0
        for _ in range(10):
            theta = rng.standard_normal(r) * 3.0
            dev = float(
                np.abs(
                    problem.expected_operator(theta) - enumerate_expected_operator(problem, theta)
                ).max()
            )
            worst = max(worst, dev)
        ok = worst <= 1e-10
        results.append(
            CaseResult(f"enumeration_n{n}", ok, f"max deviation {worst:.2e}")
        )

    problem = zero_noise_linear_problem(1.0, 1.0)
    alpha = 0.05
    config = RunConfig(
        n_agents=1,
        horizon=100,
        alpha=alpha,
        aggregator="non_delayed",
        problem=ProblemSpec(kind="linear", dim=1),
    )
    trace = run(config, problem=problem)
    ks = np.arange(100)
    expected = (1.0 - alpha * 1.0) ** (2 * ks) * float(problem.theta_star[0] ** 2)
    rel = float(np.max(np.abs(trace.delta_sq - expected) / expected))
    results.append(
        CaseResult("geometric_recursion", rel <= 1e-12, f"max relative error {rel:.2e}")
    )
    return results


SUITES = {
    "lemma1": lemma1_suite,
    "assumptions": assumptions_suite,
    "mixing": mixing_suite,
    "oracle": oracle_suite,
}
