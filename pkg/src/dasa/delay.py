"""Up-link delay schedules and their statistics.

A schedule stores the staleness tau[k, i]: at server iteration k the
freshest report available from agent i was computed at iteration
k - tau[k, i].  Schedules come either from a physical transit-time model
(each dispatched report takes a number of iterations to arrive, the
server keeps the freshest arrival) or straight from a CSV file for
adversarial tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

DELAY_KINDS = ("constant", "uniform", "straggler", "file")


@dataclass(frozen=True)
class DelayModelSpec:
    """Named delay model plus its parameters.

    constant:   every dispatch takes ``value`` iterations.
    uniform:    transit drawn uniformly from {0, ..., tau_max}.
    straggler:  transit is tau_max with probability p, else 0.
    file:       staleness matrix read from ``path``.
    """

    kind: str
    value: int = 0
    tau_max: int = 0
    p: float = 0.0
    path: str | Path | None = None

    def __post_init__(self):
        if self.kind not in DELAY_KINDS:
            raise ConfigError(f"unknown delay kind {self.kind!r}, expected one of {DELAY_KINDS}")
        if self.value < 0 or self.tau_max < 0:
            raise ConfigError("delay parameters must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("straggler probability must be in [0, 1]")
        if self.kind == "file" and self.path is None:
            raise ConfigError("delay kind 'file' requires a path")

    def max_transit(self) -> int:
        """Largest transit delay the model can produce (file: read from disk)."""
        if self.kind == "constant":
            return self.value
        if self.kind in ("uniform", "straggler"):
            return self.tau_max
        return int(read_schedule_csv(self.path).tau.max())


@dataclass(frozen=True)
class DelaySchedule:
    """Staleness matrix with shape (horizon, n_agents).

    Invariants, checked on construction: 0 <= tau[k, i] <= k, and the
    compute-time index k - tau[k, i] never decreases in k (the server
    never regresses to an older report).
    """

    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau)
        if tau.ndim != 2 or tau.shape[0] < 1 or tau.shape[1] < 1:
            raise ValueError("schedule must be a (horizon, n_agents) matrix")
        if not np.issubdtype(tau.dtype, np.integer):
            raise ValueError("staleness entries must be integers")
        if tau.min() < 0:
            raise ValueError("staleness entries must be nonnegative")
        k = np.arange(tau.shape[0])[:, None]
        if (tau > k).any():
            bad = np.argwhere(tau > k)[0]
            raise ValueError(
                f"staleness exceeds iteration index at k={bad[0]}, agent={bad[1]}"
            )
        t = k - tau
        if (np.diff(t, axis=0) < 0).any():
            bad = np.argwhere(np.diff(t, axis=0) < 0)[0]
            raise ValueError(
                f"compute-time index regresses at k={bad[0] + 1}, agent={bad[1]}"
            )
        object.__setattr__(self, "tau", tau)

    @property
    def horizon(self) -> int:
        return self.tau.shape[0]

    @property
    def n_agents(self) -> int:
        return self.tau.shape[1]

    def compute_times(self) -> np.ndarray:
        """Matrix of compute-time indices t[k, i] = k - tau[k, i]."""
        return np.arange(self.horizon)[:, None] - self.tau


@dataclass(frozen=True)
class DelayStats:
    tau_avg: float
    tau_max_observed: int
    per_iteration_mean: np.ndarray


def simulate_arrivals(transit: np.ndarray) -> DelaySchedule:
    """Turn per-dispatch transit delays into a staleness schedule.

    The report dispatched at iteration j arrives at j + transit[j, i]; at
    iteration k the server holds the freshest arrived report.  The report
    computed at iteration 0 is available from the start, which realizes
    the convention that the initial parameter stands in for anything
    older.
    """
    transit = np.asarray(transit)
    if transit.ndim != 2:
        raise ValueError("transit must be a (horizon, n_agents) matrix")
    if not np.issubdtype(transit.dtype, np.integer) or transit.min() < 0:
        raise ValueError("transit delays must be nonnegative integers")
    horizon, n_agents = transit.shape
    ks = np.arange(horizon)
    tau = np.empty((horizon, n_agents), dtype=np.int64)
    for i in range(n_agents):
        arrival = ks + transit[:, i]
        # freshest[a] = largest j whose report arrives exactly at time a
        freshest = np.full(horizon, -1, dtype=np.int64)
        in_range = arrival < horizon
        np.maximum.at(freshest, arrival[in_range], ks[in_range])
        freshest[0] = max(freshest[0], 0)
        tau[:, i] = ks - np.maximum.accumulate(freshest)
    return DelaySchedule(tau=tau)


def generate_schedule(
    spec: DelayModelSpec, n_agents: int, horizon: int, seed
) -> DelaySchedule:
    """Realize a delay model as a concrete schedule, deterministic in the seed."""
    if horizon < 1 or n_agents < 1:
        raise ConfigError("horizon and n_agents must be >= 1")
    if spec.kind == "file":
        schedule = read_schedule_csv(spec.path)
        if schedule.n_agents != n_agents:
            raise ConfigError(
                f"schedule file has {schedule.n_agents} agents, run needs {n_agents}"
            )
        if schedule.horizon < horizon:
            raise ConfigError(
                f"schedule file covers {schedule.horizon} iterations, run needs {horizon}"
            )
        if schedule.horizon > horizon:
            schedule = DelaySchedule(tau=schedule.tau[:horizon])
        return schedule
    rng = np.random.default_rng(seed)
    if spec.kind == "constant":
        transit = np.full((horizon, n_agents), spec.value, dtype=np.int64)
    elif spec.kind == "uniform":
        transit = rng.integers(0, spec.tau_max + 1, size=(horizon, n_agents))
    else:  # straggler
        slow = rng.random((horizon, n_agents)) < spec.p
        transit = np.where(slow, spec.tau_max, 0).astype(np.int64)
    return simulate_arrivals(transit)


def delay_stats(schedule: DelaySchedule) -> DelayStats:
    """Average and maximum staleness over the whole run."""
    tau = schedule.tau
    return DelayStats(
        tau_avg=float(tau.mean()),
        tau_max_observed=int(tau.max()),
        per_iteration_mean=tau.mean(axis=1),
    )


def min_updates_bound(horizon: int, tau_avg: float) -> int:
    """Guaranteed minimum number of gate-open iterations: ceil(T / (8 (tau_avg + 1))).

    Holds for the delay-adaptive aggregator on any valid schedule; the
    simulator asserts it after every run.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if tau_avg < 0:
        raise ValueError("tau_avg must be nonnegative")
    return math.ceil(horizon / (8.0 * (tau_avg + 1.0)))


def write_schedule_csv(schedule: DelaySchedule, path: str | Path) -> None:
    """Write a schedule as CSV: header ``k,agent0,...``, one row per iteration."""
    path = Path(path)
    header = "k," + ",".join(f"agent{i}" for i in range(schedule.n_agents))
    lines = [header]
    for k in range(schedule.horizon):
        lines.append(str(k) + "," + ",".join(str(int(v)) for v in schedule.tau[k]))
    path.write_text("\n".join(lines) + "\n")


def read_schedule_csv(path: str | Path) -> DelaySchedule:
    """Parse a schedule CSV, reporting row/column positions on malformed input."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"schedule file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty schedule file")
    header = [c.strip() for c in lines[0].split(",")]
    if header[0] != "k" or len(header) < 2:
        raise ConfigError(f"{path}: row 0: header must be 'k,agent0,...'")
    n_agents = len(header) - 1
    rows = []
    for r, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_agents + 1:
            raise ConfigError(
                f"{path}: row {r}: expected {n_agents + 1} columns, got {len(cells)}"
            )
        parsed = []
        for c, cell in enumerate(cells):
            try:
                parsed.append(int(cell))
            except ValueError:
                raise ConfigError(
                    f"{path}: row {r}, column {c}: not an integer: {cell.strip()!r}"
                ) from None
        if parsed[0] != len(rows):
            raise ConfigError(
                f"{path}: row {r}, column 0: iteration index {parsed[0]} out of order"
            )
        rows.append(parsed[1:])
    if not rows:
        raise ConfigError(f"{path}: schedule has no data rows")
    try:
        return DelaySchedule(tau=np.asarray(rows, dtype=np.int64))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
