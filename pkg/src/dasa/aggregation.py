"""Server-side aggregation rules.

The delay-adaptive rule (``dasa``) ranks agents by how far the parameter
they computed on has drifted from the server's current parameter, keeps
the closest half, and only applies the averaged direction when the median
drift is below a step-size-dependent threshold.  Two non-adaptive
baselines are provided: a plain average of all delayed directions and the
no-delay average used by the fresh-gradient baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HistoryUnderflowError


@dataclass(frozen=True)
class OperatorReport:
    """One agent's most recent update direction as seen by the server.

    ``computed_at`` is the server iteration whose broadcast parameter the
    direction was evaluated on; it is never ahead of the current
    iteration.
    """

    agent_id: int
    computed_at: int
    direction: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of the median staleness filter at one iteration.

    ``selected`` always has exactly ``ceil(N/2)`` entries, sorted by agent
    id.  ``median_agent`` is the selected agent realizing the largest
    staleness error (lowest id on ties) and ``median_error`` is that
    error.  ``gate_open`` is filled in once the threshold is known.
    """

    median_agent: int
    selected: tuple[int, ...]
    median_error: float
    gate_open: bool = False


class ParameterHistory:
    """Parameter vectors indexed by the iteration they were broadcast at.

    With ``depth=None`` every parameter is retained.  A bounded depth
    keeps the most recent ``depth`` entries and raises
    ``HistoryUnderflowError`` when an evicted entry is requested.
    """

    def __init__(self, depth: int | None = None):
        if depth is not None and depth < 1:
            raise ValueError("history depth must be >= 1")
        self._depth = depth
        self._entries: dict[int, np.ndarray] = {}
        self._latest = -1

    def append(self, iteration: int, theta: np.ndarray) -> None:
        if iteration != self._latest + 1:
            raise ValueError(
                f"history must be appended in order, got {iteration} after {self._latest}"
            )
        self._entries[iteration] = np.asarray(theta, dtype=float)
        self._latest = iteration
        if self._depth is not None and len(self._entries) > self._depth:
            del self._entries[iteration - self._depth]

    def get(self, iteration: int, agent_id: int = -1) -> np.ndarray:
        try:
            return self._entries[iteration]
        except KeyError:
            raise HistoryUnderflowError(agent_id, iteration, self._depth or 0) from None

    def __contains__(self, iteration: int) -> bool:
        return iteration in self._entries


def staleness_errors(
    history: ParameterHistory, reports: list[OperatorReport], k: int
) -> np.ndarray:
    """Euclidean distance between each report's compute-time parameter and the current one.

    ``reports`` must be ordered by agent id, one per agent.
    """
    theta_k = history.get(k)
    errors = np.empty(len(reports))
    for j, report in enumerate(reports):
        if report.agent_id != j:
            raise ValueError("reports must be ordered by agent_id, one per agent")
        if report.computed_at > k:
            raise ValueError(
                f"report of agent {j} computed at {report.computed_at} > iteration {k}"
            )
        theta_t = history.get(report.computed_at, agent_id=j)
        errors[j] = float(np.linalg.norm(theta_t - theta_k))
    return errors


def majority_size(n_agents: int) -> int:
    """Size of the selected set: ceil(N/2)."""
    return (n_agents + 1) // 2


def select_median_set(errors: np.ndarray, m: int | None = None) -> SelectionResult:
    """Keep the ``m`` agents with the smallest staleness errors.

    Ties break toward the lower agent id, so selection is deterministic
    and label-equivariant.  The returned ``median_agent`` is the selected
    agent with the largest error (the m-th order statistic), again with
    ties resolved to the lowest id.
    """
    errors = np.asarray(errors, dtype=float)
    n = errors.shape[0]
    if n == 0:
        raise ValueError("at least one agent is required")
    if m is None:
        m = majority_size(n)
    if not 1 <= m <= n:
        raise ValueError(f"selection size {m} out of range for {n} agents")
    order = np.argsort(errors, kind="stable")
    chosen = order[:m]
    median_error = float(errors[chosen].max())
    median_agent = int(min(int(i) for i in chosen if errors[i] == median_error))
    return SelectionResult(
        median_agent=median_agent,
        selected=tuple(sorted(int(i) for i in chosen)),
        median_error=median_error,
    )


def epsilon_threshold(alpha: float, m: int) -> float:
    """Gate threshold max(alpha^1.5, alpha/sqrt(m))."""
    if alpha <= 0:
        raise ValueError("step size must be positive")
    if m < 1:
        raise ValueError("selection size must be >= 1")
    return max(alpha**1.5, alpha / math.sqrt(m))


def dasa_direction(
    history: ParameterHistory,
    reports: list[OperatorReport],
    k: int,
    alpha: float,
    m: int | None = None,
) -> tuple[np.ndarray | None, SelectionResult]:
    """Delay-adaptive update direction.

    Returns ``(direction, selection)``.  The direction is the mean of the
    selected agents' reported directions when the median staleness error
    is within the threshold, and ``None`` otherwise (the caller must then
    leave the parameter unchanged).
    """
    errors = staleness_errors(history, reports, k)
    if m is None:
        m = majority_size(len(reports))
    selection = select_median_set(errors, m)
    eps = epsilon_threshold(alpha, m)
    gate_open = selection.median_error <= eps
    selection = SelectionResult(
        median_agent=selection.median_agent,
        selected=selection.selected,
        median_error=selection.median_error,
        gate_open=gate_open,
    )
    if not gate_open:
        return None, selection
    direction = np.mean([reports[i].direction for i in selection.selected], axis=0)
    return direction, selection


def delayed_average_direction(reports: list[OperatorReport]) -> np.ndarray:
    """Mean of all delayed directions; no filtering, no gate."""
    if not reports:
        raise ValueError("at least one report is required")
    return np.mean([r.direction for r in reports], axis=0)


def server_step(
    theta: np.ndarray, direction: np.ndarray | None, alpha: float
) -> np.ndarray:
    """One server update: theta + alpha * direction, or theta when the gate was closed."""
    if direction is None:
        return theta
    return theta + alpha * np.asarray(direction, dtype=float)
