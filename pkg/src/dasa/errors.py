"""Exception types shared across the package.

The CLI maps these onto stable exit codes: configuration problems exit
with 2, runtime invariant violations with 3.
"""


class ConfigError(ValueError):
    """Invalid configuration, schedule file, or user input."""


class HistoryUnderflowError(ConfigError):
    """A run needed a parameter older than the configured history depth.

    Carries the offending (agent, iteration) pair.
    """

    def __init__(self, agent: int, iteration: int, depth: int):
        self.agent = agent
        self.iteration = iteration
        self.depth = depth
        super().__init__(
            f"staleness of agent {agent} at iteration {iteration} exceeds "
            f"history depth {depth}; increase history_depth"
        )


class InvariantViolation(RuntimeError):
    """A runtime invariant that must hold for every run was violated."""


class ConvergenceError(RuntimeError):
    """An iterative numeric routine hit its iteration cap.

    ``residual`` holds the last observed error so callers can report it.
    """

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")
