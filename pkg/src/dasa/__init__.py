"""Delay-adaptive multi-agent stochastic approximation.

A library and discrete-time simulator for parameter-server stochastic
approximation under asynchronous up-link delays: the DASA median-filtered
delay-adaptive aggregation rule, non-adaptive baselines, Markov-chain
observation processes, and a TD(0) linear-function-approximation testbed.
"""

from .aggregation import (
    OperatorReport,
    ParameterHistory,
    SelectionResult,
    dasa_direction,
    delayed_average_direction,
    epsilon_threshold,
    majority_size,
    select_median_set,
    server_step,
    staleness_errors,
)
from .delay import (
    DelayModelSpec,
    DelaySchedule,
    DelayStats,
    delay_stats,
    generate_schedule,
    min_updates_bound,
    read_schedule_csv,
    simulate_arrivals,
    write_schedule_csv,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    HistoryUnderflowError,
    InvariantViolation,
)
from .markov import (
    AgentStreams,
    FiniteMarkovChain,
    mixing_time_for_alpha,
    random_ergodic_chain,
    spectral_gap,
    stationary_distribution,
    step,
    step_all,
    total_variation,
    tv_mixing_time,
)
from .sim import (
    ProblemSpec,
    ReplicatedResult,
    RunConfig,
    RunTrace,
    build_problem,
    dasa_step_size,
    delayed_step_size,
    read_trace_csv,
    run,
    run_replicated,
    stepsize_fixed_point,
    write_trace_csv,
)
from .td import (
    LinearSAProblem,
    Observation,
    TDProblem,
    build_linear_sa_problem,
    build_td_problem,
    enumerate_expected_operator,
    estimate_constants,
    expected_operator,
    linear_sa_from_tables,
    load_problem,
    save_problem,
    td_operator,
    td_problem_from_parts,
    validate_problem,
    zero_noise_linear_problem,
)

__version__ = "0.1.0"
