"""Finite ergodic Markov chains: construction, sampling, mixing times.

Each agent owns an independent random stream derived from a master seed,
so observation processes are statistically independent across agents
while the whole simulation stays reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .errors import ConvergenceError

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10


@dataclass(frozen=True)
class FiniteMarkovChain:
    """Row-stochastic transition matrix with its stationary distribution.

    Instances are immutable and safe to share across threads.  Use
    ``from_transition`` so the ergodicity checks run.
    """

    transition: np.ndarray
    stationary: np.ndarray
    cumulative: np.ndarray = field(repr=False)

    @classmethod
    def from_transition(cls, transition: np.ndarray) -> "FiniteMarkovChain":
        P = np.asarray(transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if P.min() < 0:
            raise ValueError("transition probabilities must be nonnegative")
        row_err = np.abs(P.sum(axis=1) - 1.0).max()
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 (max deviation {row_err:.2e})")
        n = P.shape[0]
        if n > 1:
            adjacency = sp.csr_matrix((P > 0) | np.eye(n, dtype=bool))
            n_comp, _ = csgraph.connected_components(adjacency, connection="strong")
            if n_comp != 1:
                raise ValueError("chain is not irreducible")
            if not (np.diag(P) > 0).any():
                raise ValueError("chain needs at least one self-loop to be aperiodic")
        pi = stationary_distribution(P)
        if pi.min() <= 0:
            raise ValueError("stationary distribution must be strictly positive")
        cumulative = np.cumsum(P, axis=1)
        cumulative[:, -1] = 1.0
        return cls(transition=P, stationary=pi, cumulative=cumulative)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]


def stationary_distribution(
    transition: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6
) -> np.ndarray:
    """Fixed point of pi = pi P by power iteration.

    Raises ConvergenceError carrying the last residual if the cap is hit.
    """
    P = np.asarray(transition, dtype=float)
    v = np.full(P.shape[0], 1.0 / P.shape[0])
    residual = np.inf
    for _ in range(max_iter):
        nxt = v @ P
        residual = float(np.abs(nxt - v).sum())
        v = nxt
        if residual <= tol:
            return v / v.sum()
    raise ConvergenceError("stationary distribution did not converge", residual)


def random_ergodic_chain(
    n_states: int,
    self_loop_floor: float,
    seed,
    concentration: float = 1.0,
) -> FiniteMarkovChain:
    """Random chain: symmetric-Dirichlet rows blended with a self-loop floor.

    The floor forces every diagonal entry to at least ``self_loop_floor``,
    which guarantees aperiodicity; Dirichlet rows are almost surely
    strictly positive, giving irreducibility.  Larger ``concentration``
    makes rows more uniform and the chain faster-mixing.
    """
    if n_states < 2:
        raise ValueError("need at least two states")
    if not 0.0 < self_loop_floor < 1.0:
        raise ValueError("self_loop_floor must be in (0, 1)")
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.full(n_states, concentration), size=n_states)
    P = (1.0 - self_loop_floor) * rows + self_loop_floor * np.eye(n_states)
    return FiniteMarkovChain.from_transition(P)


@dataclass
class AgentStreams:
    """Per-agent chain states with one independent random stream each."""

    states: np.ndarray
    rngs: list[np.random.Generator]

    @classmethod
    def create(cls, chain: FiniteMarkovChain, n_agents: int, seed) -> "AgentStreams":
        """Spawn ``n_agents`` independent streams from a master seed.

        Each agent's initial state is drawn from the stationary
        distribution using its own stream (one draw per agent).
        """
        if n_agents < 1:
            raise ValueError("need at least one agent")
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rngs = [np.random.default_rng(child) for child in seq.spawn(n_agents)]
        cum_pi = np.cumsum(chain.stationary)
        cum_pi[-1] = 1.0
        states = np.array(
            [int(np.searchsorted(cum_pi, rng.random(), side="right")) for rng in rngs],
            dtype=np.int64,
        )
        return cls(states=states, rngs=rngs)

    @property
    def n_agents(self) -> int:
        return len(self.rngs)


def step(chain: FiniteMarkovChain, streams: AgentStreams, agent_id: int) -> int:
    """Advance one agent's chain by one transition; other streams untouched."""
    u = streams.rngs[agent_id].random()
    state = int(streams.states[agent_id])
    nxt = int(np.searchsorted(chain.cumulative[state], u, side="right"))
    streams.states[agent_id] = nxt
    return nxt


def step_all(chain: FiniteMarkovChain, streams: AgentStreams) -> np.ndarray:
    """Advance every agent once, in agent-id order; returns the new states.

    Consumes exactly one draw per agent from that agent's own stream, so
    the result equals calling ``step`` for each agent in turn.
    """
    u = np.array([rng.random() for rng in streams.rngs])
    rows = chain.cumulative[streams.states]
    nxt = (rows <= u[:, None]).sum(axis=1)
    streams.states[:] = nxt
    return nxt


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def tv_mixing_time(
    chain: FiniteMarkovChain, precision: float, max_steps: int = 100_000
) -> int:
    """Smallest t >= 0 with max-over-starts TV(P^t(s, .), pi) <= precision.

    t = 0 uses the identity (no transitions taken).  Total-variation
    distance to the stationary distribution never increases with t, which
    the loop also asserts.
    """
    if not 0.0 < precision <= 1.0:
        raise ValueError("precision must be in (0, 1]")
    P = chain.transition
    pi = chain.stationary
    power = np.eye(chain.n_states)
    prev_tv = np.inf
    for t in range(max_steps + 1):
        tv = 0.5 * float(np.abs(power - pi).sum(axis=1).max())
        if tv > prev_tv + 1e-12:
            raise ConvergenceError("total variation increased while powering", tv)
        prev_tv = tv
        if tv <= precision:
            return t
        power = power @ P
    raise ConvergenceError("mixing time estimate hit the step cap", prev_tv)


def mixing_time_for_alpha(
    chain: FiniteMarkovChain, alpha: float, operator_scale: float
) -> int:
    """Mixing time at the precision a step size of ``alpha`` requires.

    ``operator_scale`` is the Lipschitz bound of the noisy operator; a TV
    distance of alpha^2 / (2 * operator_scale) makes the conditional
    expectation of any operator bounded by that scale deviate from its
    stationary mean by at most alpha^2 * (norm(theta) + sigma).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if operator_scale <= 0:
        raise ValueError("operator_scale must be positive")
    precision = min(1.0, alpha**2 / (2.0 * operator_scale))
    return tv_mixing_time(chain, precision)


def spectral_gap(chain: FiniteMarkovChain) -> float:
    """1 - |lambda_2|, the modulus gap of the transition matrix."""
    eigvals = np.linalg.eigvals(chain.transition)
    mods = np.sort(np.abs(eigvals))[::-1]
    return float(1.0 - mods[1]) if len(mods) > 1 else 1.0
