"""Concrete root-finding problem instances.

Two families are provided.  ``TDProblem`` is policy evaluation with
linear function approximation over an ergodic chain: the noisy operator
is the one-step temporal-difference direction and its stationary mean is
b - A theta with A = Phi' D (I - gamma P) Phi, b = Phi' D r.  The
``LinearSAProblem`` family gives tiny linear instances with a finite
observation set, used for exact small-scale oracle tests.

Every constructed instance passes a validation gate that numerically
checks strong monotonicity of the mean operator, the Lipschitz and
boundedness constants of the noisy operator, and the fixed-point
residual, before any simulation consumes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from .errors import InvariantViolation
from .markov import FiniteMarkovChain, random_ergodic_chain


class SAProblem(Protocol):
    """What the simulator needs from a problem instance."""

    chain: FiniteMarkovChain
    dim: int
    theta_star: np.ndarray
    mu: float
    L: float
    sigma: float

    def operator(self, theta: np.ndarray, state: int, next_state: int) -> np.ndarray: ...

    def operator_batch(
        self, theta: np.ndarray, states: np.ndarray, next_states: np.ndarray
    ) -> np.ndarray: ...

    def expected_operator(self, theta: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Observation:
    """One chain transition, the unit of data an agent consumes."""

    state: int
    next_state: int


class Constants(NamedTuple):
    mu: float
    L: float
    sigma: float
    omega: float


@dataclass(frozen=True)
class TDProblem:
    chain: FiniteMarkovChain
    features: np.ndarray  # (n_states, n_features)
    rewards: np.ndarray  # (n_states,)
    gamma: float
    A: np.ndarray
    b: np.ndarray
    theta_star: np.ndarray
    mu: float
    L: float
    sigma: float
    omega: float
    seed: int | None = None

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_states(self) -> int:
        return self.features.shape[0]

    def operator(self, theta: np.ndarray, state: int, next_state: int) -> np.ndarray:
        """Temporal-difference direction phi(s) * (r(s) + gamma phi(s')'theta - phi(s)'theta)."""
        phi_s = self.features[state]
        phi_n = self.features[next_state]
        td_error = self.rewards[state] + self.gamma * (phi_n @ theta) - (phi_s @ theta)
        return phi_s * td_error

    def operator_batch(
        self, theta: np.ndarray, states: np.ndarray, next_states: np.ndarray
    ) -> np.ndarray:
        values = self.features @ theta
        td_error = self.rewards[states] + self.gamma * values[next_states] - values[states]
        return self.features[states] * td_error[:, None]

    def expected_operator(self, theta: np.ndarray) -> np.ndarray:
        """Stationary mean of the noisy operator, in closed form: b - A theta."""
        return self.b - self.A @ theta


def td_operator(problem: TDProblem, theta: np.ndarray, obs: Observation) -> np.ndarray:
    return problem.operator(theta, obs.state, obs.next_state)


def expected_operator(problem, theta: np.ndarray) -> np.ndarray:
    return problem.expected_operator(theta)


def enumerate_expected_operator(problem: TDProblem, theta: np.ndarray) -> np.ndarray:
    """Mean operator by exhaustive enumeration of all weighted transitions.

    Independent of the closed form; intended as an oracle for small state
    spaces.
    """
    n = problem.n_states
    pi = problem.chain.stationary
    P = problem.chain.transition
    total = np.zeros(problem.dim)
    for s in range(n):
        for s2 in range(n):
            weight = pi[s] * P[s, s2]
            if weight > 0:
                total = total + weight * problem.operator(theta, s, s2)
    return total


def _td_constants(
    chain: FiniteMarkovChain,
    features: np.ndarray,
    rewards: np.ndarray,
    gamma: float,
    theta_star: np.ndarray,
    theta0_norm: float = 0.0,
) -> Constants:
    pi = chain.stationary
    gram = features.T @ (pi[:, None] * features)
    omega = float(np.linalg.eigvalsh(gram).min())
    if omega <= 0:
        raise InvariantViolation("feature Gram matrix is not positive definite")
    mu = (1.0 - gamma) * omega
    norms = np.linalg.norm(features, axis=1)
    # ||phi(s) (phi(s) - gamma phi(s'))'|| = ||phi(s)|| * ||phi(s) - gamma phi(s')||
    diff = features[:, None, :] - gamma * features[None, :, :]
    diff_norms = np.linalg.norm(diff, axis=2)
    lipschitz = float((norms[:, None] * diff_norms).max())
    L = max(1.0, lipschitz)
    reward_scale = float(np.abs(rewards).max() * norms.max()) / L
    sigma = max(1.0, reward_scale, float(np.linalg.norm(theta_star)), theta0_norm)
    return Constants(mu=mu, L=L, sigma=sigma, omega=omega)


def estimate_constants(problem: TDProblem) -> Constants:
    """Recompute (mu, L, sigma, omega) from the problem's own matrices."""
    return _td_constants(
        problem.chain, problem.features, problem.rewards, problem.gamma, problem.theta_star
    )


def td_problem_from_parts(
    chain: FiniteMarkovChain,
    features: np.ndarray,
    rewards: np.ndarray,
    gamma: float,
    seed: int | None = None,
    validate: bool = True,
) -> TDProblem:
    """Assemble a TD instance from explicit pieces (the override hook for tests)."""
    features = np.asarray(features, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    if features.shape[0] != chain.n_states or rewards.shape != (chain.n_states,):
        raise ValueError("feature / reward shapes do not match the chain")
    smallest_sv = np.linalg.svd(features, compute_uv=False).min()
    if smallest_sv <= 1e-8:
        raise InvariantViolation(f"features are rank deficient (sigma_min={smallest_sv:.2e})")
    pi = chain.stationary
    weighted = pi[:, None] * features
    A = features.T @ weighted - gamma * (features.T @ (pi[:, None] * (chain.transition @ features)))
    b = features.T @ (pi * rewards)
    theta_star = np.linalg.solve(A, b)
    constants = _td_constants(chain, features, rewards, gamma, theta_star)
    problem = TDProblem(
        chain=chain,
        features=features,
        rewards=rewards,
        gamma=gamma,
        A=A,
        b=b,
        theta_star=theta_star,
        mu=constants.mu,
        L=constants.L,
        sigma=constants.sigma,
        omega=constants.omega,
        seed=seed,
    )
    if validate:
        validate_problem(problem, seed=0)
    return problem


def build_td_problem(
    n_states: int,
    n_features: int,
    gamma: float,
    seed,
    self_loop_floor: float = 0.05,
    concentration: float = 3.0,
) -> TDProblem:
    """Random TD instance: ergodic chain, orthonormal random features, uniform rewards.

    Deterministic given the seed.  Retries with a perturbed seed if the
    orthonormalization comes out rank deficient (vanishingly rare), and
    fails after 5 attempts.
    """
    if not 1 <= n_features <= n_states:
        raise ValueError("need 1 <= n_features <= n_states")
    last_error: Exception | None = None
    for attempt in range(5):
        seq = np.random.SeedSequence([int(seed), attempt])
        chain_seed, feat_seed, reward_seed = seq.spawn(3)
        chain = random_ergodic_chain(
            n_states, self_loop_floor, chain_seed, concentration=concentration
        )
        rng = np.random.default_rng(feat_seed)
        raw = rng.standard_normal((n_states, n_features))
        q, _ = np.linalg.qr(raw)
        features = q[:, :n_features]
        rewards = np.random.default_rng(reward_seed).uniform(0.0, 1.0, size=n_states)
        try:
            return td_problem_from_parts(chain, features, rewards, gamma, seed=int(seed))
        except InvariantViolation as exc:
            last_error = exc
    raise InvariantViolation(f"could not build a valid instance after 5 attempts: {last_error}")


def validate_problem(
    problem,
    seed=0,
    n_theta: int = 1000,
    monotonicity_slack: float = 1e-10,
    fixed_point_tol: float = 1e-8,
) -> None:
    """Numerical gate run on every instance before simulation.

    Checks, with ``n_theta`` random parameters: strong monotonicity of the
    mean operator with the instance's mu, the Lipschitz bound on the
    noisy operator, the norm growth bound L (norm(theta) + sigma), and
    the fixed-point residual of theta_star.  Raises InvariantViolation on
    the first failure.
    """
    rng = np.random.default_rng(seed)
    dim = problem.dim
    theta_star = problem.theta_star
    residual = float(np.linalg.norm(problem.expected_operator(theta_star)))
    if residual > fixed_point_tol:
        raise InvariantViolation(f"mean operator at theta_star has norm {residual:.2e}")
    g_star = problem.expected_operator(theta_star)
    thetas = rng.standard_normal((n_theta, dim)) * 2.0
    observations = _all_observations(problem)
    for theta in thetas:
        diff = theta - theta_star
        inner = float((problem.expected_operator(theta) - g_star) @ diff)
        if inner + problem.mu * float(diff @ diff) > monotonicity_slack:
            raise InvariantViolation(
                f"strong monotonicity violated: {inner + problem.mu * float(diff @ diff):.2e}"
            )
    lip_slack = 1e-9 * problem.L
    for _ in range(n_theta):
        t1 = rng.standard_normal(dim) * 2.0
        t2 = rng.standard_normal(dim) * 2.0
        s, s2 = observations[rng.integers(len(observations))]
        lhs = float(np.linalg.norm(problem.operator(t1, s, s2) - problem.operator(t2, s, s2)))
        if lhs > problem.L * float(np.linalg.norm(t1 - t2)) + lip_slack:
            raise InvariantViolation("Lipschitz bound violated on a sampled pair")
        bound = problem.L * (float(np.linalg.norm(t1)) + problem.sigma)
        norm_g = float(np.linalg.norm(problem.operator(t1, s, s2)))
        if norm_g > bound + lip_slack:
            raise InvariantViolation("operator norm bound violated on a sampled observation")


def _all_observations(problem) -> list[tuple[int, int]]:
    P = problem.chain.transition
    pairs = np.argwhere(P > 0)
    return [(int(s), int(s2)) for s, s2 in pairs]


@dataclass(frozen=True)
class LinearSAProblem:
    """Finite-observation linear instance g(theta, o) = b_o - A_o theta.

    Observations are sampled i.i.d. from ``probs`` (realized as a chain
    whose rows all equal ``probs``, so it plugs into the same simulator).
    """

    chain: FiniteMarkovChain
    A_obs: np.ndarray  # (n_obs, dim, dim)
    b_obs: np.ndarray  # (n_obs, dim)
    theta_star: np.ndarray
    mu: float
    L: float
    sigma: float
    seed: int | None = None

    @property
    def dim(self) -> int:
        return self.A_obs.shape[1]

    def operator(self, theta: np.ndarray, state: int, next_state: int) -> np.ndarray:
        """The observation is the landed state of the transition."""
        return self.b_obs[next_state] - self.A_obs[next_state] @ theta

    def operator_batch(
        self, theta: np.ndarray, states: np.ndarray, next_states: np.ndarray
    ) -> np.ndarray:
        return self.b_obs[next_states] - self.A_obs[next_states] @ theta

    def expected_operator(self, theta: np.ndarray) -> np.ndarray:
        pi = self.chain.stationary
        A_bar = np.tensordot(pi, self.A_obs, axes=1)
        b_bar = pi @ self.b_obs
        return b_bar - A_bar @ theta


def _iid_chain(probs: np.ndarray) -> FiniteMarkovChain:
    probs = np.asarray(probs, dtype=float)
    if probs.min() <= 0 or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("observation probabilities must be positive and sum to 1")
    return FiniteMarkovChain.from_transition(np.tile(probs, (len(probs), 1)))


def linear_sa_from_tables(
    A_obs: np.ndarray,
    b_obs: np.ndarray,
    probs: np.ndarray | None = None,
    seed: int | None = None,
    validate: bool = True,
) -> LinearSAProblem:
    """Build a linear instance from explicit observation tables."""
    A_obs = np.asarray(A_obs, dtype=float)
    b_obs = np.asarray(b_obs, dtype=float)
    if A_obs.ndim != 3 or b_obs.ndim != 2 or A_obs.shape[0] != b_obs.shape[0]:
        raise ValueError("A_obs must be (n_obs, dim, dim) and b_obs (n_obs, dim)")
    n_obs, dim = b_obs.shape
    if probs is None:
        probs = np.full(n_obs, 1.0 / n_obs)
    probs = np.asarray(probs, dtype=float)
    A_bar = np.tensordot(probs, A_obs, axes=1)
    b_bar = probs @ b_obs
    sym = 0.5 * (A_bar + A_bar.T)
    mu = float(np.linalg.eigvalsh(sym).min())
    if mu <= 0:
        raise InvariantViolation("mean matrix must be positive definite")
    theta_star = np.linalg.solve(A_bar, b_bar)
    L = max(1.0, float(max(np.linalg.norm(A, 2) for A in A_obs)))
    sigma = max(
        1.0,
        float(np.linalg.norm(theta_star)),
        float(max(np.linalg.norm(b) for b in b_obs)) / L,
    )
    problem = LinearSAProblem(
        chain=_iid_chain(probs),
        A_obs=A_obs,
        b_obs=b_obs,
        theta_star=theta_star,
        mu=mu,
        L=L,
        sigma=sigma,
        seed=seed,
    )
    if validate:
        validate_problem(problem, seed=0, n_theta=200)
    return problem


def build_linear_sa_problem(dim: int, seed, n_obs: int = 4) -> LinearSAProblem:
    """Random strongly monotone linear instance with a small observation set."""
    if dim < 1 or not 1 <= n_obs <= 5:
        raise ValueError("dim must be >= 1 and n_obs in 1..5")
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    eigs = rng.uniform(0.5, 1.5, size=dim)
    A_bar = basis @ np.diag(eigs) @ basis.T
    perturb = rng.standard_normal((n_obs, dim, dim)) * 0.2
    perturb -= perturb.mean(axis=0)
    A_obs = A_bar[None, :, :] + perturb
    b_bar = rng.standard_normal(dim)
    b_noise = rng.standard_normal((n_obs, dim)) * 0.5
    b_noise -= b_noise.mean(axis=0)
    b_obs = b_bar[None, :] + b_noise
    return linear_sa_from_tables(A_obs, b_obs, seed=seed)


def zero_noise_linear_problem(a: float, b: float) -> LinearSAProblem:
    """1-D deterministic instance g(theta) = b - a*theta with theta* = b/a."""
    return linear_sa_from_tables(
        np.array([[[a]]]), np.array([[b]]), probs=np.array([1.0]), validate=False
    )


def save_problem(problem: TDProblem, path: str | Path) -> None:
    """Snapshot a TD instance to JSON; enough to rebuild it bit-for-bit."""
    payload = {
        "kind": "td",
        "gamma": problem.gamma,
        "seed": problem.seed,
        "transition": problem.chain.transition.tolist(),
        "features": problem.features.tolist(),
        "rewards": problem.rewards.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_problem(path: str | Path) -> TDProblem:
    payload = json.loads(Path(path).read_text())
    if payload.get("kind") != "td":
        raise ValueError(f"unsupported problem snapshot kind: {payload.get('kind')!r}")
    chain = FiniteMarkovChain.from_transition(np.asarray(payload["transition"]))
    return td_problem_from_parts(
        chain,
        np.asarray(payload["features"]),
        np.asarray(payload["rewards"]),
        float(payload["gamma"]),
        seed=payload.get("seed"),
    )
