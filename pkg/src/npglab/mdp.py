"""Exact machinery for finite discounted MDPs.

Policies are plain ``(n_states, n_actions)`` arrays of action probabilities;
state distributions are length-``n_states`` vectors and state-action
distributions are ``(n_states, n_actions)`` arrays.  Every quantity here is
computed by dense linear solves, so it serves as ground truth for the
approximate algorithms built on top.
"""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from npglab import kernels

PROB_ATOL = 1e-12
RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    """A linear solve came back with a residual above ``RESIDUAL_TOL``."""


def _frozen(x):
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP ``(S, A, P, r, gamma, mu)``.

    ``transition[s, a, s']`` is ``P(s' | s, a)``, ``reward[s, a]`` lies in
    [0, 1] and ``start_dist`` is the start-state distribution ``mu``.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    start_dist: np.ndarray

    def __post_init__(self):
        P = _frozen(self.transition)
        r = _frozen(self.reward)
        mu = _frozen(self.start_dist)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "start_dist", mu)
        object.__setattr__(self, "gamma", float(self.gamma))
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError(f"transition: expected shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise ValueError(f"reward: expected shape {P.shape[:2]}, got {r.shape}")
        if mu.shape != (P.shape[0],):
            raise ValueError(f"mu: expected shape ({P.shape[0]},), got {mu.shape}")
        if not np.all(np.isfinite(P)) or P.min() < 0:
            raise ValueError("transition: entries must be finite and nonnegative")
        if np.abs(P.sum(axis=2) - 1.0).max() > PROB_ATOL:
            raise ValueError("transition: rows P[s, a, :] must sum to 1")
        if not np.all(np.isfinite(r)) or r.min() < 0 or r.max() > 1:
            raise ValueError("reward: entries must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma: must lie in [0, 1), got {self.gamma}")
        if mu.min() < 0 or abs(mu.sum() - 1.0) > PROB_ATOL:
            raise ValueError("mu: must be a probability vector")

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def to_dict(self):
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "mu": self.start_dist.tolist(),
            "reward": self.reward.tolist(),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        for key in ("n_states", "n_actions", "gamma", "mu", "reward", "transition"):
            if key not in doc:
                raise ValueError(f"MDP document is missing field {key!r}")
        mdp = cls(doc["transition"], doc["reward"], doc["gamma"], doc["mu"])
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise ValueError("n_states/n_actions disagree with the array shapes")
        return mdp

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def check_policy(mdp, pi):
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.shape} does not match MDP")
    if pi.min() < 0 or np.abs(pi.sum(axis=1) - 1.0).max() > PROB_ATOL:
        raise ValueError("policy rows must be probability vectors")
    return pi


def _solve(A, b):
    x = linalg.lu_solve(linalg.lu_factor(A), b)
    resid = np.abs(A @ x - b).max()
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise SolverError(f"linear solve residual {resid:.3e}")
    return x


def induced_chain(mdp, pi):
    """State-to-state kernel ``P_pi`` and expected reward ``r_pi`` under ``pi``."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    return P_pi, r_pi


def exact_v(mdp, pi):
    pi = check_policy(mdp, pi)
    P_pi, r_pi = induced_chain(mdp, pi)
    return _solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


def q_from_v(mdp, v):
    return mdp.reward + mdp.gamma * mdp.transition @ v


def exact_q(mdp, pi):
    return q_from_v(mdp, exact_v(mdp, pi))


def state_visitation(mdp, pi, start):
    """Discounted state occupancy ``(1-gamma) sum_t gamma^t P(s_t = s)`` with ``s_0 ~ start``."""
    pi = check_policy(mdp, pi)
    P_pi, _ = induced_chain(mdp, pi)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    d = _solve(A, (1.0 - mdp.gamma) * np.asarray(start, dtype=np.float64))
    return np.clip(d, 0.0, None)


def state_action_visitation(mdp, pi, rho):
    """Discounted state-action occupancy with ``(s_0, a_0) ~ rho``.

    The first action comes from ``rho``; later actions from ``pi``.  Writing
    ``nu`` for the law of ``s_1``, the occupancy is
    ``(1-gamma) rho + gamma d_nu(s) pi(a|s)``.
    """
    pi = check_policy(mdp, pi)
    rho = np.asarray(rho, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    nu = np.einsum("sa,sat->t", rho, mdp.transition)
    d_next = state_visitation(mdp, pi, nu)
    return (1.0 - mdp.gamma) * rho + mdp.gamma * d_next[:, None] * pi


def greedy(q, atol=0.0):
    """Deterministic greedy policy; ties (within ``atol``) go to the lowest action index."""
    best = q.max(axis=1, keepdims=True)
    a = np.argmax(q >= best - atol, axis=1)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), a] = 1.0
    return pi


def optimal_policy(mdp, tol=1e-10):
    """Optimal deterministic policy and its value function.

    Runs value iteration until successive iterates differ by at most
    ``tol (1-gamma) / (2 gamma)`` in sup-norm, extracts the greedy policy,
    then polishes with exact policy-iteration steps (switching an action
    only on a strict improvement) so the returned ``V*`` is exact to solve
    precision.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(mdp.n_states)
    if mdp.gamma > 0:
        stop = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma)
        while True:
            v_new = q_from_v(mdp, v).max(axis=1)
            diff = np.abs(v_new - v).max()
            v = v_new
            if diff <= stop:
                break
    pi = greedy(q_from_v(mdp, v))
    for _ in range(10 * mdp.n_states * mdp.n_actions + 10):
        v = exact_v(mdp, pi)
        q = q_from_v(mdp, v)
        current = q[np.arange(mdp.n_states), pi.argmax(axis=1)]
        slack = 1e-12 * max(1.0, np.abs(q).max())
        better = q.max(axis=1) > current + slack
        if not better.any():
            break
        for s in np.flatnonzero(better):
            pi[s] = 0.0
            pi[s, q[s].argmax()] = 1.0
    return pi, v


def perf_diff(mdp, pi, pi_bar):
    """Right-hand side of the performance difference identity.

    Returns ``1/(1-gamma) E_{s ~ d_mu^{pi_bar}} sum_a Q^pi(s,a)(pi - pi_bar)(a|s)``,
    which equals ``V^pi(mu) - V^{pi_bar}(mu)``.
    """
    q = exact_q(mdp, pi)
    d = state_visitation(mdp, pi_bar, mdp.start_dist)
    return float(d @ np.einsum("sa,sa->s", q, pi - pi_bar)) / (1.0 - mdp.gamma)


def mismatch_coefficient(d_star, mu, gamma):
    """``(1/(1-gamma)) max_s d*(s)/mu(s)``; ``inf`` when ``mu`` misses the support of ``d*``."""
    d_star = np.asarray(d_star, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    support = d_star > 0
    if np.any(mu[support] <= 0):
        return math.inf
    return float((d_star[support] / mu[support]).max()) / (1.0 - gamma)


def sample_visitation(mdp, pi, rho, rng, size=None):
    """Sample ``(s, a)`` from the discounted state-action occupancy.

    Draws ``(s_0, a_0) ~ rho`` and follows ``pi``, stopping each step with
    probability ``1 - gamma``.  With ``size`` given, returns two index arrays.
    """
    pi = check_policy(mdp, pi)
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    n = 1 if size is None else int(size)
    s, a = kernels.sample_pairs(
        kernels.cdf(rho), kernels.cdf(pi), kernels.cdf(mdp.transition), mdp.gamma, n, rng
    )
    if size is None:
        return int(s[0]), int(a[0])
    return s, a


def rollout_return(mdp, pi, s0, a0, horizon, rng, size=None):
    """Discounted return of a ``horizon``-step rollout starting with ``(s0, a0)``.

    Unbiased for the truncated return; its bias against ``Q^pi(s0, a0)`` is at
    most ``gamma^horizon / (1 - gamma)``.  ``s0``/``a0`` may be arrays, or
    ``size`` repeats one start pair.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    pi = check_policy(mdp, pi)
    scalar = size is None and np.ndim(s0) == 0
    if size is not None:
        s0 = np.full(int(size), s0)
        a0 = np.full(int(size), a0)
    out = kernels.rollouts(
        kernels.cdf(mdp.transition), kernels.cdf(pi), mdp.reward, mdp.gamma,
        np.atleast_1d(s0), np.atleast_1d(a0), horizon, rng,
    )
    return float(out[0]) if scalar else out
