import numpy as np
import pytest

from npglab.envs import random_mdp, swap_stay_mdp


def series_state_dists(mdp, pi, start, n_terms):
    """State marginals P(s_t = .) for t < n_terms by repeated propagation."""
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    dist = np.asarray(start, dtype=float)
    out = []
    for _ in range(n_terms):
        out.append(dist)
        dist = dist @ P_pi
    return out


def series_value(mdp, pi, n_terms=200):
    """Truncated sum_t gamma^t E r_t from every start state."""
    r_pi = (pi * mdp.reward).sum(axis=1)
    v = np.zeros(mdp.n_states)
    for s in range(mdp.n_states):
        e = np.zeros(mdp.n_states)
        e[s] = 1.0
        for t, d in enumerate(series_state_dists(mdp, pi, e, n_terms)):
            v[s] += mdp.gamma**t * d @ r_pi
    return v


def series_q(mdp, pi, n_terms=200):
    q = np.zeros((mdp.n_states, mdp.n_actions))
    r_pi = (pi * mdp.reward).sum(axis=1)
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            total = mdp.reward[s, a]
            nxt = mdp.transition[s, a]
            for t, d in enumerate(series_state_dists(mdp, pi, nxt, n_terms - 1), start=1):
                total += mdp.gamma**t * d @ r_pi
            q[s, a] = total
    return q


def series_state_visitation(mdp, pi, start, n_terms=200):
    g = mdp.gamma
    return sum((1 - g) * g**t * d for t, d in enumerate(series_state_dists(mdp, pi, start, n_terms)))


def series_state_action_visitation(mdp, pi, rho, n_terms=200):
    """Occupancy summed term by term: t = 0 uses rho itself, t >= 1 uses pi."""
    g = mdp.gamma
    out = (1 - g) * rho
    s1 = np.einsum("sa,sat->t", rho, mdp.transition)
    for t, d in enumerate(series_state_dists(mdp, pi, s1, n_terms - 1), start=1):
        out = out + (1 - g) * g**t * d[:, None] * pi
    return out


def random_policy(rng, n_states, n_actions):
    return rng.dirichlet(np.ones(n_actions), size=n_states)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def swap_stay():
    return swap_stay_mdp(0.5)


@pytest.fixture
def small_mdp(rng):
    return random_mdp(5, 3, 0.9, rng)


STAY = np.array([[1.0, 0.0], [1.0, 0.0]])
SWAP = np.array([[0.0, 1.0], [0.0, 1.0]])


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
