"""Small MDP generators used by tests, benchmarks and the CLI."""
import numpy as np

from npglab.mdp import Mdp


def random_mdp(n_states, n_actions, gamma, rng, branching=None, start_dist=None):
    """Garnet-style random MDP.

    Each ``(s, a)`` transitions to ``branching`` distinct states (all states by
    default) with Dirichlet(1) weights; rewards are uniform on [0, 1].  The
    start distribution defaults to uniform.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be positive")
    b = n_states if branching is None else int(branching)
    if not 1 <= b <= n_states:
        raise ValueError("branching must lie in [1, n_states]")
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            nxt = rng.choice(n_states, size=b, replace=False)
            P[s, a, nxt] = rng.dirichlet(np.ones(b))
    P /= P.sum(axis=2, keepdims=True)
    r = rng.random((n_states, n_actions))
    mu = np.full(n_states, 1.0 / n_states) if start_dist is None else start_dist
    return Mdp(P, r, gamma, mu)


def chain_mdp(n_states, gamma, slip=0.1, start_dist=None):
    """Classic chain: action 0 moves left, action 1 moves right, each slipping
    to the opposite direction with probability ``slip``.  Reward 1 only for
    taking "right" at the right end."""
    if n_states < 2:
        raise ValueError("chain needs at least 2 states")
    P = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        left, right = max(s - 1, 0), min(s + 1, n_states - 1)
        P[s, 0, left] += 1.0 - slip
        P[s, 0, right] += slip
        P[s, 1, right] += 1.0 - slip
        P[s, 1, left] += slip
    r = np.zeros((n_states, 2))
    r[-1, 1] = 1.0
    mu = np.full(n_states, 1.0 / n_states) if start_dist is None else start_dist
    return Mdp(P, r, gamma, mu)


def gridworld_mdp(width, height, gamma, slip=0.1, start_dist=None):
    """Gridworld with actions up/down/left/right; moves fail to a uniformly
    random direction with probability ``slip``.  Reward 1 for any action taken
    in the top-right goal cell."""
    n = width * height
    moves = [(0, 1), (0, -1), (-1, 0), (1, 0)]

    def target(s, m):
        x, y = s % width, s // width
        dx, dy = moves[m]
        x = min(max(x + dx, 0), width - 1)
        y = min(max(y + dy, 0), height - 1)
        return y * width + x

    P = np.zeros((n, 4, n))
    for s in range(n):
        for a in range(4):
            P[s, a, target(s, a)] += 1.0 - slip
            for m in range(4):
                P[s, a, target(s, m)] += slip / 4
    r = np.zeros((n, 4))
    r[n - 1, :] = 1.0
    mu = np.full(n, 1.0 / n) if start_dist is None else start_dist
    return Mdp(P, r, gamma, mu)


def swap_stay_mdp(gamma, start_dist=(1.0, 0.0)):
    """Two states; action 0 stays, action 1 swaps.  Reward 1 in state 1."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    r = np.array([[0.0, 0.0], [1.0, 1.0]])
    return Mdp(P, r, gamma, start_dist)
