"""Pure-Python twin of the compiled sampling loops.

Consumes ``rng.random()`` one double at a time in the same order as the
compiled kernels, so results are bit-identical across backends.
"""
import numpy as np


def _draw(cdf, n, u):
    i = 0
    while i < n - 1 and u >= cdf[i]:
        i += 1
    return i


def sample_pairs(rho_cdf, pi_cdf, p_cdf, gamma, n, rng):
    n_states, n_actions = pi_cdf.shape
    rho_cdf = rho_cdf.tolist()
    pi_cdf = pi_cdf.tolist()
    p_cdf = p_cdf.tolist()
    stop = 1.0 - gamma
    rand = rng.random
    states = np.empty(n, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx = _draw(rho_cdf, n_states * n_actions, rand())
        s, a = divmod(idx, n_actions)
        while rand() >= stop:
            s = _draw(p_cdf[s][a], n_states, rand())
            a = _draw(pi_cdf[s], n_actions, rand())
        states[i] = s
        actions[i] = a
    return states, actions


def rollouts(p_cdf, pi_cdf, reward, gamma, s0, a0, horizon, rng):
    n_states, n_actions = pi_cdf.shape
    pi_cdf = pi_cdf.tolist()
    p_cdf = p_cdf.tolist()
    reward = reward.tolist()
    rand = rng.random
    out = np.empty(len(s0), dtype=np.float64)
    for i in range(len(s0)):
        s = int(s0[i])
        a = int(a0[i])
        ret = reward[s][a]
        disc = 1.0
        for _ in range(1, horizon):
            s = _draw(p_cdf[s][a], n_states, rand())
            a = _draw(pi_cdf[s], n_actions, rand())
            disc *= gamma
            ret += disc * reward[s][a]
        out[i] = ret
    return out
