"""Oracles producing the regression weights used by each NPG update.

Three regimes:

* ``exact`` - the best linear fit of ``Q^t`` under ``d^t_rho``, computed by
  linear solves.
* ``noisy`` - the exact fit plus a random perturbation whose squared
  ``Sigma_{d^t_rho}``-norm equals a prescribed statistical error.
* ``monte_carlo`` - ridge regression of sampled rollout returns on features,
  with state-action pairs drawn from ``d^t_rho``.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from npglab import kernels
from npglab.features import PINV_RCOND, covariance, fit_q
from npglab.mdp import exact_q, state_action_visitation

MODES = ("exact", "noisy", "monte_carlo")


class DegenerateCovarianceError(ValueError):
    """Noise with positive size was requested under a zero covariance."""


@dataclass(frozen=True)
class OracleConfig:
    mode: str = "exact"
    eps_stat: float = 0.0
    n_samples: int = 1000
    horizon: int | None = None
    ridge: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"oracle.mode must be one of {MODES}, got {self.mode!r}")
        if self.eps_stat < 0:
            raise ValueError("oracle.eps_stat must be nonnegative")
        if self.mode == "monte_carlo":
            if self.n_samples < 1:
                raise ValueError("oracle.n_samples must be positive")
            if self.horizon is not None and self.horizon < 1:
                raise ValueError("oracle.horizon must be at least 1")
            if self.ridge < 0:
                raise ValueError("oracle.ridge must be nonnegative")

    def to_dict(self):
        return asdict(self)


def default_horizon(gamma, eps_trunc=1e-3):
    """Smallest ``H`` with ``gamma^H / (1 - gamma) <= eps_trunc``."""
    if gamma == 0:
        return 1
    return max(1, math.ceil(math.log(eps_trunc * (1.0 - gamma)) / math.log(gamma)))


def oracle_exact(mdp, p_t, fm, rho):
    """Exact minimiser ``w_t`` of ``L(w, theta_t, d^t_rho)``."""
    pi = p_t.probs()
    d = state_action_visitation(mdp, pi, rho)
    w, _ = fit_q(exact_q(mdp, pi), fm, d)
    return w


def oracle_noisy(w_t, sigma, eps_stat, rng):
    """``w_t + delta`` with ``delta^T sigma delta == eps_stat``.

    ``delta`` is an isotropic Gaussian direction projected onto
    ``range(sigma)`` and rescaled.
    """
    w_t = np.asarray(w_t, dtype=np.float64)
    if eps_stat < 0:
        raise ValueError("eps_stat must be nonnegative")
    if eps_stat == 0:
        return w_t.copy()
    lam, U = np.linalg.eigh(sigma)
    keep = lam > PINV_RCOND * max(lam.max(), 0.0)
    if lam.max() <= 0 or not keep.any():
        raise DegenerateCovarianceError("covariance is zero; cannot inject positive error")
    U = U[:, keep]
    delta = U @ (U.T @ rng.normal(size=w_t.size))
    size = float(delta @ sigma @ delta)
    while size <= 0:  # measure-zero event
        delta = U @ (U.T @ rng.normal(size=w_t.size))
        size = float(delta @ sigma @ delta)
    return w_t + delta * math.sqrt(eps_stat / size)


def oracle_monte_carlo(mdp, p_t, fm, rho, n_samples, horizon, ridge, rng, return_info=False):
    """Ridge regression of truncated rollout returns on features.

    Samples ``n_samples`` pairs from ``d^t_rho`` with geometric stopping and
    labels each with one ``horizon``-step rollout.  The effective rank of the
    design matrix is reported in ``info`` when ``return_info`` is set.
    """
    if n_samples < fm.dim:
        raise ValueError(f"n_samples ({n_samples}) must be at least the feature dim ({fm.dim})")
    pi = p_t.probs()
    pi_cdf = kernels.cdf(pi)
    p_cdf = kernels.cdf(mdp.transition)
    rho_cdf = kernels.cdf(np.asarray(rho, dtype=np.float64).reshape(-1))
    s, a = kernels.sample_pairs(rho_cdf, pi_cdf, p_cdf, mdp.gamma, n_samples, rng)
    y = kernels.rollouts(p_cdf, pi_cdf, mdp.reward, mdp.gamma, s, a, horizon, rng)
    X = fm.phi[s * mdp.n_actions + a]
    gram = X.T @ X / n_samples
    w = np.linalg.solve(gram + ridge * np.eye(fm.dim), X.T @ y / n_samples) if ridge > 0 \
        else np.linalg.pinv(gram, rcond=PINV_RCOND, hermitian=True) @ (X.T @ y / n_samples)
    if return_info:
        return w, {"effective_rank": int(np.linalg.matrix_rank(X)), "n_samples": n_samples}
    return w


def measure_stat_error(w_t, w_hat, sigma):
    """``(w_t - w_hat)^T sigma (w_t - w_hat)``."""
    diff = np.asarray(w_t, dtype=np.float64) - np.asarray(w_hat, dtype=np.float64)
    return max(float(diff @ sigma @ diff), 0.0)


class Oracle:
    """Stateful wrapper used by the solver: one ``estimate`` call per iteration."""

    def __init__(self, config, mdp, fm, rho, rng):
        self.config = config
        self.mdp = mdp
        self.fm = fm
        self.rho = np.asarray(rho, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
        self.rng = rng
        self.horizon = config.horizon or default_horizon(mdp.gamma)

    def estimate(self, p_t, pi_t, q_t):
        """Return ``(w_t, w_hat, sigma_t, d_rho_t)`` for the current iterate."""
        d = state_action_visitation(self.mdp, pi_t, self.rho)
        w, _ = fit_q(q_t, self.fm, d)
        sigma = covariance(self.fm, d)
        mode = self.config.mode
        if mode == "exact":
            w_hat = w
        elif mode == "noisy":
            w_hat = oracle_noisy(w, sigma, self.config.eps_stat, self.rng)
        else:
            w_hat = oracle_monte_carlo(self.mdp, p_t, self.fm, self.rho, self.config.n_samples,
                                       self.horizon, self.config.ridge, self.rng)
        return w, w_hat, sigma, d


__all__ = [
    "OracleConfig", "Oracle", "DegenerateCovarianceError", "default_horizon",
    "oracle_exact", "oracle_noisy", "oracle_monte_carlo", "measure_stat_error",
]
