"""Feature maps, feature covariances and linear fits of Q-functions."""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from npglab.mdp import Mdp, exact_q

PINV_RCOND = 1e-10
RANGE_TOL = 1e-8
LAYOUT = "row index = s * n_actions + a"


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Features ``phi(s, a)`` stored as an ``(n_states * n_actions, dim)`` matrix."""

    phi: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[0] != self.n_states * self.n_actions:
            raise ValueError(
                f"phi: expected {self.n_states * self.n_actions} rows, got shape {phi.shape}"
            )
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi: entries must be finite")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self):
        return self.phi.shape[1]

    @property
    def tensor(self):
        """Features as an ``(n_states, n_actions, dim)`` view."""
        return self.phi.reshape(self.n_states, self.n_actions, self.dim)

    @property
    def norm_bound(self):
        """``B = max_{s,a} ||phi(s, a)||_2^2``."""
        return float((self.phi**2).sum(axis=1).max())

    def values(self, w):
        """``w^T phi(s, a)`` as an ``(n_states, n_actions)`` table."""
        return (self.phi @ w).reshape(self.n_states, self.n_actions)

    def to_dict(self):
        return {
            "dim": self.dim,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "layout": LAYOUT,
            "phi": self.phi.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        for key in ("dim", "n_states", "n_actions", "phi"):
            if key not in doc:
                raise ValueError(f"feature document is missing field {key!r}")
        fm = cls(np.asarray(doc["phi"], dtype=np.float64).reshape(-1, doc["dim"]),
                 doc["n_states"], doc["n_actions"])
        return fm

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def tabular_features(n_states, n_actions):
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be positive")
    return FeatureMap(np.eye(n_states * n_actions), n_states, n_actions)


def random_projection_features(n_states, n_actions, dim, rng):
    """Gaussian features ``phi(s, a) ~ N(0, I_dim / dim)``."""
    return FeatureMap(rng.normal(size=(n_states * n_actions, dim)) / math.sqrt(dim),
                      n_states, n_actions)


def linear_mdp_generate(dim, n_states, n_actions, rng, gamma=0.9, max_tries=100):
    """Random linear MDP and its feature map.

    Rows of ``phi`` are mixture weights (Dirichlet draws on the simplex),
    each latent component ``k`` carries a next-state distribution
    ``emb[k]`` and a reward ``v_r[k]`` in [0, 1]; then
    ``P(s'|s,a) = <phi(s,a), emb[:, s']>`` and ``r(s,a) = <v_r, phi(s,a)>``
    hold exactly.  With ``dim == n_states * n_actions`` the features are
    one-hot, giving an unconstrained tabular MDP.

    Retries until ``phi`` has full column rank so the best fit is unique.
    Returns ``(mdp, features, emb, v_r)``.
    """
    n = n_states * n_actions
    if dim < 1:
        raise ValueError("dim must be positive")
    for _ in range(max_tries):
        if dim == n:
            phi = np.eye(n)
        else:
            phi = rng.dirichlet(np.ones(dim), size=n)
        if np.linalg.matrix_rank(phi) < min(dim, n):
            continue
        emb = rng.dirichlet(np.ones(n_states), size=dim)
        v_r = rng.random(dim)
        P = (phi @ emb).reshape(n_states, n_actions, n_states)
        P /= P.sum(axis=2, keepdims=True)  # exact up to rounding already
        r = np.clip((phi @ v_r).reshape(n_states, n_actions), 0.0, 1.0)
        mdp = Mdp(P, r, gamma, np.full(n_states, 1.0 / n_states))
        return mdp, FeatureMap(phi, n_states, n_actions), emb, v_r
    raise RuntimeError(f"could not draw full-rank linear-MDP features in {max_tries} tries")


def covariance(fm, v):
    """``Sigma_v = sum_{s,a} v(s,a) phi(s,a) phi(s,a)^T``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    sigma = fm.phi.T @ (v[:, None] * fm.phi)
    return 0.5 * (sigma + sigma.T)


def _range_basis(sigma):
    lam, U = linalg.eigh(sigma)
    top = max(lam.max(), 0.0)
    keep = lam > PINV_RCOND * top if top > 0 else np.zeros_like(lam, dtype=bool)
    return lam[keep], U[:, keep]


def relative_condition_number(num, den):
    """``sup_w (w^T num w) / (w^T den w)`` as a generalized eigenvalue.

    Returns ``inf`` when ``range(num)`` is not contained in ``range(den)``,
    i.e. some direction has positive numerator and zero denominator.
    """
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    scale = max(np.abs(num).max(), 1e-300)
    lam, U = _range_basis(den)
    proj = U @ U.T
    outside = num - proj @ num @ proj
    if np.abs(outside).max() > RANGE_TOL * max(1.0, scale):
        return math.inf
    if lam.size == 0:
        return 0.0
    whiten = U / np.sqrt(lam)
    m = whiten.T @ num @ whiten
    return float(linalg.eigvalsh(0.5 * (m + m.T)).max())


def kappa_bound_crude(fm, rho):
    """``B / sigma_min(Sigma_rho)``; ``inf`` when ``Sigma_rho`` is singular."""
    sigma = covariance(fm, rho)
    lam = linalg.eigvalsh(sigma)
    if lam.min() <= PINV_RCOND * max(lam.max(), 0.0) or lam.max() <= 0:
        return math.inf
    return fm.norm_bound / float(lam.min())


def fit_loss(q, fm, w, v):
    """``L = E_{(s,a) ~ v} (Q(s,a) - w^T phi(s,a))^2``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    resid = np.asarray(q, dtype=np.float64).reshape(-1) - fm.phi @ w
    return float(v @ resid**2)


def fit_q(q, fm, v):
    """Weighted least-squares fit of a Q table; minimum-norm when degenerate."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    root = np.sqrt(np.clip(v, 0.0, None))
    X = root[:, None] * fm.phi
    y = root * np.asarray(q, dtype=np.float64).reshape(-1)
    w = np.linalg.pinv(X, rcond=PINV_RCOND) @ y
    return w, fit_loss(q, fm, w, v)


def best_fit(mdp, pi, fm, v):
    """Weights minimising ``E_v (Q^pi - w^T phi)^2`` and the loss they achieve."""
    return fit_q(exact_q(mdp, pi), fm, v)


def bias_error(mdp, pi, fm, fit_dist, eval_dist):
    """Fit on ``fit_dist`` and report the loss under ``eval_dist``."""
    q = exact_q(mdp, pi)
    w, _ = fit_q(q, fm, fit_dist)
    return fit_loss(q, fm, w, eval_dist)
