"""Log-linear policies, KL divergences and the mirror-descent three-point identity."""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from npglab.features import FeatureMap

LOGIT_LIMIT = 1e300


class LogitOverflowError(OverflowError):
    """Logits left the representable range; the parameter vector ran away."""


@dataclass(frozen=True, eq=False)
class LogLinearPolicy:
    """``pi_theta(a|s) proportional to exp(theta^T phi(s, a))``."""

    theta: np.ndarray
    features: FeatureMap

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.shape != (self.features.dim,):
            raise ValueError(f"theta has length {theta.size}, features have dim {self.features.dim}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, features):
        return cls(np.zeros(features.dim), features)

    def logits(self):
        with np.errstate(over="ignore", invalid="ignore"):
            z = self.features.values(self.theta)
        if not np.all(np.isfinite(z)) or np.abs(z).max() > LOGIT_LIMIT:
            raise LogitOverflowError("logit magnitude exceeds 1e300")
        return z

    def log_probs(self):
        z = self.logits()
        return z - logsumexp(z, axis=1, keepdims=True)

    def probs(self):
        return to_tabular(self)

    def logit_spread(self):
        """Largest per-state gap ``max_a z(s, a) - min_a z(s, a)``."""
        z = self.logits()
        return float((z.max(axis=1) - z.min(axis=1)).max())

    def to_dict(self, feature_ref):
        return {"theta": self.theta.tolist(), "feature_ref": str(feature_ref)}

    def save(self, path, feature_ref):
        with open(path, "w") as f:
            json.dump(self.to_dict(feature_ref), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            doc = json.load(f)
        return cls(doc["theta"], FeatureMap.load(doc["feature_ref"]))


def to_tabular(p):
    """Softmax table of a log-linear policy, max-subtracted per state."""
    z = p.logits()
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def kl_rows(p, q):
    """Row-wise ``KL(p_s || q_s)`` for two tables; ``inf`` where ``q`` misses ``p``'s support."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    out = np.zeros(p.shape[0])
    pos = p > 0
    bad = (pos & (q <= 0)).any(axis=1)
    safe_q = np.where(pos & (q > 0), q, 1.0)
    terms = np.where(pos, p * (np.log(np.where(pos, p, 1.0)) - np.log(safe_q)), 0.0)
    out[:] = terms.sum(axis=1)
    out[bad] = math.inf
    return out


def kl(p, q):
    """``sum_a p(a) log(p(a) / q(a))`` with ``0 log 0 = 0``."""
    return float(kl_rows(p, q)[0])


def kl_star(pi_star, p, d_star_mu):
    """``E_{s ~ d*_mu} KL(pi*_s || pi_s)`` for a log-linear or tabular ``p``.

    For a log-linear ``p`` the divergence uses exact log-probabilities so it
    stays accurate when ``p`` is nearly deterministic.
    """
    pi_star = np.asarray(pi_star, dtype=np.float64)
    if isinstance(p, LogLinearPolicy):
        logq = p.log_probs()
        pos = pi_star > 0
        logp = np.log(np.where(pos, pi_star, 1.0))
        per_state = np.where(pos, pi_star * (logp - logq), 0.0).sum(axis=1)
    else:
        per_state = kl_rows(pi_star, p)
    return float(np.asarray(d_star_mu) @ per_state)


def npg_step(p, w_hat, eta):
    """``theta' = theta + eta * w_hat``."""
    with np.errstate(over="ignore", invalid="ignore"):
        theta = p.theta + eta * np.asarray(w_hat, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise LogitOverflowError("parameter vector is no longer finite")
    return LogLinearPolicy(theta, p.features)


def three_point_residual(p_t, p_next, q_used, eta, probe):
    """Largest per-state violation of the KL three-point identity

    ``KL(pi, pi^t) - KL(pi, pi^{t+1}) - KL(pi^{t+1}, pi^t) = -eta <Q, pi^{t+1} - pi>``

    for probe policy ``pi``.
    """
    probe = np.asarray(probe, dtype=np.float64)
    pn = to_tabular(p_next)
    lt, ln = p_t.log_probs(), p_next.log_probs()
    pos = probe > 0
    logp = np.log(np.where(pos, probe, 1.0))
    kl_probe_t = np.where(pos, probe * (logp - lt), 0.0).sum(axis=1)
    kl_probe_next = np.where(pos, probe * (logp - ln), 0.0).sum(axis=1)
    kl_next_t = (pn * (ln - lt)).sum(axis=1)
    inner = (np.asarray(q_used) * (pn - probe)).sum(axis=1)
    return float(np.abs(kl_probe_t - kl_probe_next - kl_next_t + eta * inner).max())
