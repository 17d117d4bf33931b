"""Backend selection for the Monte-Carlo sampling loops.

The compiled extension is used when it imports; set ``NPGLAB_PURE_PYTHON=1``
to force the pure-Python fallback.  Both backends share one contract:

``sample_pairs(rho_cdf, pi_cdf, p_cdf, gamma, n, rng) -> (states, actions)``
``rollouts(p_cdf, pi_cdf, reward, gamma, s0, a0, horizon, rng) -> returns``

where the ``*_cdf`` arrays come from :func:`cdf`.
"""
import os

import numpy as np

from npglab import _kernels_py as python_backend

try:
    from npglab import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("NPGLAB_PURE_PYTHON"):
    _impl = compiled_backend
    BACKEND = "compiled"
else:
    _impl = python_backend
    BACKEND = "python"


def cdf(probs):
    """Cumulative sums along the last axis, pinned to exactly 1.0 from the
    last positive entry onward so a uniform in [0, 1) never selects a
    zero-probability outcome."""
    probs = np.asarray(probs, dtype=np.float64)
    c = np.cumsum(probs, axis=-1)
    positive = probs > 0
    n = probs.shape[-1]
    last = n - 1 - np.argmax(positive[..., ::-1], axis=-1)
    mask = np.arange(n) >= last[..., None]
    c[mask] = 1.0
    return np.ascontiguousarray(c)


def sample_pairs(rho_cdf, pi_cdf, p_cdf, gamma, n, rng, backend=None):
    impl = _impl if backend is None else backend
    return impl.sample_pairs(rho_cdf, pi_cdf, p_cdf, float(gamma), int(n), rng)


def rollouts(p_cdf, pi_cdf, reward, gamma, s0, a0, horizon, rng, backend=None):
    impl = _impl if backend is None else backend
    s0 = np.ascontiguousarray(s0, dtype=np.int64)
    a0 = np.ascontiguousarray(a0, dtype=np.int64)
    reward = np.ascontiguousarray(reward, dtype=np.float64)
    return impl.rollouts(p_cdf, pi_cdf, reward, float(gamma), s0, a0, int(horizon), rng)
