# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling loops.

Both entry points draw uniforms straight from the ``bitgen_t`` behind a
``numpy.random.Generator`` using ``next_double``, which is exactly what
``Generator.random()`` returns.  The pure-Python twin in ``_kernels_py``
consumes the stream in the same order, so the two backends produce
identical samples for identical generator states.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

cnp.import_array()


cdef inline Py_ssize_t _draw(const double* cdf, Py_ssize_t n, double u) noexcept nogil:
    cdef Py_ssize_t i = 0
    while i < n - 1 and u >= cdf[i]:
        i += 1
    return i


cdef bitgen_t* _bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("rng does not expose a BitGenerator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


def sample_pairs(const double[::1] rho_cdf, const double[:, ::1] pi_cdf,
                 const double[:, :, ::1] p_cdf, double gamma, Py_ssize_t n, rng):
    """Draw ``n`` state-action pairs from the discounted occupancy.

    Each draw starts at ``(s, a) ~ rho`` and then, with probability
    ``gamma`` per step, moves ``s' ~ P(.|s, a)``, ``a' ~ pi(.|s')``.
    """
    cdef Py_ssize_t n_states = pi_cdf.shape[0]
    cdef Py_ssize_t n_actions = pi_cdf.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] states = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] actions = np.empty(n, dtype=np.int64)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef double stop = 1.0 - gamma
    cdef Py_ssize_t i, idx, s, a
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            idx = _draw(&rho_cdf[0], n_states * n_actions, bg.next_double(bg.state))
            s = idx // n_actions
            a = idx % n_actions
            while bg.next_double(bg.state) >= stop:
                s = _draw(&p_cdf[s, a, 0], n_states, bg.next_double(bg.state))
                a = _draw(&pi_cdf[s, 0], n_actions, bg.next_double(bg.state))
            states[i] = s
            actions[i] = a
    return states, actions


def rollouts(const double[:, :, ::1] p_cdf, const double[:, ::1] pi_cdf,
             const double[:, ::1] reward, double gamma,
             const cnp.int64_t[::1] s0, const cnp.int64_t[::1] a0,
             Py_ssize_t horizon, rng):
    """Discounted returns of ``horizon``-step rollouts from each ``(s0[i], a0[i])``."""
    cdef Py_ssize_t n = s0.shape[0]
    cdef Py_ssize_t n_states = pi_cdf.shape[0]
    cdef Py_ssize_t n_actions = pi_cdf.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t i, k, s, a
    cdef double ret, disc
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            s = s0[i]
            a = a0[i]
            ret = reward[s, a]
            disc = 1.0
            for k in range(1, horizon):
                s = _draw(&p_cdf[s, a, 0], n_states, bg.next_double(bg.state))
                a = _draw(&pi_cdf[s, 0], n_actions, bg.next_double(bg.state))
                disc *= gamma
                ret += disc * reward[s, a]
            out[i] = ret
    return out
