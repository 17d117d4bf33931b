"""Verification harness: identities and lemma checks over one configured run."""
import math
from dataclasses import dataclass

import numpy as np

from npglab.mdp import exact_v, perf_diff
from npglab.solver import (
    LEMMA1_TOL, LEMMA2_INNER_TOL, LEMMA2_VALUE_TOL, POTENTIAL_TOL, THREE_POINT_TOL,
    recursion_bound,
)


@dataclass
class Check:
    name: str
    asserted: bool
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    @property
    def status(self):
        if self.passed:
            return "PASS"
        return "FAIL" if self.asserted else "WARN"


def perf_diff_check(mdp, rng, n_pairs=20, tol=1e-9):
    worst = 0.0
    for _ in range(n_pairs):
        pi = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        pi_bar = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        direct = (exact_v(mdp, pi) - exact_v(mdp, pi_bar)) @ mdp.start_dist
        worst = max(worst, abs(perf_diff(mdp, pi, pi_bar) - direct))
    return Check("perf_diff_identity", True, worst <= tol, worst, tol, f"{n_pairs} random policy pairs")


def recursion_check(rng, n=1000, tol=1e-12):
    """Iterate ``a_{j+1} = alpha a_j + b`` and compare with the closed-form bound."""
    worst = 0.0
    for _ in range(n):
        alpha = rng.uniform(1e-3, 1 - 1e-3)
        b = rng.uniform(1e-6, 1.0)
        a0 = rng.uniform(0.0, 10.0)
        k = int(rng.integers(0, 101))
        a = a0
        for _ in range(k):
            a = alpha * a + b
        bound = recursion_bound(alpha, b, a0, k)
        scale = max(1.0, bound)
        # equality sequences sit exactly b alpha^k / (1 - alpha) below the bound
        gap = abs((bound - a) - b * alpha**k / (1 - alpha)) / scale
        excess = max(0.0, (a - bound) / scale)
        worst = max(worst, gap, excess)
    return Check("recursion_bound", True, worst <= tol, worst, tol, f"{n} random (alpha, b, a0, k)")


def run_checks(result, tabular, exact_oracle, schedule, nu_mu):
    """Turn the per-step diagnostics of a verified run into pass/fail checks."""
    steps = result.checks
    out = []

    def worst(key, sign=1.0):
        return max((sign * c[key] for c in steps), default=0.0)

    tp = max(worst("three_point_star"), worst("three_point_next"))
    out.append(Check("three_point_identity", tabular and exact_oracle, tp <= THREE_POINT_TOL, tp,
                     THREE_POINT_TOL, "probes pi* and pi^{t+1}, estimated Q"))

    l1 = max((max(c["lemma1_next"], c["lemma1_star"]) - c["tau"] for c in steps), default=0.0)
    out.append(Check("lemma1_error_bound", True, l1 <= LEMMA1_TOL, l1, LEMMA1_TOL,
                     "max over steps of |E<Q - Q^, pi^t - pi>| - tau_t"))

    l2i = worst("lemma2_inner_min", -1.0)
    out.append(Check("lemma2_inner_product", True, l2i <= LEMMA2_INNER_TOL, l2i, LEMMA2_INNER_TOL,
                     "max over steps/states of -<Q^_s, pi^{t+1}_s - pi^t_s>"))

    l2ii = max((c["lemma2_dv_floor"] - c["lemma2_dv"] for c in steps), default=0.0)
    out.append(Check("lemma2_value_step", True, l2ii <= LEMMA2_VALUE_TOL, l2ii, LEMMA2_VALUE_TOL,
                     "max over steps of -tau_t/(1-gamma) - (V^{t+1} - V^t)"))

    geometric = schedule.kind == "geometric"
    finite_nu = 1 < nu_mu < math.inf
    pot = max((c["potential_next"] - c["potential_rhs"] for c in steps
               if math.isfinite(c["potential_rhs"])), default=0.0)
    out.append(Check("potential_contraction", geometric and exact_oracle and finite_nu,
                     pot <= POTENTIAL_TOL, pot, POTENTIAL_TOL,
                     "P_{t+1} - (1 - 1/nu) P_t - 2 tau_t/(1-gamma)"))

    recs = result.records
    # relative to eta_t nu, since eta grows geometrically
    law = max(((recs[t].eta * nu_mu - recs[t + 1].eta * (nu_mu - 1)) / max(1.0, recs[t].eta * nu_mu)
               for t in range(len(recs) - 1)), default=0.0) if finite_nu else 0.0
    out.append(Check("schedule_law", geometric, law <= 1e-12, law, 1e-12,
                     "(eta_t nu - eta_{t+1} (nu - 1)) / max(1, eta_t nu)"))

    dom = max((r.delta - r.bound for r in recs), default=0.0)
    out.append(Check("theorem_domination", geometric, dom <= 1e-8, dom, 1e-8,
                     "Delta_t - bound_t with measured error levels"))
    return out


def format_table(checks):
    lines = [f"{'check':<24} {'status':<6} {'worst':>12} {'tol':>9}  detail"]
    for c in checks:
        lines.append(f"{c.name:<24} {c.status:<6} {c.worst:>12.3e} {c.tol:>9.1e}  {c.detail}")
    return "\n".join(lines)
