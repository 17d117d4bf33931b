"""NPG iteration loop with exact per-iteration diagnostics.

Each iteration ``t`` records the exact suboptimality ``Delta_t``, the
divergence ``KL*_t`` to the optimal policy, the bias and statistical errors
of the oracle output, the error level ``tau_t`` and, once the run is over,
the convergence bound evaluated with the run's measured error levels.
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from npglab.features import covariance, fit_loss, relative_condition_number
from npglab.mdp import exact_q, exact_v, mismatch_coefficient, optimal_policy, q_from_v, state_visitation
from npglab.oracle import Oracle, OracleConfig, measure_stat_error
from npglab.policy import LogitOverflowError, LogLinearPolicy, kl_star, npg_step, three_point_residual

CSV_HEADER = ["t", "eta", "v", "delta", "kl_star", "eps_bias_dstar", "eps_bias_next",
              "eps_stat", "tau", "bound", "potential", "overflow"]
LOGIT_CAP = 1e6  # keeps KL-identity roundoff (~cap * 1e-16) far below 1e-8
STOP_TOL = 1e-12
LEMMA2_INNER_TOL = 1e-10
LEMMA2_VALUE_TOL = 1e-9
LEMMA1_TOL = 1e-9
POTENTIAL_TOL = 1e-9
THREE_POINT_TOL = 1e-8


@dataclass(frozen=True)
class StepSchedule:
    kind: str
    eta0: float
    ratio: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "geometric"):
            raise ValueError(f"schedule.kind must be 'constant' or 'geometric', got {self.kind!r}")
        if not self.eta0 >= 0 or not math.isfinite(self.eta0):
            raise ValueError("schedule.eta0 must be a finite nonnegative number")
        if self.kind == "geometric" and not self.ratio >= 1:
            raise ValueError("geometric schedule needs ratio >= 1")
        if self.kind == "constant" and self.ratio != 1.0:
            raise ValueError("constant schedule has ratio 1")

    def eta(self, t):
        return self.eta0 * self.ratio**t


def geometric_schedule(nu_mu, eta0):
    """Step sizes growing by ``nu / (nu - 1)`` per iteration (the smallest
    ratio allowed by the convergence theorem)."""
    if not nu_mu > 1:
        raise ValueError(f"geometric schedule needs nu_mu > 1, got {nu_mu}")
    ratio = 1.0 if math.isinf(nu_mu) else nu_mu / (nu_mu - 1.0)
    return StepSchedule("geometric", eta0, ratio)


def constant_schedule(eta0):
    return StepSchedule("constant", eta0, 1.0)


def default_eta0(gamma, n_actions):
    """``(1 - gamma) / gamma * log |A|``, enough for a uniform initial policy."""
    if not 0 < gamma < 1:
        raise ValueError("default_eta0 needs gamma in (0, 1)")
    return (1.0 - gamma) / gamma * math.log(n_actions)


def theorem_bound(t, nu_mu, gamma, n_actions, kappa, eps_stat, eps_bias):
    """``(1 - 1/nu)^t 2/(1-gamma) + 2 nu sqrt(|A| kappa eps_stat / (1-gamma)^3)
    + 2 nu sqrt(|A| eps_bias) / (1-gamma)``."""
    rate = (1.0 - 1.0 / nu_mu) ** t * 2.0 / (1.0 - gamma)
    return rate + error_floor(nu_mu, gamma, n_actions, kappa, eps_stat, eps_bias)


def error_floor(nu_mu, gamma, n_actions, kappa, eps_stat, eps_bias):
    stat = 2.0 * nu_mu * math.sqrt(n_actions * kappa * eps_stat / (1.0 - gamma) ** 3) if eps_stat else 0.0
    bias = 2.0 * nu_mu * math.sqrt(n_actions * eps_bias) / (1.0 - gamma) if eps_bias else 0.0
    return stat + bias


def tau(n_actions, kappa, gamma, eps_stat, eps_bias):
    """``2 sqrt(|A| kappa eps_stat / (1-gamma)) + 2 sqrt(|A| eps_bias)``."""
    stat = 2.0 * math.sqrt(n_actions * kappa * eps_stat / (1.0 - gamma)) if eps_stat else 0.0
    return stat + 2.0 * math.sqrt(n_actions * eps_bias)


def recursion_bound(alpha, b, a0, k):
    """``alpha^k a0 + b / (1 - alpha)``: bounds any nonnegative sequence with
    ``a_{j+1} <= alpha a_j + b``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not b > 0:
        raise ValueError("b must be positive")
    if a0 < 0 or k < 0:
        raise ValueError("a0 and k must be nonnegative")
    return alpha**k * a0 + b / (1.0 - alpha)


def potential(record, nu_mu, gamma):
    """``Delta_t + KL*_t / ((1-gamma) eta_t (nu - 1))``."""
    if record.eta == 0:
        return math.inf if record.kl_star > 0 else record.delta
    return record.delta + record.kl_star / ((1.0 - gamma) * record.eta * (nu_mu - 1.0))


@dataclass
class IterateRecord:
    t: int
    eta: float
    v: float
    delta: float
    kl_star: float
    eps_bias_dstar: float
    eps_bias_next: float
    eps_stat: float
    tau: float
    bound: float = math.nan
    potential: float = math.nan
    overflow: bool = False
    kappa: float = math.nan

    def row(self):
        vals = [self.eta, self.v, self.delta, self.kl_star, self.eps_bias_dstar,
                self.eps_bias_next, self.eps_stat, self.tau, self.bound, self.potential]
        return [str(self.t)] + [f"{x:.17g}" for x in vals] + [str(int(self.overflow))]


@dataclass
class Problem:
    """Ground-truth quantities shared by every iteration of a run."""

    mdp: object
    features: object
    rho: np.ndarray
    pi_star: np.ndarray
    v_star: np.ndarray
    d_star_mu: np.ndarray
    nu_mu: float
    sigma_rho: np.ndarray
    kappa_dstar: float

    @property
    def d_star(self):
        return self.d_star_mu[:, None] * np.full(self.mdp.n_actions, 1.0 / self.mdp.n_actions)

    @property
    def v_star_mu(self):
        return float(self.mdp.start_dist @ self.v_star)


def prepare(mdp, fm, rho):
    rho = np.asarray(rho, dtype=np.float64).reshape(mdp.n_states, mdp.n_actions)
    if rho.min() < 0 or abs(rho.sum() - 1.0) > 1e-12:
        raise ValueError("rho must be a probability distribution over state-action pairs")
    if (fm.n_states, fm.n_actions) != (mdp.n_states, mdp.n_actions):
        raise ValueError("feature map sizes do not match the MDP")
    pi_star, v_star = optimal_policy(mdp)
    d_star_mu = state_visitation(mdp, pi_star, mdp.start_dist)
    nu = mismatch_coefficient(d_star_mu, mdp.start_dist, mdp.gamma)
    sigma_rho = covariance(fm, rho)
    uniform = np.full(mdp.n_actions, 1.0 / mdp.n_actions)
    kappa_dstar = relative_condition_number(covariance(fm, d_star_mu[:, None] * uniform), sigma_rho)
    return Problem(mdp, fm, rho, pi_star, v_star, d_star_mu, nu, sigma_rho, kappa_dstar)


def uniform_rho(mdp):
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / (mdp.n_states * mdp.n_actions))


@dataclass
class RunResult:
    records: list
    theta: np.ndarray
    nu_mu: float
    kappa: float
    eps_stat_max: float
    eps_bias_max: float
    n_actions: int
    gamma: float
    seed: int | None = None
    config: dict = field(default_factory=dict)
    converged: bool = False
    overflow: bool = False
    checks: list = field(default_factory=list)

    @property
    def deltas(self):
        return np.array([r.delta for r in self.records])

    @property
    def bounds(self):
        return np.array([r.bound for r in self.records])

    @property
    def floor(self):
        return error_floor(self.nu_mu, self.gamma, self.n_actions, self.kappa,
                           self.eps_stat_max, self.eps_bias_max)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow(r.row())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def _inner(q, diff):
    return (q * diff).sum(axis=1)


def run(mdp, fm, schedule, oracle=None, T=100, rho=None, rng=None, *, seed=None,
        nu_mu=None, nominal=None, verify=False, logit_cap=LOGIT_CAP, stop_tol=STOP_TOL,
        problem=None):
    """Run NPG from ``theta_0 = 0`` for ``T`` updates.

    ``nu_mu`` overrides the measured mismatch coefficient in the potential
    and contraction checks.  ``nominal`` may supply any of ``eps_stat``,
    ``eps_bias``, ``kappa``, ``nu_mu`` for the bound column instead of the
    measured values.  With ``verify`` set, per-step identity and lemma
    diagnostics are collected in ``RunResult.checks``.

    The run stops early once ``Delta_t < stop_tol`` (``converged``), or when
    the next update would push a per-state logit spread beyond
    ``logit_cap`` (``overflow``; the last record is flagged).
    """
    oracle = oracle or OracleConfig()
    if T < 0:
        raise ValueError("T must be nonnegative")
    rho = uniform_rho(mdp) if rho is None else rho
    rng = np.random.default_rng(seed) if rng is None else rng
    prob = problem or prepare(mdp, fm, rho)
    gamma, n_actions = mdp.gamma, mdp.n_actions
    mu = mdp.start_dist
    uniform = np.full(n_actions, 1.0 / n_actions)
    d_star = prob.d_star
    orc = Oracle(oracle, mdp, fm, prob.rho, rng)
    kappa_0 = relative_condition_number(covariance(fm, state_visitation(
        mdp, LogLinearPolicy.uniform(fm).probs(), mu)[:, None] * uniform), prob.sigma_rho)

    p = LogLinearPolicy.uniform(fm)
    pi = p.probs()
    records, steps = [], []
    converged = overflow = False
    for t in range(T + 1):
        v = exact_v(mdp, pi)
        q = q_from_v(mdp, v)
        v_mu = float(mu @ v)
        w, w_hat, sigma_t, _ = orc.estimate(p, pi, q)
        eta = schedule.eta(t)
        rec = IterateRecord(
            t=t, eta=eta, v=v_mu, delta=prob.v_star_mu - v_mu,
            kl_star=kl_star(prob.pi_star, p, prob.d_star_mu),
            eps_bias_dstar=fit_loss(q, fm, w, d_star), eps_bias_next=math.nan,
            eps_stat=measure_stat_error(w, w_hat, sigma_t), tau=math.nan,
        )
        records.append(rec)
        try:
            p_next = npg_step(p, w_hat, eta)
            pi_next = p_next.probs()
            spread = p_next.logit_spread()
        except LogitOverflowError:
            p_next, spread = None, math.inf
        if p_next is not None:
            d_next = state_visitation(mdp, pi_next, mu)
            rec.eps_bias_next = fit_loss(q, fm, w, d_next[:, None] * uniform)
            rec.kappa = max(prob.kappa_dstar, relative_condition_number(
                covariance(fm, d_next[:, None] * uniform), prob.sigma_rho))
            rec.tau = tau(n_actions, rec.kappa, gamma, rec.eps_stat,
                          max(rec.eps_bias_dstar, rec.eps_bias_next))
        if rec.delta < stop_tol:
            converged = True
            break
        if t == T:
            break
        if p_next is None or spread > logit_cap:
            rec.overflow = overflow = True
            break
        if verify:
            q_hat = fm.values(w_hat)
            steps.append(_step_checks(prob, t, eta, p, p_next, pi, pi_next, q, q_hat, d_next, rec.tau))
        p, pi = p_next, pi_next

    updates = records[:-1]
    eps_stat_max = max((r.eps_stat for r in updates), default=0.0)
    eps_bias_max = max((max(r.eps_bias_dstar, r.eps_bias_next) for r in updates), default=0.0)
    kappa = max([prob.kappa_dstar, kappa_0] + [r.kappa for r in updates])
    nominal = nominal or {}
    b_nu = nominal.get("nu_mu", prob.nu_mu)
    b_args = (gamma, n_actions, nominal.get("kappa", kappa),
              nominal.get("eps_stat", eps_stat_max), nominal.get("eps_bias", eps_bias_max))
    nu_pot = prob.nu_mu if nu_mu is None else nu_mu
    for r in records:
        r.bound = theorem_bound(r.t, b_nu, *b_args) if b_nu > 1 and math.isfinite(b_nu) else math.inf
        r.potential = potential(r, nu_pot, gamma) if nu_pot > 1 and math.isfinite(nu_pot) else math.nan

    if verify:
        _finish_checks(steps, records, nu_pot, gamma)
    return RunResult(records, p.theta.copy(), prob.nu_mu, kappa, eps_stat_max, eps_bias_max,
                     n_actions, gamma, seed=seed, converged=converged, overflow=overflow,
                     checks=steps)


def _lemma1_lhs(q, q_hat, pi_t, probe, v):
    return abs(float(v @ _inner(q - q_hat, pi_t - probe)))


def _step_checks(prob, t, eta, p, p_next, pi, pi_next, q, q_hat, d_next, tau_t):
    return {
        "t": t,
        "three_point_star": three_point_residual(p, p_next, q_hat, eta, prob.pi_star),
        "three_point_next": three_point_residual(p, p_next, q_hat, eta, pi_next),
        "lemma1_next": _lemma1_lhs(q, q_hat, pi, pi_next, d_next),
        "lemma1_star": _lemma1_lhs(q, q_hat, pi, prob.pi_star, prob.d_star_mu),
        "tau": tau_t,
        "lemma2_inner_min": float(_inner(q_hat, pi_next - pi).min()),
    }


def _finish_checks(steps, records, nu, gamma):
    alpha = 1.0 - 1.0 / nu if nu > 1 and math.isfinite(nu) else math.nan
    for c in steps:
        r0, r1 = records[c["t"]], records[c["t"] + 1]
        c["lemma2_dv"] = r1.v - r0.v
        c["lemma2_dv_floor"] = -c["tau"] / (1.0 - gamma)
        c["potential_next"] = r1.potential
        c["potential_rhs"] = alpha * r0.potential + 2.0 * c["tau"] / (1.0 - gamma)


def lemma1_check(mdp, p_t, p_next, pi_star, w_t, w_hat, fm, tau_val, tol=LEMMA1_TOL):
    """Exact Lemma-1 error terms for the probes ``(d^{t+1}_mu, pi^{t+1})`` and
    ``(d*_mu, pi*)`` against the bound ``tau_val``.

    ``w_t`` is the exact fit; it only enters the report through the
    approximation ``Q~ = w_t^T phi``, the bound itself is on ``Q - Q^``.
    """
    pi_t, pi_next = p_t.probs(), p_next.probs()
    q = exact_q(mdp, pi_t)
    q_hat = fm.values(w_hat)
    mu = mdp.start_dist
    d_next = state_visitation(mdp, pi_next, mu)
    d_star = state_visitation(mdp, pi_star, mu)
    next_lhs = _lemma1_lhs(q, q_hat, pi_t, pi_next, d_next)
    star_lhs = _lemma1_lhs(q, q_hat, pi_t, np.asarray(pi_star), d_star)
    approx_gap = float(np.abs(q - fm.values(w_t)).max())
    return {
        "next_lhs": next_lhs, "star_lhs": star_lhs, "tau": tau_val,
        "approx_gap_sup": approx_gap,
        "passed": next_lhs <= tau_val + tol and star_lhs <= tau_val + tol,
    }


def lemma2_check(p_t, p_next, w_hat, v_t, v_next, tau_val, gamma):
    """Both quasi-monotonicity claims for one update.

    (i) ``<Q^_s, pi^{t+1}_s - pi^t_s> >= 0`` for every state;
    (ii) ``V^{t+1}(mu) - V^t(mu) >= -tau / (1 - gamma)``.
    """
    fm = p_t.features
    inner = _inner(fm.values(w_hat), p_next.probs() - p_t.probs())
    bad = np.flatnonzero(inner < -LEMMA2_INNER_TOL).tolist()
    dv = v_next - v_t
    floor = -tau_val / (1.0 - gamma)
    return {
        "inner_min": float(inner.min()), "violating_states": bad,
        "dv": dv, "dv_floor": floor,
        "passed": not bad and dv >= floor - LEMMA2_VALUE_TOL,
    }
