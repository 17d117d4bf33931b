import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (
    STAY, SWAP, random_policy, series_q, series_state_action_visitation,
    series_state_visitation, series_value,
)
from npglab.envs import chain_mdp, gridworld_mdp, random_mdp, swap_stay_mdp
from npglab.mdp import (
    Mdp, exact_q, exact_v, mismatch_coefficient, optimal_policy, perf_diff,
    rollout_return, sample_visitation, state_action_visitation, state_visitation,
)


def one_state(reward, gamma):
    r = np.atleast_2d(reward).astype(float)
    return Mdp(np.ones((1, r.shape[1], 1)), r, gamma, [1.0])


class TestMdpValidation:
    def test_rejects_unnormalised_rows(self):
        P = np.full((2, 1, 2), 0.6)
        with pytest.raises(ValueError, match="transition"):
            Mdp(P, np.zeros((2, 1)), 0.5, [0.5, 0.5])

    def test_rejects_reward_out_of_range(self):
        with pytest.raises(ValueError, match="reward"):
            one_state([[1.5]], 0.5)

    def test_rejects_gamma_one(self):
        with pytest.raises(ValueError, match="gamma"):
            one_state([[1.0]], 1.0)

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError, match="mu"):
            Mdp(np.ones((1, 1, 1)), [[0.0]], 0.5, [0.9])

    def test_arrays_are_read_only(self, swap_stay):
        with pytest.raises(ValueError):
            swap_stay.reward[0, 0] = 1.0

    def test_json_round_trip(self, small_mdp, tmp_path):
        path = tmp_path / "mdp.json"
        small_mdp.save(path)
        back = Mdp.load(path)
        np.testing.assert_array_equal(back.transition, small_mdp.transition)
        np.testing.assert_array_equal(back.reward, small_mdp.reward)
        np.testing.assert_array_equal(back.start_dist, small_mdp.start_dist)
        assert back.gamma == small_mdp.gamma

    def test_from_dict_names_missing_field(self, small_mdp):
        doc = small_mdp.to_dict()
        del doc["gamma"]
        with pytest.raises(ValueError, match="gamma"):
            Mdp.from_dict(doc)


class TestValues:
    def test_geometric_series(self):
        assert exact_v(one_state([[1.0]], 0.5), np.ones((1, 1)))[0] == pytest.approx(2.0, abs=1e-14)
        assert exact_q(one_state([[1.0]], 0.5), np.ones((1, 1)))[0, 0] == pytest.approx(2.0, abs=1e-14)

    def test_zero_reward(self, rng):
        m = random_mdp(4, 3, 0.9, rng)
        m0 = Mdp(m.transition, np.zeros((4, 3)), m.gamma, m.start_dist)
        pi = random_policy(rng, 4, 3)
        np.testing.assert_allclose(exact_v(m0, pi), 0.0, atol=1e-15)
        np.testing.assert_allclose(exact_q(m0, pi), 0.0, atol=1e-15)

    def test_swap_stay_always_stay(self, swap_stay):
        oracle = series_value(swap_stay, STAY, n_terms=100)
        np.testing.assert_allclose(oracle, [0.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(exact_v(swap_stay, STAY), [0.0, 2.0], atol=1e-12)

    def test_swap_stay_q(self, swap_stay):
        oracle = series_q(swap_stay, STAY, n_terms=100)
        assert oracle[0, 1] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(exact_q(swap_stay, STAY), oracle, atol=1e-12)

    def test_matches_series_on_random_mdp(self, rng):
        m = random_mdp(6, 3, 0.8, rng)
        pi = random_policy(rng, 6, 3)
        np.testing.assert_allclose(exact_v(m, pi), series_value(m, pi, 300), atol=1e-12)
        np.testing.assert_allclose(exact_q(m, pi), series_q(m, pi, 300), atol=1e-12)


class TestVisitation:
    def test_single_state(self):
        m = one_state([[0.3, 0.7]], 0.9)
        np.testing.assert_allclose(state_visitation(m, [[0.5, 0.5]], [1.0]), [1.0])

    def test_gamma_zero_returns_start(self, rng):
        m = random_mdp(4, 2, 0.0, rng)
        start = rng.dirichlet(np.ones(4))
        np.testing.assert_allclose(state_visitation(m, random_policy(rng, 4, 2), start), start, atol=1e-15)

    def test_swap_stay_always_swap(self, swap_stay):
        oracle = series_state_visitation(swap_stay, SWAP, [1.0, 0.0], n_terms=100)
        np.testing.assert_allclose(oracle, [2 / 3, 1 / 3], atol=1e-12)
        np.testing.assert_allclose(state_visitation(swap_stay, SWAP, [1.0, 0.0]), oracle, atol=1e-12)

    def test_state_action_one_state(self):
        m = one_state([[0.0, 0.0]], 0.5)
        rho = np.array([[1.0, 0.0]])
        pi = np.array([[0.5, 0.5]])
        oracle = series_state_action_visitation(m, pi, rho)
        np.testing.assert_allclose(oracle, [[0.75, 0.25]], atol=1e-12)
        np.testing.assert_allclose(state_action_visitation(m, pi, rho), oracle, atol=1e-12)

    def test_state_action_gamma_zero(self, rng):
        m = random_mdp(3, 2, 0.0, rng)
        rho = rng.dirichlet(np.ones(6)).reshape(3, 2)
        np.testing.assert_allclose(state_action_visitation(m, random_policy(rng, 3, 2), rho), rho)

    @pytest.mark.parametrize("seed", range(5))
    def test_series_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(5, 3, 0.9, rng)
        pi = random_policy(rng, 5, 3)
        rho = rng.dirichlet(np.ones(15)).reshape(5, 3)
        d = state_visitation(m, pi, m.start_dist)
        # 0.9^400 < 1e-18: the tail is negligible
        np.testing.assert_allclose(d, series_state_visitation(m, pi, m.start_dist, 400), atol=1e-10)
        np.testing.assert_allclose(state_action_visitation(m, pi, rho),
                                   series_state_action_visitation(m, pi, rho, 400), atol=1e-10)
        assert d.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_occupancy_dominates_scaled_rho(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(5, 3, float(rng.uniform(0, 0.99)), rng)
        rho = rng.dirichlet(np.ones(15)).reshape(5, 3)
        d = state_action_visitation(m, random_policy(rng, 5, 3), rho)
        assert np.all(d >= (1 - m.gamma) * rho - 1e-15)


class TestOptimalPolicy:
    def test_zero_reward(self, rng):
        m = random_mdp(4, 3, 0.9, rng)
        m0 = Mdp(m.transition, np.zeros((4, 3)), m.gamma, m.start_dist)
        _, v = optimal_policy(m0)
        np.testing.assert_allclose(v, 0.0)

    def test_swap_stay_by_enumeration(self, swap_stay):
        best = None
        for acts in itertools.product(range(2), repeat=2):
            pi = np.eye(2)[list(acts)]
            v = exact_v(swap_stay, pi)
            if best is None or np.all(v >= best[1] - 1e-12) and np.any(v > best[1] + 1e-12):
                best = (acts, v)
        assert best[0] == (1, 0)
        np.testing.assert_allclose(best[1], [1.0, 2.0], atol=1e-12)
        pi, v = optimal_policy(swap_stay)
        np.testing.assert_array_equal(pi, np.eye(2)[[1, 0]])
        np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-12)

    def test_single_state(self):
        m = one_state([[0.2, 0.9, 0.4]], 0.75)
        _, v = optimal_policy(m)
        assert v[0] == pytest.approx(0.9 / 0.25, abs=1e-12)

    def test_gamma_zero_is_greedy_on_reward(self, rng):
        m = random_mdp(4, 3, 0.0, rng)
        pi, v = optimal_policy(m)
        np.testing.assert_allclose(v, m.reward.max(axis=1))

    @pytest.mark.parametrize("seed", range(5))
    def test_dominates_random_policies(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(6, 4, 0.95, rng)
        tol = 1e-8
        pi, v = optimal_policy(m, tol)
        assert np.abs(exact_v(m, pi) - v).max() <= tol
        for _ in range(50):
            assert np.all(v >= exact_v(m, random_policy(rng, 6, 4)) - tol)

    def test_enumeration_small_random(self, rng):
        m = random_mdp(3, 3, 0.9, rng)
        _, v = optimal_policy(m)
        best = max((exact_v(m, np.eye(3)[list(a)]) @ m.start_dist
                    for a in itertools.product(range(3), repeat=3)))
        assert v @ m.start_dist == pytest.approx(best, abs=1e-12)


class TestPerfDiff:
    def test_same_policy(self, small_mdp, rng):
        pi = random_policy(rng, 5, 3)
        assert perf_diff(small_mdp, pi, pi) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_value_difference(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(6, 4, 0.9, rng)
        pi, pi_bar = random_policy(rng, 6, 4), random_policy(rng, 6, 4)
        direct = (exact_v(m, pi) - exact_v(m, pi_bar)) @ m.start_dist
        assert abs(perf_diff(m, pi, pi_bar) - direct) <= 1e-9

    def test_swap_stay_optimal_vs_stay(self, swap_stay):
        pi_star, _ = optimal_policy(swap_stay)
        direct = (exact_v(swap_stay, pi_star) - exact_v(swap_stay, STAY)) @ swap_stay.start_dist
        assert direct == pytest.approx(1.0, abs=1e-12)
        assert perf_diff(swap_stay, pi_star, STAY) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 0.99),
           n_states=st.integers(1, 6), n_actions=st.integers(1, 4))
    def test_identity_property(self, seed, gamma, n_states, n_actions):
        rng = np.random.default_rng(seed)
        m = random_mdp(n_states, n_actions, gamma, rng, start_dist=rng.dirichlet(np.ones(n_states)))
        pi, pi_bar = random_policy(rng, n_states, n_actions), random_policy(rng, n_states, n_actions)
        direct = (exact_v(m, pi) - exact_v(m, pi_bar)) @ m.start_dist
        assert abs(perf_diff(m, pi, pi_bar) - direct) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 0.99))
def test_value_ranges(seed, gamma):
    rng = np.random.default_rng(seed)
    m = random_mdp(5, 3, gamma, rng)
    pi = random_policy(rng, 5, 3)
    hi = 1 / (1 - gamma) + 1e-12
    v, q = exact_v(m, pi), exact_q(m, pi)
    assert v.min() >= -1e-12 and v.max() <= hi
    assert q.min() >= -1e-12 and q.max() <= hi


class TestMismatch:
    def test_equal_distributions(self):
        assert mismatch_coefficient([0.3, 0.7], [0.3, 0.7], 0.9) == pytest.approx(10.0)

    def test_direct_formula(self):
        assert mismatch_coefficient([0.5, 0.5], [0.25, 0.75], 0.9) == pytest.approx(20.0)

    def test_missing_support(self):
        assert mismatch_coefficient([0.5, 0.5], [1.0, 0.0], 0.9) == math.inf

    def test_at_least_one(self, rng):
        for _ in range(20):
            d, mu = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            assert mismatch_coefficient(d, mu, 0.0) >= 1.0


class TestSampling:
    def test_gamma_zero_returns_rho_draw(self, rng):
        m = random_mdp(3, 2, 0.0, rng)
        rho = np.zeros((3, 2))
        rho[2, 1] = 1.0
        s, a = sample_visitation(m, random_policy(rng, 3, 2), rho, rng, size=100)
        assert np.all(s == 2) and np.all(a == 1)

    def test_single_state(self, rng):
        m = one_state([[0.5, 0.5]], 0.9)
        s, _ = sample_visitation(m, [[0.5, 0.5]], [[0.5, 0.5]], rng, size=1000)
        assert np.all(s == 0)

    def test_scalar_draw(self, small_mdp, rng):
        s, a = sample_visitation(small_mdp, random_policy(rng, 5, 3), np.full((5, 3), 1 / 15), rng)
        assert isinstance(s, int) and isinstance(a, int)

    @pytest.mark.slow
    def test_frequencies_match_occupancy(self):
        rng = np.random.default_rng(7)
        m = random_mdp(4, 3, 0.8, rng)
        pi = random_policy(rng, 4, 3)
        rho = rng.dirichlet(np.ones(12)).reshape(4, 3)
        n = 10**6
        s, a = sample_visitation(m, pi, rho, rng, size=n)
        freq = np.bincount(s * 3 + a, minlength=12) / n
        exact = state_action_visitation(m, pi, rho).reshape(-1)
        se = np.sqrt(exact * (1 - exact) / n)
        assert np.all(np.abs(freq - exact) <= 3 * se + 1e-12)

    def test_rollout_constant_reward(self, rng):
        m0 = random_mdp(4, 2, 0.9, rng)
        m = Mdp(m0.transition, np.ones((4, 2)), 0.9, m0.start_dist)
        out = rollout_return(m, random_policy(rng, 4, 2), 1, 0, 25, rng, size=10)
        np.testing.assert_allclose(out, (1 - 0.9**25) / 0.1, rtol=1e-14)

    def test_rollout_horizon_one(self, small_mdp, rng):
        ret = rollout_return(small_mdp, random_policy(rng, 5, 3), 2, 1, 1, rng)
        assert ret == small_mdp.reward[2, 1]

    def test_rollout_rejects_zero_horizon(self, small_mdp, rng):
        with pytest.raises(ValueError):
            rollout_return(small_mdp, random_policy(rng, 5, 3), 0, 0, 0, rng)

    @pytest.mark.slow
    def test_rollout_mean_matches_q(self):
        rng = np.random.default_rng(3)
        m = random_mdp(5, 3, 0.8, rng)
        pi = random_policy(rng, 5, 3)
        H = 40
        out = rollout_return(m, pi, 1, 2, H, rng, size=10**5)
        q = exact_q(m, pi)[1, 2]
        margin = m.gamma**H / (1 - m.gamma)
        se = out.std(ddof=1) / math.sqrt(out.size)
        assert abs(out.mean() - q) <= 3 * se + margin


def test_generators_are_valid():
    chain = chain_mdp(5, 0.9)
    grid = gridworld_mdp(3, 2, 0.9)
    assert chain.n_states == 5 and chain.n_actions == 2
    assert grid.n_states == 6 and grid.n_actions == 4
    pi, _ = optimal_policy(chain)
    assert np.all(pi[:, 1] == 1.0)
    assert swap_stay_mdp(0.3).gamma == 0.3
