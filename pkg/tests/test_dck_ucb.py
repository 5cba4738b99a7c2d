import math

import numpy as np
import pytest

from kmaxbandits import dck_ucb
from kmaxbandits.discretize import ProbGrid, binary_reward, cdf_to_p, make_grid, p_to_q, q_to_p
from kmaxbandits.dck_ucb import (
    DckConfig, DckUcbPolicy, Lemma4Tracker, bonus, bonus_bias_diagnostics, bonus_from_counts,
    default_epsilon, lemma4_violation_rate, lemma5_sides, new_state, optimistic_grid,
    select_action, update,
)
from kmaxbandits.env_continuous import (
    ContinuousEnv, ValueIndexFeedback, builtin_arm, sample_outcome_table, steep_ramp_arm,
    value_index_feedback,
)
from kmaxbandits.errors import ConsistencyError, InputError
from kmaxbandits.instances import random_p_grid
from kmaxbandits.oracle import exact_oracle


def cfg(n=3, k=2, eps=0.25, lipschitz=1.0, horizon=100, **kw):
    return DckConfig(eps, lipschitz, horizon, n, k, **kw)


# --- default_epsilon ----------------------------------------------------------

def test_default_epsilon_examples():
    assert default_epsilon(1, 1, 1, 1) == 0.5
    assert default_epsilon(16, 16, 1, 10**4) == pytest.approx(0.025, rel=1e-12)


def test_default_epsilon_scaling():
    a = default_epsilon(16, 16, 1, 10**4)
    b = default_epsilon(16, 16, 1, 2 * 10**4)
    assert b / a == pytest.approx(2**-0.25, rel=1e-12)


def test_default_epsilon_rejects_nonpositive():
    with pytest.raises(InputError):
        default_epsilon(0, 1, 1, 1)


@pytest.mark.parametrize("kw", [dict(eps=0.7), dict(lipschitz=0.5), dict(k=4), dict(horizon=0),
                                dict(oracle_choice="ptas"), dict(bonus_log_arg="NM")])
def test_config_validation(kw):
    with pytest.raises(InputError):
        cfg(**kw)


# --- bonus and optimistic grid ------------------------------------------------

def test_bonus_examples():
    assert bonus_from_counts(0, 1.0) == np.inf
    assert float(bonus_from_counts(8, math.log(400))) == pytest.approx(2.4478, abs=1e-4)
    a, b = bonus_from_counts([5, 20], 3.0)
    assert b == pytest.approx(a / 2, rel=1e-14)


def test_bonus_uses_nmt_or_nmt_round():
    st = new_state(cfg(n=2, k=1, horizon=100))
    st.counters.sc[0, 1] = 8
    assert bonus(st, 0, 1) == pytest.approx(math.sqrt(math.log(2 * st.grid.m * 100)), rel=1e-14)
    st2 = new_state(cfg(n=2, k=1, horizon=100, bonus_log_arg="NMt"))
    st2.counters.sc[0, 1] = 8
    st2.counters.t = 9
    assert bonus(st2, 0, 1) == pytest.approx(math.sqrt(math.log(2 * st2.grid.m * 10)), rel=1e-14)


def test_optimistic_grid_first_round_all_ones():
    st = new_state(cfg())
    np.testing.assert_array_equal(optimistic_grid(st).entries, 1.0)


def test_optimistic_grid_caps_and_bias():
    st = new_state(cfg(n=1, k=1, lipschitz=1.5))
    st.counters.sc[:] = 10**6
    st.q_hat[:] = 0.2
    qbar = optimistic_grid(st).entries[0]
    beta = bonus_from_counts(10**6, math.log(st.grid.m * 100))
    np.testing.assert_allclose(qbar, 0.2 + beta, rtol=1e-14)  # K=1: no bias
    st_k2 = new_state(cfg(n=2, k=2, lipschitz=1.0))
    st_k2.counters.sc[:] = 10**6
    st_k2.q_hat[:] = 0.2
    j = np.arange(1, st_k2.grid.m + 1)
    expected = np.minimum(0.2 + beta_k2(st_k2) + 1.0 / j**2, 1.0)
    np.testing.assert_allclose(optimistic_grid(st_k2).entries[0], expected, rtol=1e-14)
    st_k2.q_hat[:] = 0.9
    assert np.all(optimistic_grid(st_k2).entries[:, 0] == 1.0)


def beta_k2(st):
    return bonus_from_counts(10**6, math.log(2 * st.grid.m * 100))


# --- selection ----------------------------------------------------------------

def test_first_round_selects_first_k():
    st = new_state(cfg(n=5, k=3))
    assert select_action(st) == (0, 1, 2)


def test_dominant_top_bin_arm_selected():
    st = new_state(cfg(n=4, k=2))
    st.counters.sc[:] = 10**9
    st.q_hat[:] = 0.0
    st.q_hat[:, 0] = 1.0
    st.q_hat[2, -2] = 0.9
    s = select_action(st)
    assert 2 in s
    p_bar = q_to_p(optimistic_grid(st))
    assert exact_oracle(p_bar, 2).subset == s


def test_selection_deterministic():
    rng = np.random.default_rng(0)
    st = new_state(cfg(n=6, k=2))
    st.counters.sc[:] = rng.integers(1, 50, st.counters.sc.shape)
    st.q_hat[:] = rng.random(st.q_hat.shape)
    assert select_action(st) == select_action(st)


def test_greedy_oracle_choice_records_factor():
    st = new_state(cfg(n=6, k=2, oracle_choice="greedy"))
    select_action(st)
    assert st.approx_factor == pytest.approx(1 - 1 / math.e)


# --- update -------------------------------------------------------------------

def test_update_example():
    st = new_state(cfg(n=3, k=2, eps=1 / 3))
    assert st.grid.m == 4
    update(st, (0, 1), ValueIndexFeedback(0.7, 1, 2))
    c = np.zeros((3, 4), int)
    c[1, 2] = 1
    sc = np.zeros((3, 4), int)
    sc[[0, 0, 1, 1], [2, 3, 2, 3]] = 1
    np.testing.assert_array_equal(st.counters.c, c)
    np.testing.assert_array_equal(st.counters.sc, sc)
    assert st.counters.t == 1
    assert np.all(st.counters.c <= st.counters.sc)
    np.testing.assert_array_equal(st.q_hat[0], [1, 0, 0, 0])
    np.testing.assert_array_equal(st.q_hat[1], [1, 0, 1, 0])


def test_update_computes_bin_when_missing():
    st = new_state(cfg())
    update(st, (0, 1), ValueIndexFeedback(0.6, 0))
    assert st.counters.c[0, 2] == 1


def test_update_rejects_foreign_winner():
    st = new_state(cfg())
    with pytest.raises(ConsistencyError):
        update(st, (0, 1), ValueIndexFeedback(0.5, 2, 2))


def test_top_bin_arm_estimate_converges_to_one():
    st = new_state(cfg(n=2, k=1))
    top = st.grid.m - 1
    for _ in range(50):
        update(st, (1,), ValueIndexFeedback(1.0, 1, top))
    assert st.q_hat[1, top] == 1.0
    np.testing.assert_array_equal(st.q_hat[1, 1:top], 0.0)
    assert st.q_hat[1, 0] == 1.0  # unobserved bin keeps its initial value


def small_env():
    arms = (
        builtin_arm("uniform_mixture", weights=[0.25, 0.75], intervals=[[0, 0.5], [0.5, 1]], label=0),
        builtin_arm("uniform_mixture", weights=[0.5, 0.5], intervals=[[0, 0.5], [0.5, 1]], label=1),
        builtin_arm("uniform_mixture", weights=[0.75, 0.25], intervals=[[0, 0.5], [0.5, 1]], label=2),
        builtin_arm("truncated_gaussian", mu=0.5, sigma=0.6, label=3),
    )
    return ContinuousEnv(arms, 2)


def run_policy(env, config, horizon, seed, hook=None):
    policy = DckUcbPolicy(config)
    table = sample_outcome_table(env, horizon, np.random.default_rng(seed))
    actions = []
    for t in range(horizon):
        s = policy.select()
        if hook is not None:
            hook(policy.state, s)
        policy.update(s, value_index_feedback(table[t, list(s)], s))
        actions.append(s)
    return policy, actions


def test_counter_invariants_every_round():
    env = small_env()
    prev = {}

    def hook(state, s):
        c, sc = state.counters.c, state.counters.sc
        assert np.all(c <= sc)
        assert np.all(np.diff(sc, axis=1) >= 0)
        if "sc" in prev:
            assert np.all(sc >= prev["sc"])
        prev["sc"] = sc.copy()
        seen = sc > 0
        np.testing.assert_allclose(state.q_hat[seen], c[seen] / sc[seen], rtol=1e-15)
        assert np.all((0 <= state.q_hat) & (state.q_hat <= 1))

    run_policy(env, cfg(n=4, k=2, eps=0.1, lipschitz=2.0, horizon=500), 500, 3, hook)


def test_full_determinism():
    env = small_env()
    c = cfg(n=4, k=2, eps=0.1, lipschitz=2.0, horizon=300)
    _, a = run_policy(env, c, 300, 8)
    _, b = run_policy(env, c, 300, 8)
    assert a == b


# --- concentration bound -----------------------------------------------------

def test_lemma4_zero_rounds():
    c = cfg(n=1, k=1)
    q_star = p_to_q(random_p_grid(np.random.default_rng(0), 1, make_grid(0.25)))
    assert lemma4_violation_rate(np.zeros((0, 1, 5)), np.zeros((0, 1, 5)), q_star, c) == 0.0


def test_lemma4_shape_mismatch():
    c = cfg(n=1, k=1)
    q_star = p_to_q(random_p_grid(np.random.default_rng(0), 1, make_grid(0.25)))
    with pytest.raises(InputError):
        lemma4_violation_rate(np.zeros((2, 1, 5)), np.zeros((3, 1, 5)), q_star, c)
    with pytest.raises(InputError):
        lemma4_violation_rate(np.zeros((2, 2, 5)), np.zeros((2, 2, 5)), q_star, c)


def test_lemma4_deterministic_bin_arm_has_no_violations():
    arm = steep_ramp_arm(0.6)
    env = ContinuousEnv((arm,), 1)
    c = cfg(n=1, k=1, eps=0.25, lipschitz=1.0, horizon=50)
    grid = make_grid(0.25)
    q_star = p_to_q(cdf_to_p([arm], grid))
    q_trace, sc_trace = [], []

    def hook(state, s):
        q_trace.append(state.q_hat.copy())
        sc_trace.append(state.counters.sc.copy())

    run_policy(env, c, 50, 0, hook)
    assert lemma4_violation_rate(np.array(q_trace), np.array(sc_trace), q_star, c) == 0.0


def test_tracker_matches_batch_rate():
    env = small_env()
    c = cfg(n=4, k=2, eps=0.1, lipschitz=2.0, horizon=400)
    q_star = p_to_q(cdf_to_p(env.arms, make_grid(0.1)))
    tracker = Lemma4Tracker(q_star, c)
    q_trace, sc_trace = [], []

    def hook(state, s):
        tracker.record(state)
        q_trace.append(state.q_hat.copy())
        sc_trace.append(state.counters.sc.copy())

    run_policy(env, c, 400, 1, hook)
    batch = lemma4_violation_rate(np.array(q_trace), np.array(sc_trace), q_star, c)
    assert tracker.rate == pytest.approx(batch, abs=1e-15)
    assert tracker.checked > 0


# --- diagnostics and decomposition inequality --------------------------------

def test_zero_bonus_gives_zero_bonus_t(monkeypatch):
    env = small_env()
    st = new_state(cfg(n=4, k=2, eps=0.1, lipschitz=2.0))
    q_star = p_to_q(cdf_to_p(env.arms, st.grid))
    monkeypatch.setattr(dck_ucb, "bonus_matrix", lambda state: np.zeros(state.q_hat.shape))
    bonus_t, bias_t = bonus_bias_diagnostics(st, (0, 1), q_star)
    assert bonus_t == 0.0 and bias_t > 0


def test_k1_gives_zero_bias_t():
    env = small_env()
    st = new_state(cfg(n=4, k=1, eps=0.1, lipschitz=2.0))
    q_star = p_to_q(cdf_to_p(env.arms, st.grid))
    assert bonus_bias_diagnostics(st, (2,), q_star)[1] == 0.0


def test_bonus_t_independent_formula():
    rng = np.random.default_rng(2)
    env = small_env()
    st = new_state(cfg(n=4, k=2, eps=0.1, lipschitz=2.0))
    st.counters.sc[:] = rng.integers(1, 100, st.counters.sc.shape)
    q_star = p_to_q(cdf_to_p(env.arms, st.grid))
    s = (1, 3)
    m = st.grid.m
    log_term = math.log(4 * m * 100)
    total_bonus = total_bias = 0.0
    for j in range(m):
        qj = np.prod([1 - q_star.entries[k, jj] for k in s for jj in range(j + 1, m)])
        for i in s:
            beta = math.sqrt(8 * log_term / st.counters.sc[i, j])
            total_bonus += qj * st.grid.values[j] * beta
            total_bias += qj * st.grid.values[j] * (2 - 1) * 2.0**4 / (j + 1) ** 2
    bonus_t, bias_t = bonus_bias_diagnostics(st, s, q_star)
    assert bonus_t == pytest.approx(4 * total_bonus, rel=1e-12)
    assert bias_t == pytest.approx(4 * total_bias, rel=1e-12)


def test_lemma5_on_500_random_rounds():
    rng = np.random.default_rng(77)
    for _ in range(500):
        grid = make_grid(float(rng.choice([0.5, 0.25, 0.1])))
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(n, 3) + 1))
        q_star = p_to_q(random_p_grid(rng, n, grid))
        s = tuple(sorted(rng.choice(n, k, replace=False)))
        if rng.random() < 0.5:
            q_bar = np.minimum(q_star.entries + rng.random(q_star.entries.shape) * 0.3, 1.0)
        else:
            q_bar = rng.random(q_star.entries.shape)
        lhs, rhs = lemma5_sides(s, ProbGrid("Q", q_bar, grid), q_star)
        assert lhs <= rhs + 1e-10


def test_estimation_error_bounded_under_lemma4_event():
    env = small_env()
    c = cfg(n=4, k=2, eps=0.1, lipschitz=2.0, horizon=600)
    q_star = p_to_q(cdf_to_p(env.arms, make_grid(0.1)))
    checked = []

    def hook(state, s):
        sc = state.counters.sc
        bound = bonus_from_counts(sc, math.log(4 * state.grid.m * 600)) + state.bias
        event = np.all((np.abs(state.q_hat - q_star.entries) <= bound + 1e-12) | (sc == 0))
        if not event:
            return
        q_bar = optimistic_grid(state)
        gap = binary_reward(s, q_bar) - binary_reward(s, q_star)
        bonus_t, bias_t = bonus_bias_diagnostics(state, s, q_star)
        assert gap <= bonus_t + bias_t + 1e-10
        checked.append(gap)

    run_policy(env, c, 600, 5, hook)
    assert len(checked) > 300


def test_snapshot_is_json_ready():
    import json
    policy = DckUcbPolicy(cfg())
    policy.update(policy.select(), ValueIndexFeedback(0.4, 0))
    snap = json.loads(json.dumps(policy.snapshot()))
    assert snap["t"] == 1 and snap["c"][0][1] == 1
