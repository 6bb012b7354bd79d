import math

import numpy as np
import pytest

from reachbarrier import (
    AugmentedEnv,
    BarrierDomainError,
    FiniteMdp,
    InsufficientBatchError,
    ReachAvoidSpec,
    ScoreBounds,
    TabularSoftmaxPolicy,
    barrier_gradient,
    concentration_widths,
    counter_rng,
    estimate_constraint_gradient,
    estimate_constraint_value,
    estimate_reward_gradient,
    exact_policy_gradient,
    initial_values,
    min_batch_size,
    rollout_batch,
    smoothness_constants,
)
from conftest import uniform_policy


def test_constraint_value_direct_means(branching_sim):
    policy = uniform_policy(branching_sim)
    batch = rollout_batch(branching_sim, policy, 4, counter_rng(1))
    object.__setattr__(batch, "constraints", np.array([1.0, 0.0, 1.0, 1.0]))
    assert estimate_constraint_value(batch) == pytest.approx(0.75)
    object.__setattr__(batch, "constraints", np.ones(4))
    assert estimate_constraint_value(batch) == 1.0


def test_constraint_value_concentrates_on_safe_policy(branching_sim):
    theta = np.zeros((3, 18, 2))
    theta[:, :, 0] = 60.0
    policy = TabularSoftmaxPolicy(3, 18, 2, theta.ravel())
    n = 100_000
    batch = rollout_batch(branching_sim, policy, n, counter_rng(3))
    sigma_c0 = 1.0 / math.sqrt(2 * n)
    assert abs(estimate_constraint_value(batch) - 0.5) <= 3 * sigma_c0


def test_reward_gradient_zero_when_rewards_zero():
    kernel = np.zeros((2, 2, 2))
    kernel[:, :, 1] = 1.0
    mdp = FiniteMdp(2, 2, 2, kernel, np.zeros((2, 2, 2)), np.zeros(2))
    env = AugmentedEnv(mdp, ReachAvoidSpec(frozenset({0, 1}), frozenset({1})))
    policy = uniform_policy(env)
    batch = rollout_batch(env, policy, 500, counter_rng(5))
    assert np.array_equal(estimate_reward_gradient(batch, policy), np.zeros(policy.dim))


def test_gradients_zero_for_single_action_env():
    kernel = np.zeros((2, 1, 2))
    kernel[:, 0, 1] = 1.0
    mdp = FiniteMdp(2, 1, 2, kernel, np.ones((2, 2, 1)), np.ones(2))
    env = AugmentedEnv(mdp, ReachAvoidSpec(frozenset({0, 1}), frozenset({1})))
    policy = uniform_policy(env)
    batch = rollout_batch(env, policy, 200, counter_rng(7))
    assert np.allclose(estimate_reward_gradient(batch, policy), 0.0, atol=1e-15)
    assert np.allclose(estimate_constraint_gradient(batch, policy), 0.0, atol=1e-15)


def test_gradients_match_oracle_at_large_batch(branching_sim, branching_aug):
    policy = uniform_policy(branching_sim)
    n = 100_000
    batch = rollout_batch(branching_sim, policy, n, counter_rng(11))
    grad_r = estimate_reward_gradient(batch, policy)
    grad_c = estimate_constraint_gradient(batch, policy)
    exact_r, exact_c = exact_policy_gradient(branching_aug, policy)
    consts = smoothness_constants(policy.score_bounds(), 3)
    sigma_r1 = 2 * math.sqrt(2) * consts.l_r / math.sqrt(n)
    sigma_c1 = 2 * math.sqrt(2) * consts.l_c / math.sqrt(n)
    assert np.linalg.norm(grad_r - exact_r) <= 3 * sigma_r1
    assert np.linalg.norm(grad_c - exact_c) <= 3 * sigma_c1


def test_gradients_vanish_outside_visited_slices(branching_sim):
    policy = uniform_policy(branching_sim)
    batch = rollout_batch(branching_sim, policy, 2_000, counter_rng(13))
    grad = np.abs(estimate_reward_gradient(batch, policy)) + np.abs(
        estimate_constraint_gradient(batch, policy)
    )
    visited = np.zeros((3, 18, 2), dtype=bool)
    ids = batch.aug_ids
    for t in range(3):
        visited[t, ids[:, t], batch.actions[:, t]] = True
        # the softmax score touches every action of a visited state
        visited[t, ids[:, t], :] = True
    assert np.all(grad.reshape(3, 18, 2)[~visited] == 0.0)


def test_estimators_reject_off_policy_batches(branching_sim):
    policy = uniform_policy(branching_sim)
    batch = rollout_batch(branching_sim, policy, 50, counter_rng(17))
    other = policy.with_theta(np.full(policy.dim, 0.1))
    with pytest.raises(ValueError, match="off-policy"):
        estimate_reward_gradient(batch, other)
    with pytest.raises(ValueError, match="off-policy"):
        estimate_constraint_gradient(batch, other)


def test_estimator_unbiasedness_over_repeats(branching_sim, branching_aug):
    policy = uniform_policy(branching_sim)
    exact_r, exact_c = exact_policy_gradient(branching_aug, policy)
    _, exact_vc = initial_values(branching_aug, policy)
    reps, n = 60, 400
    vc_samples = np.zeros(reps)
    grads_r = np.zeros((reps, policy.dim))
    for rep in range(reps):
        batch = rollout_batch(branching_sim, policy, n, counter_rng(19, rep))
        vc_samples[rep] = estimate_constraint_value(batch)
        grads_r[rep] = estimate_reward_gradient(batch, policy)
    se_vc = vc_samples.std(ddof=1) / math.sqrt(reps)
    assert abs(vc_samples.mean() - exact_vc) <= 4 * se_vc + 1e-12
    se = grads_r.std(axis=0, ddof=1) / math.sqrt(reps)
    assert np.all(np.abs(grads_r.mean(axis=0) - exact_r) <= 4 * se + 1e-12)


def test_barrier_gradient_formula():
    combined = barrier_gradient(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.5, 0.1, 0.4)
    assert np.allclose(combined, [1.0, 1.0], atol=1e-12)


def test_barrier_gradient_eta_zero():
    grad_r = np.array([0.3, -0.2])
    out = barrier_gradient(grad_r, np.array([5.0, 5.0]), 0.7, 0.0, 0.4)
    assert np.array_equal(out, grad_r)


def test_barrier_gradient_domain_violation():
    with pytest.raises(BarrierDomainError):
        barrier_gradient(np.zeros(2), np.zeros(2), 0.4, 0.1, 0.4)


def test_smoothness_constants_closed_form():
    consts = smoothness_constants(ScoreBounds(math.sqrt(2.0), 1.0), 3)
    assert consts.l_r == pytest.approx(math.sqrt(2.0) * 3**1.5, abs=1e-12)
    assert consts.l_c == pytest.approx(math.sqrt(6.0), abs=1e-12)
    assert consts.m_r == pytest.approx(21.0, abs=1e-12)
    assert consts.m_c == pytest.approx(7.0, abs=1e-12)


def test_smoothness_constants_horizon_one():
    bounds = ScoreBounds(1.7, 0.4)
    consts = smoothness_constants(bounds, 1)
    assert consts.l_r == pytest.approx(1.7)
    assert consts.l_c == pytest.approx(1.7)


def test_smoothness_constants_scaling_in_mg():
    h = 4
    small = smoothness_constants(ScoreBounds(1.0, 0.0), h)
    big = smoothness_constants(ScoreBounds(2.0, 0.0), h)
    assert big.m_r == pytest.approx(4 * small.m_r)
    assert big.m_c == pytest.approx(4 * small.m_c)


def test_concentration_widths_values():
    consts = smoothness_constants(ScoreBounds(math.sqrt(2.0), 1.0), 3)
    widths = concentration_widths(50, 0.1, consts)
    assert widths.sigma_c0 == pytest.approx(0.1, abs=1e-15)
    assert widths.sigma_r1 == pytest.approx(2 * math.sqrt(2) * consts.l_r / math.sqrt(50))
    assert min_batch_size(0.05) == 26


def test_concentration_widths_scaling():
    consts = smoothness_constants(ScoreBounds(1.0, 1.0), 2)
    w1 = concentration_widths(100, 0.1, consts)
    w4 = concentration_widths(400, 0.1, consts)
    assert w4.sigma_c0 == pytest.approx(w1.sigma_c0 / 2)
    assert w4.sigma_r1 == pytest.approx(w1.sigma_r1 / 2)
    assert w4.sigma_c1 == pytest.approx(w1.sigma_c1 / 2)


def test_concentration_widths_rejects_small_batches():
    consts = smoothness_constants(ScoreBounds(1.0, 1.0), 2)
    with pytest.raises(InsufficientBatchError):
        concentration_widths(10, 0.05, consts)


def test_coverage_of_constraint_interval(branching_sim, branching_aug):
    policy = uniform_policy(branching_sim)
    _, exact_vc = initial_values(branching_aug, policy)
    beta, n, reps = 0.1, 200, 400
    width = (1.0 / math.sqrt(2 * n)) * math.sqrt(math.log(2.0 / beta))
    hits = 0
    for rep in range(reps):
        batch = rollout_batch(branching_sim, policy, n, counter_rng(23, rep))
        hits += abs(estimate_constraint_value(batch) - exact_vc) <= width
    assert hits / reps >= (1 - beta) - 0.02
