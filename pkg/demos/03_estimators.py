"""Score-function estimators versus the exact oracle on the six-state example.

One batch of trajectories feeds three estimators: the terminal-constraint
mean, the reward gradient (reward-to-go weights) and the constraint
gradient (terminal-indicator weight). Their deviations stay well inside
the sub-Gaussian widths that drive the step-size rule.
"""

import math

import numpy as np

from reachbarrier import (
    AugmentedEnv,
    TabularSoftmaxPolicy,
    build_augmented_finite,
    concentration_widths,
    counter_rng,
    estimate_constraint_gradient,
    estimate_constraint_value,
    estimate_reward_gradient,
    example1,
    exact_policy_gradient,
    initial_values,
    rollout_batch,
    smoothness_constants,
)

mdp, spec = example1()
env = AugmentedEnv(mdp, spec)
aug = build_augmented_finite(mdp, spec)
policy = TabularSoftmaxPolicy(mdp.horizon, env.num_aug_states, mdp.num_actions)

exact_vr, exact_vc = initial_values(aug, policy)
exact_grad_r, exact_grad_c = exact_policy_gradient(aug, policy)
print(f"uniform policy: exact V_r={exact_vr:.4f}  V_c={exact_vc:.4f}")

consts = smoothness_constants(policy.score_bounds(), mdp.horizon)
print(
    f"constants: L_r={consts.l_r:.4f} L_c={consts.l_c:.4f} "
    f"M_r={consts.m_r:.1f} M_c={consts.m_c:.1f}"
)

beta = 0.1
print(f"\nbatch-size sweep at confidence beta={beta}:")
for n in (100, 1_000, 10_000, 100_000):
    widths = concentration_widths(n, beta, consts)
    batch = rollout_batch(env, policy, n, counter_rng(42))
    vc_hat = estimate_constraint_value(batch)
    err_r = np.linalg.norm(estimate_reward_gradient(batch, policy) - exact_grad_r)
    err_c = np.linalg.norm(estimate_constraint_gradient(batch, policy) - exact_grad_c)
    print(
        f"  n={n:>6}: |vc_hat - V_c|={abs(vc_hat - exact_vc):.5f} "
        f"(width {widths.sigma_c0 * math.sqrt(math.log(2 / beta)):.5f})   "
        f"|grad_r err|={err_r:.5f} (width {widths.sigma_r1:.4f})   "
        f"|grad_c err|={err_c:.5f} (width {widths.sigma_c1:.4f})"
    )

print("\nthe gradient estimators put no mass on parameter slices that were")
print("never visited, so unreachable augmented states stay untouched.")
