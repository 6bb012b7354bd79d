"""A barrier ascent on the six-state example, audited by the exact oracle.

The ascent maximizes V_r + eta * log(V_c - delta) from a strictly feasible
start. The step size is chosen from confidence bounds so that, with high
probability, every policy queried along the way keeps V_c >= delta; here
the oracle verifies that on every single iterate.
"""

from reachbarrier import (
    AugmentedEnv,
    BarrierConfig,
    TabularSoftmaxPolicy,
    build_augmented_finite,
    example1,
    exact_policy_eval,
    lbsgd_run,
    solve_cmdp,
)
from reachbarrier.harness import RunConfig, initial_theta

DELTA, ETA = 0.4, 0.02

mdp, spec = example1()
env = AugmentedEnv(mdp, spec)
aug = build_augmented_finite(mdp, spec)
policy = TabularSoftmaxPolicy(mdp.horizon, env.num_aug_states, mdp.num_actions)
start = aug.initial_state(0)


def audit(theta):
    values = exact_policy_eval(aug, policy.with_theta(theta))
    return float(values.v_r[0, start]), float(values.v_c[0, start])


# start from the known safe policy on the pending branch; on branches where
# the outcome is already decided, actions cannot hurt the constraint, so the
# start may lean toward reward there
run_cfg = RunConfig(
    env_name="example1", env_params={}, eta=ETA, delta=DELTA, beta=0.1,
    batch_size=4000, iterations=200, seed=0, out_dir="unused",
    init_mode="safe_greedy", init_bias=2.5, greedy_bias=1.5,
)
theta0 = initial_theta(run_cfg, aug, policy)
vr0, vc0 = audit(theta0)
print(f"start: V_r={vr0:.4f}  V_c={vc0:.4f}  (delta={DELTA}, eta={ETA})")

config = BarrierConfig(eta=ETA, delta=DELTA, beta=0.1, batch_size=4000, max_iterations=200)
result = lbsgd_run(env, policy, theta0, config, seed=0, audit=audit)

print("\n iter   vc_hat   alpha    m_hat    gamma    |grad|   V_r(exact)  V_c(exact)")
for r in result.records[::25] + [result.records[-1]]:
    print(
        f"  {r.iteration:>3}  {r.vc_hat:.4f}  {r.alpha_lower:.4f}  "
        f"{r.m_hat:7.1f}  {r.gamma:.4f}  {r.grad_norm:.4f}     "
        f"{r.vr_exact:.4f}      {r.vc_exact:.4f}"
    )

vr, vc = audit(result.theta_out)
best = solve_cmdp(aug, DELTA).value
safe = all(r.vc_exact >= DELTA for r in result.records)
print(f"\nexit: {result.exit_reason} after {result.num_iterations} iterations")
print(f"final: V_r={vr:.4f} (optimum {best}), V_c={vc:.4f}")
print(f"every iterate satisfied V_c >= {DELTA}: {safe}")
