"""Walk through the reach-avoid augmentation on the six-state example.

The base MDP branches at state 0: through state 1 the path can still satisfy
the reach-avoid property, through state 2 it is already lost. The auxiliary
status y in {0, 1, 2} tracks exactly that: 1 while undecided, 0 once the
safe set is left, 2 once the goal is reached. The terminal status then
equals the reach-avoid predicate on the whole path.
"""

import numpy as np

from reachbarrier import (
    AugmentedEnv,
    TabularSoftmaxPolicy,
    aug_id,
    augmented_rollout,
    build_augmented_finite,
    counter_rng,
    example1,
    rollout_batch,
    satisfies_reach_avoid,
    terminal_constraint,
)

mdp, spec = example1()
print("states:", mdp.num_states, "actions:", mdp.num_actions, "horizon:", mdp.horizon)
print("safe set:", sorted(spec.safe_set), "goal set:", sorted(spec.goal_set))

env = AugmentedEnv(mdp, spec)
policy = TabularSoftmaxPolicy(mdp.horizon, env.num_aug_states, mdp.num_actions)

print("\nA few rollouts under the uniform policy:")
for stream in range(6):
    traj = augmented_rollout(env, policy, counter_rng(0, stream))
    print(
        f"  states {traj.states.tolist()}  aux {traj.aux.tolist()}  "
        f"constraint {terminal_constraint(traj)}  "
        f"predicate {int(satisfies_reach_avoid(traj.states, spec))}"
    )

# the equivalence holds on every path, not just these few
batch = rollout_batch(env, policy, 50_000, counter_rng(1))
predicate = np.array([satisfies_reach_avoid(batch.states[i], spec) for i in range(batch.n)])
print(f"\nagreement over {batch.n} rollouts:", int(np.sum(predicate == batch.constraints.astype(bool))))

# materialize the product-space kernel for the exact oracle
aug = build_augmented_finite(mdp, spec)
print("\naugmented states:", aug.mdp.num_states)
print("rows stochastic:", bool(np.allclose(aug.mdp.kernel.sum(axis=2), 1.0)))
print(
    "from (s3, pending), action 0 reaches (s4, achieved) w.p.",
    aug.mdp.kernel[aug_id(3, 1), 0, aug_id(4, 2)],
)
print(
    "from (s3, violated), action 0 reaches (s4, violated) w.p.",
    aug.mdp.kernel[aug_id(3, 0), 0, aug_id(4, 0)],
)
