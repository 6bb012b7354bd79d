"""A slip gridworld: reach the goal safely, but the terminal bonus sits elsewhere.

The 4x4 grid has an obstacle at (1, 1), the reach-avoid goal at (2, 2), and
the terminal reward on the corner (3, 0). Within four steps a path can end
on the bonus cell or pass through the goal, not both, so as in the
six-state example the constrained optimum mixes two deterministic policies.
"""

import numpy as np

from reachbarrier import (
    AugmentedEnv,
    GridWorldSpec,
    TabularSoftmaxPolicy,
    build_augmented_finite,
    counter_rng,
    gridworld,
    max_constraint_value,
    rollout_batch,
    satisfies_reach_avoid,
    slater_check,
    solve_cmdp,
)

spec = GridWorldSpec(
    width=4,
    height=4,
    horizon=4,
    slip=0.1,
    obstacles=frozenset({(1, 1)}),
    goals=frozenset({(2, 2)}),
    bonus_cell=(3, 0),
)
mdp, ra = gridworld(spec)

print(f"grid {spec.width}x{spec.height}, slip {spec.slip}, horizon {spec.horizon}")
print("obstacle cells:", sorted(spec.obstacles), "goal cells:", sorted(spec.goals))

aug = build_augmented_finite(mdp, ra)
best_reach = max_constraint_value(aug)
print(f"\nbest achievable reach-avoid probability from (0,0): {best_reach:.6f}")

delta = 0.5
check = slater_check(aug, delta)
print(f"Slater margin at delta={delta}: {check.margin:.6f} (satisfied: {check.satisfied})")

solution = solve_cmdp(aug, delta)
print(
    f"constrained optimum: value={solution.value:.6f} "
    f"achieved={solution.achieved_constraint:.6f} weights={[round(w, 3) for w in solution.weights]}"
)

env = AugmentedEnv(mdp, ra)
policy = TabularSoftmaxPolicy(mdp.horizon, env.num_aug_states, mdp.num_actions)
batch = rollout_batch(env, policy, 20_000, counter_rng(7))
freq = batch.constraints.mean()
predicate = np.mean([satisfies_reach_avoid(batch.states[i], ra) for i in range(batch.n)])
print(f"\nuniform policy: empirical reach-avoid frequency {freq:.4f}")
print(f"predicate recomputed from raw paths:         {predicate:.4f}")
