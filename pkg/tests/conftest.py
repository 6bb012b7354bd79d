import pytest

from reachbarrier import (
    AugmentedEnv,
    GridWorldSpec,
    TabularSoftmaxPolicy,
    build_augmented_finite,
    example1,
    gridworld,
)


@pytest.fixture(scope="session")
def branching_env():
    return example1()


@pytest.fixture(scope="session")
def branching_aug(branching_env):
    mdp, spec = branching_env
    return build_augmented_finite(mdp, spec)


@pytest.fixture(scope="session")
def branching_sim(branching_env):
    mdp, spec = branching_env
    return AugmentedEnv(mdp, spec)


@pytest.fixture(scope="session")
def small_grid():
    spec = GridWorldSpec(
        width=4,
        height=4,
        horizon=4,
        slip=0.1,
        obstacles=frozenset({(1, 1)}),
        goals=frozenset({(2, 2)}),
        bonus_cell=(3, 0),
    )
    return gridworld(spec)


@pytest.fixture(scope="session")
def small_grid_aug(small_grid):
    mdp, spec = small_grid
    return build_augmented_finite(mdp, spec)


def uniform_policy(aug_or_env) -> TabularSoftmaxPolicy:
    mdp = aug_or_env.mdp if hasattr(aug_or_env, "mdp") else aug_or_env.base
    num_aug = mdp.num_states if hasattr(aug_or_env, "mdp") else 3 * mdp.num_states
    return TabularSoftmaxPolicy(mdp.horizon, num_aug, mdp.num_actions)
