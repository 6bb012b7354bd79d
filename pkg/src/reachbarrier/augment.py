"""State augmentation: reach-avoid status tracking, product-space kernel, rollouts.

The auxiliary component y takes values in {0, 1, 2}: 0 once the path has
left the safe set, 1 while it has stayed safe without reaching the goal,
and 2 once the goal has been reached. 0 and 2 absorb, so the terminal
auxiliary value decides the reach-avoid outcome of the whole path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMdp, ReachAvoidSpec, Trajectory, categorical

AUX_VIOLATED = 0
AUX_PENDING = 1
AUX_ACHIEVED = 2

VALID_AUX_TRANSITIONS = frozenset(
    {(0, 0), (2, 2), (1, 0), (1, 1), (1, 2)}
)


def initial_aux(s0: int, spec: ReachAvoidSpec) -> int:
    """Auxiliary status of the initial state: goal 2, safe-not-goal 1, else 0."""
    if s0 in spec.goal_set:
        return AUX_ACHIEVED
    if s0 in spec.safe_set:
        return AUX_PENDING
    return AUX_VIOLATED


def aux_update(s_next: int, y: int, spec: ReachAvoidSpec) -> int:
    """One step of the auxiliary dynamics: absorbing at 0 and 2, else re-classify."""
    if y != AUX_PENDING:
        return y
    return initial_aux(s_next, spec)


def aug_id(s: int, y: int) -> int:
    """Flat id of the augmented state; the auxiliary index varies fastest."""
    return 3 * s + y


def aug_unpack(state_id: int) -> tuple[int, int]:
    return divmod(state_id, 3)


@dataclass(frozen=True)
class AugTrajectory:
    """Augmented path: base states, auxiliary statuses, actions and rewards."""

    states: np.ndarray
    aux: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal_reward: float

    @property
    def aug_ids(self) -> np.ndarray:
        return 3 * self.states + self.aux

    @property
    def constraint(self) -> int:
        return int(self.aux[-1] == AUX_ACHIEVED)


def terminal_constraint(traj: AugTrajectory) -> int:
    """1 iff the trajectory ends with the goal-reached status."""
    return traj.constraint


class AugmentedEnv:
    """Product-space MDP realized lazily: base sampling composed with aux updates.

    The explicit kernel is only materialized by `build_augmented_finite`,
    which the exact oracle uses; rollouts compose the base kernel with the
    auxiliary dynamics on the fly.
    """

    def __init__(self, base: FiniteMdp, spec: ReachAvoidSpec, init_state: int = 0):
        self.base = base
        self.spec = spec
        self.init_state = int(init_state)
        self.status = spec.status_table(base.num_states)
        self.kernel_cdf = np.cumsum(base.kernel, axis=2)

    @property
    def horizon(self) -> int:
        return self.base.horizon

    @property
    def num_aug_states(self) -> int:
        return 3 * self.base.num_states

    @property
    def num_actions(self) -> int:
        return self.base.num_actions

    def initial_aug_id(self, s0: int | None = None) -> int:
        s0 = self.init_state if s0 is None else s0
        return aug_id(s0, int(self.status[s0]))


@dataclass(frozen=True)
class RolloutBatch:
    """n augmented trajectories in array form, plus the generating parameters.

    Row i of each array is trajectory i. `policy_theta` is kept so that
    estimator calls can verify they are used on-policy.
    """

    states: np.ndarray
    aux: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal_rewards: np.ndarray
    constraints: np.ndarray
    policy_theta: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def aug_ids(self) -> np.ndarray:
        return 3 * self.states + self.aux

    def trajectory(self, i: int) -> AugTrajectory:
        return AugTrajectory(
            states=self.states[i].copy(),
            aux=self.aux[i].copy(),
            actions=self.actions[i].copy(),
            rewards=self.rewards[i].copy(),
            terminal_reward=float(self.terminal_rewards[i]),
        )

    def as_trajectories(self) -> list[AugTrajectory]:
        return [self.trajectory(i) for i in range(self.n)]


def augmented_rollout(env: AugmentedEnv, policy, rng: np.random.Generator) -> AugTrajectory:
    """Sample one augmented trajectory under a Markov policy on (s, y)."""
    horizon = env.horizon
    if policy.horizon != horizon:
        raise ValueError("policy horizon does not match the environment")
    states = np.zeros(horizon + 1, dtype=np.int64)
    aux = np.zeros(horizon + 1, dtype=np.int64)
    actions = np.zeros(horizon, dtype=np.int64)
    rewards = np.zeros(horizon)
    states[0] = env.init_state
    aux[0] = env.status[env.init_state]
    for t in range(horizon):
        a = policy.sample_action(t, aug_id(states[t], aux[t]), rng)
        s_next = categorical(env.kernel_cdf[states[t], a], rng.random())
        actions[t] = a
        rewards[t] = env.base.stage_rewards[t, states[t], a]
        states[t + 1] = s_next
        aux[t + 1] = aux[t] if aux[t] != AUX_PENDING else env.status[s_next]
    return AugTrajectory(
        states=states,
        aux=aux,
        actions=actions,
        rewards=rewards,
        terminal_reward=float(env.base.terminal_reward[states[-1]]),
    )


def rollout_batch(env: AugmentedEnv, policy, n: int, rng: np.random.Generator) -> RolloutBatch:
    """Sample n trajectories in lockstep; one uniform per action and transition.

    The draw order (all action uniforms for step t, then all transition
    uniforms for step t) is fixed, so a given generator state always yields
    the same batch.
    """
    if n < 1:
        raise ValueError("batch size must be at least 1")
    horizon = env.horizon
    if policy.horizon != horizon:
        raise ValueError("policy horizon does not match the environment")
    states = np.zeros((n, horizon + 1), dtype=np.int64)
    aux = np.zeros((n, horizon + 1), dtype=np.int64)
    actions = np.zeros((n, horizon), dtype=np.int64)
    rewards = np.zeros((n, horizon))
    states[:, 0] = env.init_state
    aux[:, 0] = env.status[env.init_state]
    num_actions = env.num_actions
    for t in range(horizon):
        probs = policy.probability_table(t)
        rows = np.cumsum(probs[3 * states[:, t] + aux[:, t]], axis=1)
        a = np.minimum((rows < rng.random(n)[:, None]).sum(axis=1), num_actions - 1)
        trans = env.kernel_cdf[states[:, t], a]
        s_next = np.minimum(
            (trans < rng.random(n)[:, None]).sum(axis=1), env.base.num_states - 1
        )
        actions[:, t] = a
        rewards[:, t] = env.base.stage_rewards[t, states[:, t], a]
        states[:, t + 1] = s_next
        aux[:, t + 1] = np.where(aux[:, t] == AUX_PENDING, env.status[s_next], aux[:, t])
    return RolloutBatch(
        states=states,
        aux=aux,
        actions=actions,
        rewards=rewards,
        terminal_rewards=env.base.terminal_reward[states[:, -1]],
        constraints=(aux[:, -1] == AUX_ACHIEVED).astype(np.float64),
        policy_theta=np.array(policy.theta, copy=True),
    )


@dataclass(frozen=True)
class AugmentedFinite:
    """Materialized augmented MDP plus its terminal constraint indicator."""

    mdp: FiniteMdp
    terminal_constraint: np.ndarray
    base: FiniteMdp
    spec: ReachAvoidSpec

    def initial_state(self, s0: int = 0) -> int:
        status = self.spec.status_table(self.base.num_states)
        return aug_id(s0, int(status[s0]))


def build_augmented_finite(mdp: FiniteMdp, spec: ReachAvoidSpec) -> AugmentedFinite:
    """Materialize the product-space kernel, rewards and constraint vector.

    Rows follow the base kernel, with all mass routed to the auxiliary
    successor dictated by the update rule; rewards ignore the auxiliary
    component.
    """
    num_states, num_actions = mdp.num_states, mdp.num_actions
    status = spec.status_table(num_states)
    kernel = np.zeros((3 * num_states, num_actions, 3 * num_states))
    src = np.arange(num_states)
    for y in (AUX_VIOLATED, AUX_PENDING, AUX_ACHIEVED):
        dest_aux = status if y == AUX_PENDING else np.full(num_states, y)
        cols = 3 * src + dest_aux
        kernel[(3 * src + y)[:, None, None], np.arange(num_actions)[None, :, None], cols[None, None, :]] = mdp.kernel
    stage = np.repeat(mdp.stage_rewards, 3, axis=1)
    terminal = np.repeat(mdp.terminal_reward, 3)
    aug_mdp = FiniteMdp(3 * num_states, num_actions, mdp.horizon, kernel, stage, terminal)
    constraint = np.tile(np.array([0.0, 0.0, 1.0]), num_states)
    return AugmentedFinite(mdp=aug_mdp, terminal_constraint=constraint, base=mdp, spec=spec)


class HistoryPolicy:
    """History-dependent policy induced by a Markov policy on the augmented space.

    The action law at history (s_0, a_0, ..., s_t) is the augmented policy
    evaluated at (s_t, b_t), where b_t replays the auxiliary recursion on
    the observed state prefix.
    """

    def __init__(self, aug_policy, spec: ReachAvoidSpec):
        self.aug_policy = aug_policy
        self.spec = spec

    @property
    def horizon(self) -> int:
        return self.aug_policy.horizon

    def aux_of_history(self, state_history) -> int:
        b = initial_aux(int(state_history[0]), self.spec)
        for s in state_history[1:]:
            b = aux_update(int(s), b, self.spec)
        return b

    def action_probabilities(self, t: int, state_history) -> np.ndarray:
        b = self.aux_of_history(state_history)
        return self.aug_policy.action_probabilities(t, aug_id(int(state_history[-1]), b))

    def sample_action(self, t: int, state_history, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.action_probabilities(t, state_history))
        return categorical(cdf, rng.random())


def lift_policy(aug_policy, spec: ReachAvoidSpec) -> HistoryPolicy:
    """History-dependent policy equivalent to `aug_policy` on the base MDP."""
    return HistoryPolicy(aug_policy, spec)


def history_rollout(mdp: FiniteMdp, policy: HistoryPolicy, s0: int, rng: np.random.Generator) -> Trajectory:
    """Roll out a history-dependent policy on the base MDP."""
    states = np.zeros(mdp.horizon + 1, dtype=np.int64)
    actions = np.zeros(mdp.horizon, dtype=np.int64)
    rewards = np.zeros(mdp.horizon)
    states[0] = s0
    cdf = np.cumsum(mdp.kernel, axis=2)
    for t in range(mdp.horizon):
        a = policy.sample_action(t, states[: t + 1], rng)
        actions[t] = a
        rewards[t] = mdp.stage_rewards[t, states[t], a]
        states[t + 1] = categorical(cdf[states[t], a], rng.random())
    return Trajectory(states=states, actions=actions, rewards=rewards)
