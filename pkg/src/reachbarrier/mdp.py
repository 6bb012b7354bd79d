"""Finite-horizon MDPs, reach-avoid specifications and sampling primitives."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9


def counter_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Random stream number `stream` derived from a master seed.

    Streams are counter-based (Philox), so any subset of streams can be
    created in any order and the draws are reproducible byte-for-byte.
    """
    return np.random.Generator(np.random.Philox(key=seed, counter=stream * (1 << 128)))


def categorical(cdf_row: np.ndarray, u: float) -> int:
    """Index drawn from a distribution given its cumulative row and u in [0,1)."""
    return min(int(np.searchsorted(cdf_row, u, side="right")), len(cdf_row) - 1)


@dataclass(frozen=True)
class FiniteMdp:
    """Explicit finite-horizon MDP with a dense, time-homogeneous kernel.

    kernel[s, a, s'] is the probability of moving to s' from s under a.
    stage_rewards[t, s, a] for t = 0..H-1 and terminal_reward[s] both live
    in [0, 1]. Shape errors are raised here; value-level violations (row
    sums off, rewards out of range) are left to `validate_mdp` so that
    deliberately broken instances can still be constructed and reported on.
    """

    num_states: int
    num_actions: int
    horizon: int
    kernel: np.ndarray
    stage_rewards: np.ndarray
    terminal_reward: np.ndarray

    def __post_init__(self):
        kernel = np.ascontiguousarray(np.asarray(self.kernel, dtype=np.float64))
        stage = np.ascontiguousarray(np.asarray(self.stage_rewards, dtype=np.float64))
        terminal = np.ascontiguousarray(np.asarray(self.terminal_reward, dtype=np.float64))
        s, a, h = self.num_states, self.num_actions, self.horizon
        if h < 1:
            raise ValueError("horizon must be at least 1")
        if kernel.shape != (s, a, s):
            raise ValueError(f"kernel shape {kernel.shape} != {(s, a, s)}")
        if stage.shape != (h, s, a):
            raise ValueError(f"stage_rewards shape {stage.shape} != {(h, s, a)}")
        if terminal.shape != (s,):
            raise ValueError(f"terminal_reward shape {terminal.shape} != {(s,)}")
        for arr in (kernel, stage, terminal):
            arr.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stage_rewards", stage)
        object.__setattr__(self, "terminal_reward", terminal)


@dataclass(frozen=True)
class ReachAvoidSpec:
    """Safe set and goal set over the states of a FiniteMdp, with G inside K."""

    safe_set: frozenset = field(default_factory=frozenset)
    goal_set: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "safe_set", frozenset(int(s) for s in self.safe_set))
        object.__setattr__(self, "goal_set", frozenset(int(s) for s in self.goal_set))

    def status_table(self, num_states: int) -> np.ndarray:
        """Per-state reach-avoid status: 2 goal, 1 safe-not-goal, 0 unsafe."""
        table = np.zeros(num_states, dtype=np.int64)
        for s in self.safe_set:
            if 0 <= s < num_states:
                table[s] = 1
        for s in self.goal_set:
            if 0 <= s < num_states:
                table[s] = 2
        return table


@dataclass(frozen=True)
class Trajectory:
    """One sampled path: states s_0..s_H, actions a_0..a_{H-1}, stage rewards."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        rewards = np.asarray(self.rewards, dtype=np.float64)
        if len(states) != len(actions) + 1 or len(rewards) != len(actions):
            raise ValueError("trajectory lengths are inconsistent")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    @property
    def horizon(self) -> int:
        return len(self.actions)


def validate_mdp(mdp: FiniteMdp, spec: ReachAvoidSpec) -> list[str]:
    """Report every invariant violation; an empty list means valid."""
    report = []
    sums = mdp.kernel.sum(axis=2)
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            if np.any(mdp.kernel[s, a] < 0):
                report.append(f"kernel row (s={s}, a={a}) has negative entries")
            if abs(sums[s, a] - 1.0) > ROW_SUM_TOL:
                report.append(f"kernel row (s={s}, a={a}) sums to {sums[s, a]!r}")
    if np.any(mdp.stage_rewards < 0) or np.any(mdp.stage_rewards > 1):
        report.append("stage rewards outside [0, 1]")
    if np.any(mdp.terminal_reward < 0) or np.any(mdp.terminal_reward > 1):
        report.append("terminal rewards outside [0, 1]")
    all_states = range(mdp.num_states)
    for name, subset in (("safe_set", spec.safe_set), ("goal_set", spec.goal_set)):
        bad = sorted(s for s in subset if s not in all_states)
        if bad:
            report.append(f"{name} contains out-of-range states {bad}")
    stray = sorted(spec.goal_set - spec.safe_set)
    if stray:
        report.append(f"goal states {stray} are not contained in the safe set")
    return report


def satisfies_reach_avoid(traj, spec: ReachAvoidSpec) -> bool:
    """True iff some s_t is in the goal set with every earlier state safe-not-goal."""
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj)
    for s in states:
        s = int(s)
        if s in spec.goal_set:
            return True
        if s not in spec.safe_set:
            return False
    return False


def sample_next(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> int:
    """Draw the successor state from the kernel row (s, a)."""
    if not (0 <= s < mdp.num_states and 0 <= a < mdp.num_actions):
        raise IndexError(f"state/action ({s}, {a}) out of range")
    return categorical(np.cumsum(mdp.kernel[s, a]), rng.random())


def save_mdp(path, mdp: FiniteMdp, spec: ReachAvoidSpec) -> None:
    """Write an MDP and its reach-avoid sets to the JSON interchange format."""
    payload = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "horizon": mdp.horizon,
        "kernel": mdp.kernel.tolist(),
        "stage_rewards": mdp.stage_rewards.tolist(),
        "terminal_reward": mdp.terminal_reward.tolist(),
        "safe_set": sorted(spec.safe_set),
        "goal_set": sorted(spec.goal_set),
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def load_mdp(path) -> tuple[FiniteMdp, ReachAvoidSpec]:
    """Load the JSON format, renormalizing kernel rows that are within tolerance."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    kernel = np.asarray(payload["kernel"], dtype=np.float64)
    sums = kernel.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL) or np.any(kernel < 0):
        raise ValueError("kernel rows are not stochastic within tolerance")
    kernel = kernel / sums[:, :, None]
    mdp = FiniteMdp(
        num_states=int(payload["num_states"]),
        num_actions=int(payload["num_actions"]),
        horizon=int(payload["horizon"]),
        kernel=kernel,
        stage_rewards=np.asarray(payload["stage_rewards"], dtype=np.float64),
        terminal_reward=np.asarray(payload["terminal_reward"], dtype=np.float64),
    )
    spec = ReachAvoidSpec(frozenset(payload["safe_set"]), frozenset(payload["goal_set"]))
    return mdp, spec
