"""Built-in benchmark environments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import FiniteMdp, ReachAvoidSpec


def example1() -> tuple[FiniteMdp, ReachAvoidSpec]:
    """Six-state branching MDP with a reward/constraint conflict at state 3.

    State 0 moves to 1 or 2 with equal probability under both actions;
    1 and 2 move deterministically to 3; from 3, action 0 leads to 4 and
    action 1 leads to 5; states 4 and 5 absorb. Stage rewards are zero and
    the terminal reward is 1 on state 5. The safe set is {0, 1, 3, 4} and
    the goal set is {4}, so only the branch through state 1 can satisfy
    the reach-avoid property, and it must then forgo the terminal reward.
    """
    num_states, num_actions, horizon = 6, 2, 3
    kernel = np.zeros((num_states, num_actions, num_states))
    for a in range(num_actions):
        kernel[0, a, 1] = 0.5
        kernel[0, a, 2] = 0.5
        kernel[1, a, 3] = 1.0
        kernel[2, a, 3] = 1.0
        kernel[4, a, 4] = 1.0
        kernel[5, a, 5] = 1.0
    kernel[3, 0, 4] = 1.0
    kernel[3, 1, 5] = 1.0
    stage_rewards = np.zeros((horizon, num_states, num_actions))
    terminal_reward = np.zeros(num_states)
    terminal_reward[5] = 1.0
    mdp = FiniteMdp(num_states, num_actions, horizon, kernel, stage_rewards, terminal_reward)
    spec = ReachAvoidSpec(frozenset({0, 1, 3, 4}), frozenset({4}))
    return mdp, spec


@dataclass(frozen=True)
class GridWorldSpec:
    """Rectangular grid with lateral slip, obstacle cells and goal cells.

    Cells are (x, y) pairs with x in [0, width) and y in [0, height); the
    flat state id is y * width + x. The agent starts in cell (0, 0) by
    convention. Obstacle cells are unsafe but enterable; attempting to move
    off the grid leaves the agent in place. The terminal reward is 1 on
    `bonus_cell` (bottom-right corner when omitted) and stage rewards are 0.
    """

    width: int
    height: int
    horizon: int
    slip: float = 0.0
    obstacles: frozenset = field(default_factory=frozenset)
    goals: frozenset = field(default_factory=frozenset)
    bonus_cell: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        object.__setattr__(self, "goals", frozenset(tuple(c) for c in self.goals))
        if self.bonus_cell is not None:
            object.__setattr__(self, "bonus_cell", tuple(self.bonus_cell))

    def cell_id(self, cell: tuple) -> int:
        x, y = cell
        return y * self.width + x


# action -> (dx, dy); lateral slip moves to the two perpendicular neighbours
_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
_LATERAL = {0: (1, 3), 2: (1, 3), 1: (0, 2), 3: (0, 2)}


def gridworld(spec: GridWorldSpec) -> tuple[FiniteMdp, ReachAvoidSpec]:
    """Build the 4-action slip gridworld described by `spec`."""
    if spec.width < 1 or spec.height < 1:
        raise ValueError("grid dimensions must be positive")
    if not 0 <= spec.slip < 1:
        raise ValueError("slip probability must lie in [0, 1)")
    cells = [(x, y) for y in range(spec.height) for x in range(spec.width)]
    in_range = set(cells)
    for name, subset in (("obstacles", spec.obstacles), ("goals", spec.goals)):
        bad = sorted(set(subset) - in_range)
        if bad:
            raise ValueError(f"{name} outside the grid: {bad}")
    if spec.goals & spec.obstacles:
        raise ValueError("goal cells cannot be obstacles")
    bonus = spec.bonus_cell if spec.bonus_cell is not None else (spec.width - 1, spec.height - 1)
    if bonus not in in_range:
        raise ValueError(f"bonus cell outside the grid: {bonus}")

    num_states = spec.width * spec.height
    num_actions = 4

    def target(cell, move):
        x, y = cell[0] + _MOVES[move][0], cell[1] + _MOVES[move][1]
        return (x, y) if (x, y) in in_range else cell

    kernel = np.zeros((num_states, num_actions, num_states))
    for cell in cells:
        s = spec.cell_id(cell)
        for a in range(num_actions):
            kernel[s, a, spec.cell_id(target(cell, a))] += 1.0 - spec.slip
            for side in _LATERAL[a]:
                kernel[s, a, spec.cell_id(target(cell, side))] += spec.slip / 2.0

    stage_rewards = np.zeros((spec.horizon, num_states, num_actions))
    terminal_reward = np.zeros(num_states)
    terminal_reward[spec.cell_id(bonus)] = 1.0
    mdp = FiniteMdp(num_states, num_actions, spec.horizon, kernel, stage_rewards, terminal_reward)
    safe = frozenset(spec.cell_id(c) for c in cells if c not in spec.obstacles)
    goal = frozenset(spec.cell_id(c) for c in spec.goals)
    return mdp, ReachAvoidSpec(safe, goal)
