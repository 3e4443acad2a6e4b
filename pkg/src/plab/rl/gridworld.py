"""Deterministic gridworld MDPs with one-hot state encoding."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import FrozenSet, Tuple

import numpy as np

Cell = Tuple[int, int]

# Action indices and their (row, col) displacements.
ACTIONS = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}  # up, down, left, right
NUM_ACTIONS = 4

REWARD_MODES = ("sparse", "dense", "zeroed")
STEP_PENALTY = 0.01


@dataclass(frozen=True)
class GridWorld:
    """Square grid with walls, a start cell, a goal cell, and a horizon.

    Cells are (row, col) with row 0 at the top.  Construction fails if the
    geometry is inconsistent or the goal cannot be reached from the start.
    Rewards: sparse pays 1 on reaching the goal, dense additionally charges
    0.01 per step, zeroed pays nothing ever (the collapse probe).
    """

    size: int
    walls: FrozenSet[Cell] = field(default_factory=frozenset)
    start: Cell = (0, 0)
    goal: Cell = (0, 0)
    gamma: float = 0.99
    horizon: int = 100
    reward_mode: str = "sparse"

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(self.walls))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        if self.size < 2:
            raise ValueError("grid must be at least 2 x 2")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.start == self.goal:
            raise ValueError("start and goal must differ")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self._in_bounds(cell):
                raise ValueError(f"{name} cell {cell} is outside the grid")
            if cell in self.walls:
                raise ValueError(f"{name} cell {cell} is a wall")
        for cell in self.walls:
            if not self._in_bounds(cell):
                raise ValueError(f"wall cell {cell} is outside the grid")
        if not self._reachable(self.start, self.goal):
            raise ValueError("goal is not reachable from start")

    def _in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.size and 0 <= c < self.size

    def _reachable(self, src: Cell, dst: Cell) -> bool:
        seen = {src}
        queue = deque([src])
        while queue:
            cell = queue.popleft()
            if cell == dst:
                return True
            for dr, dc in ACTIONS.values():
                nxt = (cell[0] + dr, cell[1] + dc)
                if self._in_bounds(nxt) and nxt not in self.walls and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return False

    @property
    def num_cells(self) -> int:
        return self.size * self.size

    def cell_index(self, cell: Cell) -> int:
        return cell[0] * self.size + cell[1]

    def free_cells(self) -> list[Cell]:
        return [(r, c) for r in range(self.size) for c in range(self.size)
                if (r, c) not in self.walls]


def env_reset(env: GridWorld) -> Cell:
    return env.start


def env_step(env: GridWorld, cell: Cell, action: int,
             steps_taken: int = 0) -> tuple[Cell, float, bool]:
    """One deterministic transition; bumping a wall or boundary stays put.

    ``steps_taken`` counts steps already taken this episode, so the horizon
    cutoff fires when this step is the horizon-th one.
    """
    if action not in ACTIONS:
        raise ValueError(f"action must be in 0..3, got {action}")
    if not env._in_bounds(cell) or cell in env.walls:
        raise ValueError(f"cell {cell} is not a valid state")
    if cell == env.goal:
        raise ValueError("cannot step from the terminal goal cell")
    dr, dc = ACTIONS[action]
    nxt = (cell[0] + dr, cell[1] + dc)
    if not env._in_bounds(nxt) or nxt in env.walls:
        nxt = cell
    at_goal = nxt == env.goal
    if env.reward_mode == "zeroed":
        reward = 0.0
    elif env.reward_mode == "dense":
        reward = (1.0 if at_goal else 0.0) - STEP_PENALTY
    else:
        reward = 1.0 if at_goal else 0.0
    done = at_goal or steps_taken + 1 >= env.horizon
    return nxt, reward, done


def encode_cell(env: GridWorld, cell: Cell) -> np.ndarray:
    """Row-major one-hot encoding over all size*size cells."""
    vec = np.zeros(env.num_cells, dtype=np.float64)
    vec[env.cell_index(cell)] = 1.0
    return vec


def encode_cells(env: GridWorld, cells) -> np.ndarray:
    out = np.zeros((len(cells), env.num_cells), dtype=np.float64)
    for i, cell in enumerate(cells):
        out[i, env.cell_index(cell)] = 1.0
    return out


def make_open_grid(size: int = 5, horizon: int = 100, gamma: float = 0.99,
                   reward_mode: str = "sparse") -> GridWorld:
    """Empty size x size grid, start top-left, goal bottom-right."""
    return GridWorld(size=size, walls=frozenset(),
                     start=(0, 0), goal=(size - 1, size - 1),
                     gamma=gamma, horizon=horizon, reward_mode=reward_mode)


def make_four_rooms(horizon: int = 200, gamma: float = 0.99,
                    reward_mode: str = "sparse") -> GridWorld:
    """11 x 11 grid split into four rooms joined by one doorway per wall."""
    walls = set()
    for r in range(11):
        if r not in (2, 8):
            walls.add((r, 5))
    for c in range(11):
        if c not in (2, 8):
            walls.add((5, c))
    return GridWorld(size=11, walls=frozenset(walls),
                     start=(0, 0), goal=(10, 10),
                     gamma=gamma, horizon=horizon, reward_mode=reward_mode)
