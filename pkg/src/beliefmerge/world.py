"""Grid kinematics, target motion policies and observation sampling."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .belief import GridShape, SensorModel


class Action(enum.IntEnum):
    # declaration order is the tie-break order everywhere
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @property
    def reverse(self) -> "Action":
        return _REVERSE[self]


_DELTAS = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.STAY: (0, 0),
}
_REVERSE = {
    Action.UP: Action.DOWN,
    Action.DOWN: Action.UP,
    Action.LEFT: Action.RIGHT,
    Action.RIGHT: Action.LEFT,
    Action.STAY: Action.STAY,
}
ACTIONS = tuple(Action)


@dataclass(frozen=True)
class AgentPose:
    agent_id: int
    cell: int


class Pattern(str, enum.Enum):
    STATIONARY = "stationary"
    RANDOM_WALK = "random"
    EVASIVE = "evasive"
    PATROL = "patrol"


@dataclass(frozen=True)
class TargetPolicy:
    pattern: Pattern
    waypoints: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        if self.waypoints is not None:
            object.__setattr__(self, "waypoints", tuple(int(c) for c in self.waypoints))
            if not self.waypoints:
                raise ValueError("patrol waypoints must be nonempty")

    def resolved_waypoints(self, shape: GridShape) -> tuple[int, ...]:
        """Patrol route; the four corners clockwise from top-left by default."""
        if self.waypoints is not None:
            for c in self.waypoints:
                shape.coords(c)
            return self.waypoints
        w, h = shape.width, shape.height
        corners = (shape.index(0, 0), shape.index(0, w - 1), shape.index(h - 1, w - 1), shape.index(h - 1, 0))
        # collapse duplicates on degenerate grids, keeping order
        return tuple(dict.fromkeys(corners))


@dataclass(frozen=True)
class TargetState:
    cell: int
    patrol_index: int = 0


def move(cell: int, action: Action, shape: GridShape) -> int:
    """Cell reached by ``action``; moves off the grid resolve to staying put."""
    row, col = divmod(cell, shape.width)
    dr, dc = _DELTAS[action]
    r, c = row + dr, col + dc
    if 0 <= r < shape.height and 0 <= c < shape.width:
        return r * shape.width + c
    return cell


def apply_action(pose: AgentPose, action: Action, shape: GridShape) -> AgentPose:
    shape.coords(pose.cell)
    return AgentPose(pose.agent_id, move(pose.cell, Action(action), shape))


@lru_cache(maxsize=32)
def transition_table(shape: GridShape) -> np.ndarray:
    """(|S|, 5) array: next cell for every (cell, action)."""
    table = np.empty((shape.size, len(ACTIONS)), dtype=np.int64)
    for cell in range(shape.size):
        for a in ACTIONS:
            table[cell, a] = move(cell, a, shape)
    table.flags.writeable = False
    return table


def manhattan(a: int, b: int, shape: GridShape) -> int:
    ra, ca = divmod(a, shape.width)
    rb, cb = divmod(b, shape.width)
    return abs(ra - rb) + abs(ca - cb)


def _step_toward(cell: int, goal: int, shape: GridShape) -> int:
    # close the row gap first, then the column gap
    r, c = divmod(cell, shape.width)
    gr, gc = divmod(goal, shape.width)
    if r != gr:
        r += 1 if gr > r else -1
    elif c != gc:
        c += 1 if gc > c else -1
    return r * shape.width + c


def step_target(state: TargetState, policy: TargetPolicy, agent_cells: Sequence[int],
                shape: GridShape, rng: np.random.Generator) -> TargetState:
    """Advance the target one step. Only RandomWalk draws from ``rng``."""
    pattern = policy.pattern
    if pattern is Pattern.STATIONARY:
        return state
    if pattern is Pattern.RANDOM_WALK:
        options = [a for a in ACTIONS if a is Action.STAY or move(state.cell, a, shape) != state.cell]
        choice = options[int(rng.integers(len(options)))]
        return TargetState(move(state.cell, choice, shape), state.patrol_index)
    if pattern is Pattern.EVASIVE:
        best_cell, best_dist = state.cell, -1
        for a in ACTIONS:
            cand = move(state.cell, a, shape)
            d = min((manhattan(cand, ag, shape) for ag in agent_cells), default=0)
            if d > best_dist:
                best_cell, best_dist = cand, d
        return TargetState(best_cell, state.patrol_index)
    # patrol
    route = policy.resolved_waypoints(shape)
    idx = state.patrol_index % len(route)
    if state.cell == route[idx]:
        idx = (idx + 1) % len(route)
    cell = _step_toward(state.cell, route[idx], shape)
    if cell == route[idx]:
        idx = (idx + 1) % len(route)
    return TargetState(cell, idx)


def sample_observation(sensor: SensorModel, target_cell: int, agent_cell: int,
                       rng: np.random.Generator) -> int:
    p_one = 1.0 - sensor.beta if target_cell == agent_cell else sensor.alpha
    return int(rng.random() < p_one)
