"""One decentralized tracking trial: merge, plan/act, observe, target move."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .belief import Belief, GridShape, SensorModel, ZeroEvidence, bayes_update, uniform_belief
from .merge import MergeStrategy, SolverParams, merge_beliefs
from .planner import PlanConfig, plan_best_action
from .world import AgentPose, Pattern, TargetPolicy, TargetState, move, sample_observation, step_target


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    shape: GridShape
    num_agents: int = 2
    sensor: SensorModel = SensorModel(0.10, 0.20)
    comm_interval: float = 5          # 0 = every step, math.inf = never
    max_steps: int = 2500
    plan: PlanConfig = PlanConfig()
    strategy: MergeStrategy = MergeStrategy.VISIT_WEIGHTED
    target_policy: TargetPolicy = TargetPolicy(Pattern.STATIONARY)
    seed: int = 0
    solver: SolverParams = SolverParams()
    # explicit placement; drawn from the seeded stream when absent
    agent_starts: Optional[tuple[int, ...]] = None
    target_start: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", MergeStrategy(self.strategy))
        k = self.comm_interval
        if not (k == 0 or k == math.inf or (float(k).is_integer() and k > 0)):
            raise ConfigInvalid(f"comm_interval must be 0, a positive integer or inf, got {k!r}")
        if k != math.inf:
            object.__setattr__(self, "comm_interval", int(k))
        if self.num_agents < 1:
            raise ConfigInvalid("need at least one agent")
        if self.max_steps < 1:
            raise ConfigInvalid("max_steps must be at least 1")
        if self.agent_starts is None and self.num_agents >= self.shape.size:
            raise ConfigInvalid("random placement needs a free cell for the target")
        if self.agent_starts is not None:
            starts = tuple(int(c) for c in self.agent_starts)
            if len(starts) != self.num_agents or any(not 0 <= c < self.shape.size for c in starts):
                raise ConfigInvalid("agent_starts must give one in-grid cell per agent")
            object.__setattr__(self, "agent_starts", starts)
        if self.target_start is not None and not 0 <= self.target_start < self.shape.size:
            raise ConfigInvalid("target_start outside grid")
        try:
            self.target_policy.resolved_waypoints(self.shape)
        except IndexError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def digest(self) -> str:
        """Stable short hash of every field."""
        def enc(o):
            if isinstance(o, float) and math.isinf(o):
                return "inf"
            if dataclasses.is_dataclass(o):
                return {f.name: enc(getattr(o, f.name)) for f in dataclasses.fields(o)}
            if isinstance(o, (list, tuple)):
                return [enc(x) for x in o]
            if hasattr(o, "value"):
                return o.value
            return o
        blob = json.dumps(enc(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class TrialRecord:
    success: bool
    steps_to_discovery: Optional[int]
    seed: int
    config_digest: str
    merges: int = 0
    error_flag: bool = False
    # wall clock; excluded from equality and from the canonical form
    duration_ms: float = field(default=0.0, compare=False)

    def canonical(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("duration_ms")
        return json.dumps(d, sort_keys=True)


def merge_due(t: int, k) -> bool:
    if k == 0:
        return True
    if k == math.inf:
        return False
    return t > 0 and t % k == 0


def merge_phase(beliefs: Sequence[Belief], visits: np.ndarray, strategy: MergeStrategy,
                solver: Optional[SolverParams] = None) -> list[Belief]:
    """Consensus belief handed to every agent. Visit counts are left as is."""
    consensus = merge_beliefs(strategy, beliefs, visits=visits, params=solver)
    return [consensus] * len(beliefs)


def check_discovery(agent_cells: Sequence[int], target_cell: int) -> bool:
    return any(c == target_cell for c in agent_cells)


class Simulation:
    """Mutable trial state advanced one time step at a time."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        shape = cfg.shape
        self.rng = np.random.default_rng(cfg.seed)
        if cfg.agent_starts is not None:
            cells = list(cfg.agent_starts)
        else:
            cells = [int(c) for c in self.rng.choice(shape.size, size=cfg.num_agents, replace=False)]
        if cfg.target_start is not None:
            target = cfg.target_start
        else:
            free = np.setdiff1d(np.arange(shape.size), cells)
            if free.size == 0:
                free = np.arange(shape.size)
            target = int(free[self.rng.integers(free.size)])
        self.agent_cells = cells
        self.target = TargetState(target)
        self.beliefs = [uniform_belief(shape)] * cfg.num_agents
        self.visits = np.zeros((cfg.num_agents, shape.size), dtype=np.int64)
        for i, c in enumerate(cells):
            self.visits[i, c] += 1
        self.t = 0
        self.merges = 0
        self.resets = 0
        self.discovered = check_discovery(cells, target)

    def step(self) -> bool:
        """Advance one time step; True if the target is found during it."""
        cfg, shape = self.cfg, self.cfg.shape
        self.t += 1
        if merge_due(self.t, cfg.comm_interval):
            self.beliefs = merge_phase(self.beliefs, self.visits, cfg.strategy, cfg.solver)
            self.merges += 1

        for i in range(cfg.num_agents):
            pose = AgentPose(i, self.agent_cells[i])
            action = plan_best_action(self.beliefs[i], pose, cfg.plan, cfg.sensor, shape)
            self.agent_cells[i] = move(pose.cell, action, shape)
            self.visits[i, self.agent_cells[i]] += 1
        found = check_discovery(self.agent_cells, self.target.cell)

        for i in range(cfg.num_agents):
            z = sample_observation(cfg.sensor, self.target.cell, self.agent_cells[i], self.rng)
            try:
                self.beliefs[i] = bayes_update(self.beliefs[i], cfg.sensor, z, self.agent_cells[i])
            except ZeroEvidence:
                self.beliefs[i] = uniform_belief(shape)
                self.resets += 1

        self.target = step_target(self.target, cfg.target_policy, self.agent_cells, shape, self.rng)
        found = found or check_discovery(self.agent_cells, self.target.cell)
        self.discovered = self.discovered or found
        return found


def run_trial(cfg: SimConfig) -> TrialRecord:
    start = time.perf_counter()
    sim = Simulation(cfg)
    steps = 0 if sim.discovered else None
    while steps is None and sim.t < cfg.max_steps:
        if sim.step():
            steps = sim.t
    return TrialRecord(
        success=steps is not None,
        steps_to_discovery=steps,
        seed=cfg.seed,
        config_digest=cfg.digest(),
        merges=sim.merges,
        duration_ms=(time.perf_counter() - start) * 1000.0,
    )
