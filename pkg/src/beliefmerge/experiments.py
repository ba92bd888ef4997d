"""Seeded parameter sweeps, aggregation, win counting and the grid-error study."""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .belief import Belief, GridShape, SensorModel
from .merge import (
    MergeStrategy,
    SolverParams,
    arithmetic_merge,
    forward_kl_objective,
    geometric_merge,
    numeric_forward_kl_merge,
    numeric_reverse_kl_merge,
    reverse_kl_objective,
)
from .planner import PlanConfig
from .sim import SimConfig, TrialRecord, run_trial
from .world import Pattern, TargetPolicy

log = logging.getLogger(__name__)

NOISE_PROFILES = {
    "high_quality": (0.05, 0.10),
    "baseline": (0.10, 0.20),
    "degraded": (0.20, 0.30),
    "ghost_heavy": (0.30, 0.10),
    "perfect": (0.00, 0.00),
}


class MisalignedBlocks(ValueError):
    """Configuration blocks do not all contain the same strategies."""


def noise_name(alpha: float, beta: float) -> str:
    for name, ab in NOISE_PROFILES.items():
        if math.isclose(ab[0], alpha, abs_tol=1e-12) and math.isclose(ab[1], beta, abs_tol=1e-12):
            return name
    return f"a={alpha:.6g},b={beta:.6g}"


def format_interval(k) -> str:
    return "inf" if k == math.inf else str(int(k))


def parse_interval(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "never"):
        return math.inf
    k = float(text)
    if k == math.inf:
        return k
    if k < 0 or not k.is_integer():
        raise ValueError(f"communication interval must be 0, a positive integer or inf: {text!r}")
    return int(k)


class ConfigKey(NamedTuple):
    """Coordinates of one configuration; tuple order is the canonical sort order."""

    grid_w: int
    grid_h: int
    agents: int
    pattern: str
    comm_interval: float
    strategy: str
    alpha: float
    beta: float

    @property
    def block(self) -> tuple:
        """Everything except the strategy: the unit inside which strategies compete."""
        return self[:5] + self[6:]

    def feature(self, name: str):
        if name == "agents":
            return self.agents
        if name == "pattern":
            return self.pattern
        if name == "interval":
            return format_interval(self.comm_interval)
        if name == "grid":
            return f"{self.grid_w}x{self.grid_h}"
        if name == "noise":
            return noise_name(self.alpha, self.beta)
        raise ValueError(f"unknown feature {name!r}")


def trial_seed(base_seed: int, key: ConfigKey, trial: int) -> int:
    """Seed from configuration values and trial index.

    The strategy is deliberately left out, so every strategy in a block faces
    the same initial placements (common random numbers for paired tests).
    """
    text = "|".join([
        str(int(base_seed)), f"{key.grid_w}x{key.grid_h}", str(key.agents), key.pattern,
        format_interval(key.comm_interval), f"{key.alpha:.6g}", f"{key.beta:.6g}", str(trial),
    ])
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") & ((1 << 63) - 1)


@dataclass(frozen=True)
class SweepSpec:
    grids: Sequence[GridShape] = (GridShape(10, 10),)
    agents: Sequence[int] = (2,)
    patterns: Sequence[str] = ("stationary",)
    intervals: Sequence[float] = (5,)
    strategies: Sequence[str] = ("arithmetic", "visit_weighted")
    noise: Sequence[tuple[float, float]] = (NOISE_PROFILES["baseline"],)
    trials: int = 10
    base_seed: int = 0
    workers: int = 1
    max_steps: int = 2500
    horizon: int = 3
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        for p in self.patterns:
            Pattern(p)
        for s in self.strategies:
            MergeStrategy(s)
        for a, b in self.noise:
            SensorModel(a, b)
        for k in self.intervals:
            parse_interval(k)

    def keys(self) -> list[ConfigKey]:
        keys = {
            ConfigKey(g.width, g.height, int(n), Pattern(p).value, parse_interval(k),
                      MergeStrategy(s).value, float(a), float(b))
            for g, n, p, k, s, (a, b) in itertools.product(
                self.grids, self.agents, self.patterns, self.intervals, self.strategies, self.noise)
        }
        return sorted(keys)

    def sim_config(self, key: ConfigKey, trial: int) -> SimConfig:
        return SimConfig(
            shape=GridShape(key.grid_w, key.grid_h),
            num_agents=key.agents,
            sensor=SensorModel(key.alpha, key.beta),
            comm_interval=key.comm_interval,
            max_steps=self.max_steps,
            plan=PlanConfig(self.horizon),
            strategy=MergeStrategy(key.strategy),
            target_policy=TargetPolicy(Pattern(key.pattern)),
            seed=trial_seed(self.base_seed, key, trial),
            solver=self.solver,
        )


@dataclass(frozen=True)
class SweepRecord:
    key: ConfigKey
    trial: int
    record: TrialRecord


def _run_job(job: tuple[ConfigKey, int, SimConfig]) -> SweepRecord:
    key, trial, cfg = job
    try:
        rec = run_trial(cfg)
    except Exception:  # one broken trial must not sink the sweep
        log.exception("trial %s #%d failed", key, trial)
        rec = TrialRecord(False, None, cfg.seed, cfg.digest(), error_flag=True)
    return SweepRecord(key, trial, rec)


def run_sweep(spec: SweepSpec, progress=None) -> list[SweepRecord]:
    """Run every (configuration, trial) pair once; output in canonical order."""
    jobs = [(key, t, spec.sim_config(key, t)) for key in spec.keys() for t in range(spec.trials)]
    if spec.workers == 1:
        results = []
        for job in jobs:
            results.append(_run_job(job))
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * spec.workers))))
    return sorted(results, key=lambda r: (r.key, r.trial))


# -- aggregation -------------------------------------------------------------

@dataclass(frozen=True)
class AggregateStats:
    trials: int
    successes: int
    errors: int
    success_rate: float
    success_std: float
    mean_steps_failures_as_max: float
    mean_steps_successes_only: Optional[float]


def aggregate(records: Iterable[SweepRecord], max_steps: int = 2500) -> dict[ConfigKey, AggregateStats]:
    """Per-configuration success rate and both step-averaging conventions.

    Failed trials count as ``max_steps`` in the first mean and are dropped in
    the second, which is None when nothing succeeded.
    """
    groups: dict[ConfigKey, list[TrialRecord]] = defaultdict(list)
    for r in records:
        groups[r.key].append(r.record)
    out = {}
    for key in sorted(groups):
        recs = groups[key]
        ok = np.array([r.success for r in recs], dtype=float)
        steps = [r.steps_to_discovery for r in recs if r.success]
        as_max = [r.steps_to_discovery if r.success else max_steps for r in recs]
        out[key] = AggregateStats(
            trials=len(recs),
            successes=int(ok.sum()),
            errors=sum(r.error_flag for r in recs),
            success_rate=float(ok.mean()),
            success_std=float(ok.std()),
            mean_steps_failures_as_max=float(np.mean(as_max)),
            mean_steps_successes_only=float(np.mean(steps)) if steps else None,
        )
    return out


@dataclass
class WinCounts:
    """Wins per (feature value, strategy). A tied best awards every tied strategy;
    the *_ties counters record how many of those wins were shared."""

    feature: str
    success_wins: dict = field(default_factory=dict)
    efficiency_wins: dict = field(default_factory=dict)
    success_ties: dict = field(default_factory=dict)
    efficiency_ties: dict = field(default_factory=dict)
    blocks: int = 0

    def rows(self):
        keys = sorted(set(self.success_wins) | set(self.efficiency_wins), key=lambda k: (str(k[0]), k[1]))
        for fv, strat in keys:
            yield (fv, strat, self.success_wins.get((fv, strat), 0), self.efficiency_wins.get((fv, strat), 0),
                   self.success_ties.get((fv, strat), 0), self.efficiency_ties.get((fv, strat), 0))


def _winners(values: dict, best) -> list:
    target = best(values.values())
    return [s for s, v in values.items() if math.isclose(v, target, rel_tol=1e-12, abs_tol=1e-12)]


def win_counts(stats: dict[ConfigKey, AggregateStats], feature: str,
               exclude_extremes: bool = False) -> WinCounts:
    """Count per-block success and efficiency wins, grouped by ``feature``.

    Efficiency compares the failures-as-max mean steps. With
    ``exclude_extremes`` the k=0 and k=inf blocks are skipped.
    """
    blocks: dict[tuple, dict[str, AggregateStats]] = defaultdict(dict)
    fvals = {}
    for key, st in stats.items():
        if exclude_extremes and key.comm_interval in (0, math.inf):
            continue
        blocks[key.block][key.strategy] = st
        fvals[key.block] = key.feature(feature)
    wins = WinCounts(feature)
    strategy_sets = {frozenset(b) for b in blocks.values()}
    if len(strategy_sets) > 1:
        raise MisalignedBlocks("blocks were evaluated on different strategy sets")
    for block in sorted(blocks):
        entries = blocks[block]
        fv = fvals[block]
        wins.blocks += 1
        for counter, tie_counter, winners in (
            (wins.success_wins, wins.success_ties,
             _winners({s: st.success_rate for s, st in entries.items()}, max)),
            (wins.efficiency_wins, wins.efficiency_ties,
             _winners({s: st.mean_steps_failures_as_max for s, st in entries.items()}, min)),
        ):
            for s in entries:
                counter.setdefault((fv, s), 0)
                tie_counter.setdefault((fv, s), 0)
            for s in winners:
                counter[(fv, s)] += 1
                if len(winners) > 1:
                    tie_counter[(fv, s)] += 1
    return wins


def strategy_summary(stats: dict[ConfigKey, AggregateStats]) -> dict[str, dict]:
    """Per-strategy mean/std of configuration success rates and pooled steps."""
    by_strat = defaultdict(list)
    for key, st in stats.items():
        by_strat[key.strategy].append(st)
    out = {}
    for s in sorted(by_strat):
        sts = by_strat[s]
        rates = np.array([st.success_rate for st in sts])
        trials = sum(st.trials for st in sts)
        out[s] = {
            "configs": len(sts),
            "success_mean": float(rates.mean()),
            "success_std": float(rates.std()),
            "pooled_success_rate": sum(st.successes for st in sts) / trials,
            "pooled_mean_steps": sum(st.mean_steps_failures_as_max * st.trials for st in sts) / trials,
        }
    return out


# -- numeric vs analytic error study ------------------------------------------

class GridErrorRow(NamedTuple):
    cells: int
    strategy: str
    mean_excess: float
    min_excess: float
    max_excess: float
    floor_mass: float
    converged_fraction: float
    samples: int


def grid_error_experiment(sizes: Sequence[GridShape], trials: int = 5,
                          params: Optional[SolverParams] = None, agents: int = 2,
                          seed: int = 0) -> list[GridErrorRow]:
    """Objective excess of numeric merges over the closed-form optimum.

    Agent beliefs are symmetric Dirichlet(1) draws. The closed-form strategies
    are included as control rows and have zero excess by construction.
    """
    if not sizes:
        raise ValueError("need at least one grid size")
    params = params or SolverParams()
    rng = np.random.default_rng(seed)
    rows = []
    for shape in sizes:
        n = shape.size
        acc = defaultdict(list)
        conv = defaultdict(list)
        for _ in range(trials):
            beliefs = [Belief(shape, rng.dirichlet(np.ones(n))) for _ in range(agents)]
            fwd_opt = forward_kl_objective(beliefs, None, arithmetic_merge(beliefs))
            rev_opt = reverse_kl_objective(beliefs, None, geometric_merge(beliefs))
            fwd = numeric_forward_kl_merge(beliefs, None, params)
            rev = numeric_reverse_kl_merge(beliefs, None, params)
            acc["forward_kl"].append(forward_kl_objective(beliefs, None, fwd.belief) - fwd_opt)
            acc["reverse_kl"].append(reverse_kl_objective(beliefs, None, rev.belief) - rev_opt)
            conv["forward_kl"].append(fwd.converged)
            conv["reverse_kl"].append(rev.converged)
            acc["arithmetic"].append(forward_kl_objective(beliefs, None, arithmetic_merge(beliefs)) - fwd_opt)
            acc["geometric"].append(reverse_kl_objective(beliefs, None, geometric_merge(beliefs)) - rev_opt)
            conv["arithmetic"].append(True)
            conv["geometric"].append(True)
        for strat in ("forward_kl", "reverse_kl", "arithmetic", "geometric"):
            ex = np.array(acc[strat])
            numeric = strat in ("forward_kl", "reverse_kl")
            rows.append(GridErrorRow(
                cells=n,
                strategy=strat,
                mean_excess=float(ex.mean()),
                min_excess=float(ex.min()),
                max_excess=float(ex.max()),
                floor_mass=n * params.epsilon_floor if numeric else 0.0,
                converged_fraction=float(np.mean(conv[strat])),
                samples=trials,
            ))
    return rows
