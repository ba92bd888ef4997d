"""Decentralized multi-agent target tracking with KL-optimal belief fusion."""

from .belief import (
    Belief,
    GridShape,
    SensorModel,
    ShapeMismatch,
    ZeroEvidence,
    bayes_update,
    entropy,
    kl_divergence,
    observation_likelihood,
    uniform_belief,
)
from .merge import (
    MergeStrategy,
    SolverParams,
    arithmetic_merge,
    brute_force_simplex_min,
    forward_kl_objective,
    geometric_merge,
    numeric_forward_kl_merge,
    numeric_reverse_kl_merge,
    reverse_kl_objective,
    visit_weighted_merge,
    visit_weights,
)
from .planner import PlanConfig, expected_entropy_after, plan_best_action
from .sim import SimConfig, TrialRecord, run_trial
from .world import Action, AgentPose, Pattern, TargetPolicy, TargetState

__version__ = "0.1.0"
