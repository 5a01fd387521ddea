"""Decision-optimization toolkit for gate-admission evacuation planning."""

from .domain import (
    Action,
    ClaimModel,
    DirichletBelief,
    DomainError,
    EvacState,
    Level,
    ModelParams,
    PriorityCategory,
    StateSpace,
    TERMINAL,
)
from .dp import PolicyTable, ValueTable, solve
from .harness import MetricsTable, Trajectory, evaluate, generate_trajectories, run_episode
from .policies import EpisodeContext, Policy, PolicyKind, TableSet, decide, make_policy
from .pomcp import PlanDiagnostics, PlannerConfig, plan, step_belief

__version__ = "0.1.0"
