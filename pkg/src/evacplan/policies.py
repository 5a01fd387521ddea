"""Uniform policy interface: the eight heuristic baselines plus wrappers
exposing the four optimized levels.

Every policy sees only the observed state (the category field is the claimed
one). Per-episode mutable state (belief, step counter) lives in an
EpisodeContext owned by a single episode; decisions are deterministic given
(kind, tables, episode seed, step).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .domain import (
    Action,
    ClaimModel,
    DirichletBelief,
    DomainError,
    EvacState,
    Level,
    ModelParams,
    PriorityCategory,
    population_prior,
)
from .dp import PolicyTable, ValueTable
from .pomcp import PlanDiagnostics, PlannerConfig, plan, step_belief

__all__ = ["PolicyKind", "TableSet", "Policy", "EpisodeContext", "make_policy", "decide", "observe", "derive_seed"]


class PolicyKind(Enum):
    LEVEL_I = "level_i"
    LEVEL_IIA = "level_iia"
    LEVEL_IIB = "level_iib"
    LEVEL_III = "level_iii"
    AFTER_THRESHOLD_AMCITS = "after_threshold_amcits"
    BEFORE_THRESHOLD_AMCITS = "before_threshold_amcits"
    AMCITS = "amcits"
    SIV_AMCITS = "siv_amcits"
    SIV_AMCITS_P1P2 = "siv_amcits_p1p2"
    NON_ISISK = "non_isisk"
    ACCEPT_ALL = "accept_all"
    RANDOM = "random"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DomainError(f"unknown policy kind {name!r}") from None


_PLANNER_LEVEL = {PolicyKind.LEVEL_IIA: Level.IIA, PolicyKind.LEVEL_III: Level.III}
_ACCEPT_SETS = {
    PolicyKind.AMCITS: {PriorityCategory.AMCIT},
    PolicyKind.SIV_AMCITS: {PriorityCategory.AMCIT, PriorityCategory.SIV},
    PolicyKind.SIV_AMCITS_P1P2: {
        PriorityCategory.AMCIT, PriorityCategory.SIV, PriorityCategory.P1P2,
    },
}


@dataclass
class TableSet:
    """Solved tables shared by policies, the CLI, and the exercise service."""

    policy_i: PolicyTable | None = None
    value_i: ValueTable | None = None
    policy_iib: PolicyTable | None = None
    value_iib: ValueTable | None = None


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from the given parts; independent of hash randomization."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode())
        h.update(b"|")
    return int.from_bytes(h.digest(), "little")


@dataclass
class EpisodeContext:
    """Per-episode mutable state; owned by exactly one episode at a time."""

    episode_seed: int
    belief: DirichletBelief | None = None
    step: int = 0
    last_plan: PlanDiagnostics | None = None


@dataclass
class Policy:
    kind: PolicyKind
    params: ModelParams
    tables: TableSet = field(default_factory=TableSet)
    claim: ClaimModel | None = None
    prior: np.ndarray | None = None

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def planner_level(self) -> Level | None:
        return _PLANNER_LEVEL.get(self.kind)

    def new_context(self, episode_seed: int) -> EpisodeContext:
        ctx = EpisodeContext(episode_seed=episode_seed)
        if self.planner_level is not None:
            ctx.belief = DirichletBelief.from_params(self.params)
        return ctx


def make_policy(kind: PolicyKind, params: ModelParams, tables: TableSet | None = None) -> Policy:
    tables = tables or TableSet()
    needs_policy_i = kind in (
        PolicyKind.LEVEL_I,
        PolicyKind.AFTER_THRESHOLD_AMCITS,
        PolicyKind.BEFORE_THRESHOLD_AMCITS,
    )
    if needs_policy_i and tables.policy_i is None:
        raise DomainError(f"policy kind {kind.value} requires the solved Level I policy table")
    if kind == PolicyKind.LEVEL_IIB and tables.policy_iib is None:
        raise DomainError("policy kind level_iib requires the solved Level IIb policy table")
    if kind == PolicyKind.LEVEL_IIA and tables.value_i is None:
        raise DomainError("policy kind level_iia requires the solved Level I value table")
    if kind == PolicyKind.LEVEL_III and tables.value_iib is None:
        raise DomainError("policy kind level_iii requires the solved Level IIb value table")
    digest = params.digest()
    for table in (tables.policy_i, tables.value_i, tables.policy_iib, tables.value_iib):
        if table is not None and table.digest != digest:
            raise DomainError("table digest does not match the model params")
    claim = prior = None
    if kind in (PolicyKind.LEVEL_IIA, PolicyKind.LEVEL_III):
        claim = ClaimModel.from_params(params)
        prior = population_prior(params)
    return Policy(kind=kind, params=params, tables=tables, claim=claim, prior=prior)


def decide(policy: Policy, obs_state: EvacState, ctx: EpisodeContext) -> Action:
    """Action for the observed arrival; the state's category is the claimed one."""
    kind = policy.kind
    claimed = obs_state.category
    if kind in _ACCEPT_SETS:
        return Action.ACCEPT if claimed in _ACCEPT_SETS[kind] else Action.REJECT
    if kind == PolicyKind.NON_ISISK:
        return Action.ACCEPT if claimed != PriorityCategory.ISISK else Action.REJECT
    if kind == PolicyKind.ACCEPT_ALL:
        return Action.ACCEPT
    if kind == PolicyKind.RANDOM:
        # dedicated per-step stream so trajectory replay is never perturbed
        u = np.random.default_rng(derive_seed(ctx.episode_seed, "random", ctx.step)).random()
        return Action.ACCEPT if u < 0.5 else Action.REJECT
    if kind == PolicyKind.AFTER_THRESHOLD_AMCITS:
        if obs_state.time_left > policy.params.threshold_t:
            return policy.tables.policy_i.lookup(obs_state)
        return Action.ACCEPT if claimed == PriorityCategory.AMCIT else Action.REJECT
    if kind == PolicyKind.BEFORE_THRESHOLD_AMCITS:
        if obs_state.time_left > policy.params.threshold_t:
            return Action.ACCEPT if claimed == PriorityCategory.AMCIT else Action.REJECT
        return policy.tables.policy_i.lookup(obs_state)
    if kind == PolicyKind.LEVEL_I:
        return policy.tables.policy_i.lookup(obs_state)
    if kind == PolicyKind.LEVEL_IIB:
        return policy.tables.policy_iib.lookup(obs_state)
    level = policy.planner_level
    value = policy.tables.value_i if level == Level.IIA else policy.tables.value_iib
    cfg = PlannerConfig.from_params(
        policy.params, seed=derive_seed(ctx.episode_seed, "plan", ctx.step)
    )
    action, diag = plan(level, ctx.belief, obs_state, value, cfg, policy.params)
    ctx.last_plan = diag
    return action


def observe(policy: Policy, ctx: EpisodeContext, arrival: tuple[int, PriorityCategory]) -> None:
    """Fold the just-decided arrival into the episode context."""
    level = policy.planner_level
    if level is not None:
        ctx.belief = step_belief(level, ctx.belief, arrival, policy.claim, policy.prior)
    ctx.step += 1
