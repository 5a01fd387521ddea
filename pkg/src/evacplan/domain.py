"""Core problem model for the gate-admission evacuation decision problem.

Everything here is a plain value object: states, actions, model constants,
the arrival/claim/belief distributions, rewards, transitions, and the dense
state indexing used by the solvers. All objects are immutable after
construction; sampling functions take a caller-owned numpy Generator.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Action",
    "ClaimModel",
    "DirichletBelief",
    "DomainError",
    "EvacState",
    "FamilyMixture",
    "Level",
    "ModelParams",
    "PomcpParams",
    "PriorityCategory",
    "State",
    "StateSpace",
    "TERMINAL",
    "dirichlet_update",
    "family_size_pmf",
    "observed_reward",
    "population_prior",
    "posterior_true_given_claim",
    "reward",
    "sample_arrival",
    "sample_claim",
    "transition_outcomes",
]

N_CATEGORIES = 5


class DomainError(ValueError):
    """A domain contract was violated (bad state, bad distribution, ...)."""


class PriorityCategory(IntEnum):
    """Evacuee priority categories, highest priority first (code 0..4)."""

    AMCIT = 0
    SIV = 1
    P1P2 = 2
    VULNERABLE = 3
    ISISK = 4


CATEGORIES = tuple(PriorityCategory)
CATEGORY_NAMES = tuple(c.name for c in CATEGORIES)


class Action(IntEnum):
    REJECT = 0
    ACCEPT = 1


class Level(Enum):
    """The four compounding-uncertainty formulations."""

    I = "I"
    IIA = "IIa"
    IIB = "IIb"
    III = "III"


# Tag bytes used in table file headers.
LEVEL_TAGS = {Level.I: 1, Level.IIA: 2, Level.IIB: 3, Level.III: 4}
TAG_LEVELS = {v: k for k, v in LEVEL_TAGS.items()}


@dataclass(frozen=True)
class EvacState:
    """One gate decision point: seats left, steps left, and the family at the gate.

    ``category`` is the true category in fully observed settings and the
    *claimed* category wherever the state is an observation.
    """

    capacity: int
    time_left: int
    family_size: int
    category: PriorityCategory

    def is_preterminal(self) -> bool:
        """True when every action leads straight to TERMINAL with reward 0."""
        return self.capacity <= 0 or self.time_left == 0


class _Terminal:
    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - repr only
        return "TERMINAL"


TERMINAL = _Terminal()
State = Union[EvacState, _Terminal]

# probability vector over family sizes 1..f_max
FamilySizePMF = np.ndarray
# probability vector over the 5 categories
PopulationPrior = np.ndarray


@dataclass(frozen=True)
class FamilyMixture:
    """Mixture of truncated Gaussians over integer family sizes."""

    means: tuple[float, ...] = (8.0, 1.0)
    sds: tuple[float, ...] = (2.0, 0.6)
    weights: tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        if not (len(self.means) == len(self.sds) == len(self.weights)) or not self.means:
            raise DomainError("family mixture components must have matching nonzero lengths")
        if any(sd <= 0 for sd in self.sds):
            raise DomainError("family mixture sd must be positive")
        if any(w < 0 for w in self.weights):
            raise DomainError("family mixture weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise DomainError("family mixture weights must sum to 1")


@dataclass(frozen=True)
class PomcpParams:
    iterations: int = 500
    max_depth: int = 120
    ucb_c: float = 100.0

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("pomcp iterations must be >= 1")
        if self.max_depth < 1:
            raise DomainError("pomcp max_depth must be >= 1")


_DEFAULT_REWARDS = (100.0, 25.0, 5.0, 1.0, -500.0)
_DEFAULT_POPULATIONS = (14786.0, 123000.0, 604500.0, 1000000.0, 20.0)
# P(claimed | true), rows indexed by true category. Off-diagonal mass sits only
# on strictly higher-priority (lower-index) columns; nobody claims ISISK.
_DEFAULT_CLAIM_MATRIX = (
    (1.0, 0.0, 0.0, 0.0, 0.0),
    (0.01, 0.99, 0.0, 0.0, 0.0),
    (0.01, 0.14, 0.85, 0.0, 0.0),
    (0.001, 0.009, 0.24, 0.75, 0.0),
    (0.05, 0.10, 0.35, 0.50, 0.0),
)


@dataclass(frozen=True)
class ModelParams:
    """Every constant of the problem, JSON-loadable with full defaults.

    ``rewards``/``populations`` are tuples ordered by category code;
    index them with a :class:`PriorityCategory`.
    """

    c_max: int = 500
    t_max: int = 1200
    f_max: int = 13
    rewards: tuple[float, ...] = _DEFAULT_REWARDS
    populations: tuple[float, ...] = _DEFAULT_POPULATIONS
    p_board: float = 0.8
    epsilon: float = 1e-4
    gamma: float = 1.0
    family_mixture: FamilyMixture = field(default_factory=FamilyMixture)
    claim_matrix: tuple[tuple[float, ...], ...] = _DEFAULT_CLAIM_MATRIX
    dirichlet_scale: float = 1000.0
    pomcp: PomcpParams = field(default_factory=PomcpParams)
    threshold_t: int = 200

    def __post_init__(self):
        if self.c_max < 1 or self.t_max < 1 or not (1 <= self.f_max):
            raise DomainError("c_max, t_max must be >= 1 and f_max >= 1")
        if len(self.rewards) != N_CATEGORIES or len(self.populations) != N_CATEGORIES:
            raise DomainError("rewards and populations must cover the 5 categories")
        r = self.rewards
        if not (r[PriorityCategory.ISISK] < 0 < r[PriorityCategory.VULNERABLE]
                < r[PriorityCategory.P1P2] < r[PriorityCategory.SIV] < r[PriorityCategory.AMCIT]):
            raise DomainError("rewards must satisfy ISISK < 0 < VULNERABLE < P1P2 < SIV < AMCIT")
        if any(p < 0 for p in self.populations):
            raise DomainError("populations must be nonnegative")
        if not (0 < self.p_board <= 1):
            raise DomainError("p_board must lie in (0, 1]")
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        if self.gamma != 1.0:
            raise DomainError("gamma is fixed at 1.0")
        if self.dirichlet_scale <= 0:
            raise DomainError("dirichlet_scale must be positive")
        if self.threshold_t < 0:
            raise DomainError("threshold_t must be nonnegative")
        self._validate_claim_matrix()

    def _validate_claim_matrix(self):
        m = self.claim_matrix
        if len(m) != N_CATEGORIES or any(len(row) != N_CATEGORIES for row in m):
            raise DomainError("claim_matrix must be 5x5")
        for v, row in enumerate(m):
            if any(p < 0 for p in row):
                raise DomainError("claim_matrix entries must be nonnegative")
            if abs(sum(row) - 1.0) > 1e-12:
                raise DomainError(f"claim_matrix row {CATEGORY_NAMES[v]} must sum to 1")
            for o, p in enumerate(row):
                if o > v and p != 0.0:
                    raise DomainError(
                        "claims may only move to strictly higher-priority categories "
                        f"(row {CATEGORY_NAMES[v]} has mass on {CATEGORY_NAMES[o]})"
                    )
            if v == PriorityCategory.ISISK and row[v] != 0.0:
                raise DomainError("the ISISK row must place zero mass on ISISK")

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "c_max": self.c_max,
            "t_max": self.t_max,
            "f_max": self.f_max,
            "rewards": {name: self.rewards[i] for i, name in enumerate(CATEGORY_NAMES)},
            "populations": {name: self.populations[i] for i, name in enumerate(CATEGORY_NAMES)},
            "p_board": self.p_board,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "family_mixture": {
                "means": list(self.family_mixture.means),
                "sds": list(self.family_mixture.sds),
                "weights": list(self.family_mixture.weights),
            },
            "claim_matrix": [list(row) for row in self.claim_matrix],
            "dirichlet_scale": self.dirichlet_scale,
            "pomcp": {
                "iterations": self.pomcp.iterations,
                "max_depth": self.pomcp.max_depth,
                "ucb_c": self.pomcp.ucb_c,
            },
            "threshold_t": self.threshold_t,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelParams":
        known = {
            "c_max", "t_max", "f_max", "rewards", "populations", "p_board", "epsilon",
            "gamma", "family_mixture", "claim_matrix", "dirichlet_scale", "pomcp", "threshold_t",
        }
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in ("c_max", "t_max", "f_max", "threshold_t"):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ("p_board", "epsilon", "gamma", "dirichlet_scale"):
            if key in data:
                kwargs[key] = float(data[key])
        for key in ("rewards", "populations"):
            if key in data:
                kwargs[key] = _category_map_to_tuple(key, data[key])
        if "family_mixture" in data:
            fm = dict(data["family_mixture"])
            bad = set(fm) - {"means", "sds", "weights"}
            if bad:
                raise DomainError(f"unknown family_mixture keys: {sorted(bad)}")
            kwargs["family_mixture"] = FamilyMixture(
                means=tuple(float(x) for x in fm.get("means", FamilyMixture.means)),
                sds=tuple(float(x) for x in fm.get("sds", FamilyMixture.sds)),
                weights=tuple(float(x) for x in fm.get("weights", FamilyMixture.weights)),
            )
        if "claim_matrix" in data:
            kwargs["claim_matrix"] = tuple(
                tuple(float(x) for x in row) for row in data["claim_matrix"]
            )
        if "pomcp" in data:
            pc = dict(data["pomcp"])
            bad = set(pc) - {"iterations", "max_depth", "ucb_c"}
            if bad:
                raise DomainError(f"unknown pomcp keys: {sorted(bad)}")
            defaults = PomcpParams()
            kwargs["pomcp"] = PomcpParams(
                iterations=int(pc.get("iterations", defaults.iterations)),
                max_depth=int(pc.get("max_depth", defaults.max_depth)),
                ucb_c=float(pc.get("ucb_c", defaults.ucb_c)),
            )
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise DomainError("config root must be a JSON object")
        return cls.from_dict(data)

    def digest(self) -> bytes:
        """32-byte sha256 over the model constants that determine tables and
        trajectories. Planner iteration knobs and the heuristic threshold are
        excluded: they tune how tables are used, not what they contain."""
        data = self.to_dict()
        del data["pomcp"]
        del data["threshold_t"]
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).digest()


def _category_map_to_tuple(what: str, data: Mapping) -> tuple[float, ...]:
    unknown = set(data) - set(CATEGORY_NAMES)
    if unknown:
        raise DomainError(f"unknown {what} keys: {sorted(unknown)}")
    defaults = _DEFAULT_REWARDS if what == "rewards" else _DEFAULT_POPULATIONS
    return tuple(float(data.get(name, defaults[i])) for i, name in enumerate(CATEGORY_NAMES))


# --- distributions ------------------------------------------------------


def _normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def family_size_pmf(params: ModelParams) -> FamilySizePMF:
    """Integer family-size distribution on 1..f_max.

    Each Gaussian component is binned over [f-0.5, f+0.5], truncated and
    normalized on the support, then the components are mixed.
    """
    mix = params.family_mixture
    sizes = np.arange(1, params.f_max + 1)
    pmf = np.zeros(params.f_max)
    for w, mu, sd in zip(mix.weights, mix.means, mix.sds):
        comp = np.array(
            [_normal_cdf((f + 0.5 - mu) / sd) - _normal_cdf((f - 0.5 - mu) / sd) for f in sizes]
        )
        total = comp.sum()
        if total <= 0:
            raise DomainError("family mixture component has no mass on the support")
        pmf += w * (comp / total)
    pmf /= pmf.sum()
    pmf.setflags(write=False)
    return pmf


def population_prior(params: ModelParams) -> PopulationPrior:
    counts = np.asarray(params.populations, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise DomainError("population counts must not all be zero")
    prior = counts / total
    prior.setflags(write=False)
    return prior


@dataclass(frozen=True)
class ClaimModel:
    """Forward claim distribution plus its Bayes inverse against a prior.

    ``posterior[o]`` is P(true | claimed=o). Rows whose claimed category has
    zero marginal probability are filled with a point mass on the claimed
    category itself so dense tables can be built; the public
    :func:`posterior_true_given_claim` still rejects those queries.
    """

    forward: np.ndarray  # (5, 5) P(claimed | true), rows = true
    prior: np.ndarray  # (5,)
    posterior: np.ndarray  # (5, 5) P(true | claimed), rows = claimed
    claim_marginal: np.ndarray  # (5,) P(claimed)

    @classmethod
    def from_params(cls, params: ModelParams, prior: PopulationPrior | None = None) -> "ClaimModel":
        fwd = np.asarray(params.claim_matrix, dtype=float)
        pri = population_prior(params) if prior is None else np.asarray(prior, dtype=float)
        return cls.build(fwd, pri)

    @classmethod
    def build(cls, forward: np.ndarray, prior: np.ndarray) -> "ClaimModel":
        forward = np.asarray(forward, dtype=float)
        prior = np.asarray(prior, dtype=float)
        joint = forward * prior[:, None]  # joint[true, claimed]
        marginal = joint.sum(axis=0)
        posterior = np.zeros((N_CATEGORIES, N_CATEGORIES))
        for o in range(N_CATEGORIES):
            if marginal[o] > 0:
                posterior[o] = joint[:, o] / marginal[o]
            else:
                posterior[o, o] = 1.0
        for arr in (forward, prior, posterior, marginal):
            arr.setflags(write=False)
        return cls(forward=forward, prior=prior, posterior=posterior, claim_marginal=marginal)


def posterior_true_given_claim(
    claimed: PriorityCategory, pop: PopulationPrior, claim: ClaimModel
) -> np.ndarray:
    """P(true | claimed) by Bayes' rule against the given prior."""
    pop = np.asarray(pop, dtype=float)
    likelihood = claim.forward[:, claimed] * pop
    marginal = likelihood.sum()
    if marginal <= 0:
        raise DomainError(
            f"claimed category {PriorityCategory(claimed).name} has zero marginal probability"
        )
    return likelihood / marginal


@dataclass(frozen=True)
class DirichletBelief:
    """Dirichlet pseudo-counts over the 5 categories; all entries > 0."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (N_CATEGORIES,):
            raise DomainError("belief must have one pseudo-count per category")
        if not np.all(alpha > 0):
            raise DomainError("belief pseudo-counts must be strictly positive")
        alpha = alpha.copy()
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_params(cls, params: ModelParams) -> "DirichletBelief":
        return cls(np.asarray(params.populations, dtype=float) / params.dirichlet_scale)

    def mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum()

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.dirichlet(self.alpha)


def dirichlet_update(
    belief: DirichletBelief,
    evidence: Union[PriorityCategory, int, Sequence[float], np.ndarray],
) -> DirichletBelief:
    """Conjugate update: hard evidence adds 1 to one category, soft evidence adds weights."""
    alpha = belief.alpha.copy()
    if isinstance(evidence, (int, np.integer)):
        alpha[int(evidence)] += 1.0
        return DirichletBelief(alpha)
    weights = np.asarray(evidence, dtype=float)
    if weights.shape != (N_CATEGORIES,):
        raise DomainError("soft evidence must have one weight per category")
    if np.any(weights < 0):
        raise DomainError("soft evidence weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise DomainError("soft evidence weights must sum to 1")
    return DirichletBelief(alpha + weights)


# --- rewards and transitions --------------------------------------------


def _require_nonterminal(state: State) -> EvacState:
    if isinstance(state, _Terminal):
        raise DomainError("operation is undefined on the terminal state")
    return state


def reward(state: State, action: Action, params: ModelParams) -> float:
    """Immediate reward: family size times the category reward plus the tie bonus."""
    s = _require_nonterminal(state)
    if action == Action.REJECT or s.is_preterminal():
        return 0.0
    return s.family_size * params.rewards[s.category] + params.epsilon


def observed_reward(
    obs_state: State, action: Action, claim: ClaimModel, params: ModelParams
) -> float:
    """Expected reward given only the claimed category, weighting by P(true | claimed)."""
    s = _require_nonterminal(obs_state)
    if action == Action.REJECT or s.is_preterminal():
        return 0.0
    post = posterior_true_given_claim(s.category, claim.prior, claim)
    return s.family_size * float(post @ np.asarray(params.rewards)) + params.epsilon


def transition_outcomes(
    state: State,
    action: Action,
    pop: PopulationPrior,
    fam: FamilySizePMF,
    params: ModelParams,
) -> list[tuple[State, float]]:
    """All successor states with probabilities; probabilities sum to 1."""
    s = _require_nonterminal(state)
    if s.is_preterminal():
        return [(TERMINAL, 1.0)]
    t_next = s.time_left - 1
    outcomes: list[tuple[State, float]] = []
    terminal_mass = 0.0

    def spread(capacity: int, mass: float):
        nonlocal terminal_mass
        if mass <= 0:
            return
        if capacity <= 0 or t_next == 0:
            terminal_mass += mass
            return
        for f_idx, pf in enumerate(fam):
            if pf == 0:
                continue
            for v in CATEGORIES:
                pv = pop[v]
                if pv == 0:
                    continue
                outcomes.append(
                    (EvacState(capacity, t_next, f_idx + 1, v), mass * pf * pv)
                )

    if action == Action.ACCEPT:
        spread(s.capacity - s.family_size, params.p_board)
        spread(s.capacity, 1.0 - params.p_board)
    else:
        spread(s.capacity, 1.0)
    if terminal_mass > 0:
        outcomes.append((TERMINAL, terminal_mass))
    return outcomes


# --- sampling -----------------------------------------------------------


def sample_arrival(
    rng: np.random.Generator, pop: PopulationPrior, fam: FamilySizePMF
) -> tuple[int, PriorityCategory]:
    """Draw the next family at the gate: size ~ fam, true category ~ pop, independent."""
    f = int(np.searchsorted(np.cumsum(fam), rng.random(), side="right")) + 1
    f = min(f, len(fam))
    v = int(np.searchsorted(np.cumsum(pop), rng.random(), side="right"))
    return f, PriorityCategory(min(v, N_CATEGORIES - 1))


def sample_claim(
    rng: np.random.Generator, true_v: PriorityCategory, claim: ClaimModel
) -> PriorityCategory:
    row = claim.forward[true_v]
    o = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    return PriorityCategory(min(o, N_CATEGORIES - 1))


# --- state indexing -------------------------------------------------------


class StateSpace:
    """Dense bijection between states and [0, total); TERMINAL maps to the last index.

    Index order is row-major in (capacity, time, family, category), matching
    the table file payload order.
    """

    def __init__(self, params: ModelParams):
        self.c_lo = 1 - params.f_max  # lowest reachable capacity after an over-capacity accept
        self.c_hi = params.c_max
        self.n_c = self.c_hi - self.c_lo + 1
        self.n_t = params.t_max + 1
        self.n_f = params.f_max
        self.n_v = N_CATEGORIES
        self.grid = self.n_c * self.n_t * self.n_f * self.n_v
        self.total = self.grid + 1

    def state_index(self, state: State) -> int:
        if isinstance(state, _Terminal):
            return self.grid
        if not (self.c_lo <= state.capacity <= self.c_hi):
            raise DomainError(f"capacity {state.capacity} out of range")
        if not (0 <= state.time_left < self.n_t):
            raise DomainError(f"time {state.time_left} out of range")
        if not (1 <= state.family_size <= self.n_f):
            raise DomainError(f"family size {state.family_size} out of range")
        c = state.capacity - self.c_lo
        return (
            ((c * self.n_t + state.time_left) * self.n_f + state.family_size - 1) * self.n_v
            + int(state.category)
        )

    def index_state(self, index: int) -> State:
        if not (0 <= index <= self.grid):
            raise DomainError(f"state index {index} out of range")
        if index == self.grid:
            return TERMINAL
        index, v = divmod(index, self.n_v)
        index, f = divmod(index, self.n_f)
        c, t = divmod(index, self.n_t)
        return EvacState(c + self.c_lo, t, f + 1, PriorityCategory(v))
