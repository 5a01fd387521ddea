"""Exact finite-horizon backward induction for the fully-observed and
claim-weighted formulations, producing dense value and policy tables.

The solve exploits i.i.d. arrivals: the continuation value only depends on
(capacity, time), so one pass keeps a marginal table ``W(c, t)`` = expected
value over the next arrival, and every state value is
``max(W(c, t-1), accept_reward + p_board*W(c-f, t-1) + (1-p_board)*W(c, t-1))``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import (
    Action,
    ClaimModel,
    DomainError,
    EvacState,
    Level,
    LEVEL_TAGS,
    ModelParams,
    N_CATEGORIES,
    State,
    StateSpace,
    TAG_LEVELS,
    TERMINAL,
    _Terminal,
    family_size_pmf,
    population_prior,
)

POLICY_MAGIC = b"EVPT"
VALUE_MAGIC = b"EVVT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHB32s4I")


def _level_inputs(level: Level, params: ModelParams, claim: ClaimModel | None = None):
    """Immediate ACCEPT rewards by (f, category) and the arrival category weights."""
    fam = family_size_pmf(params)
    sizes = np.arange(1, params.f_max + 1, dtype=float)
    rewards = np.asarray(params.rewards)
    if level == Level.I:
        per_person = rewards
        cat_weights = population_prior(params)
    elif level == Level.IIB:
        if claim is None:
            claim = ClaimModel.from_params(params)
        per_person = claim.posterior @ rewards  # expected true reward per claimed category
        cat_weights = claim.claim_marginal
    else:
        raise DomainError(f"exact solve supports levels I and IIb, not {level.value}")
    accept_reward = sizes[:, None] * per_person[None, :] + params.epsilon
    return accept_reward, fam, cat_weights


def _marginal(values_cfv: np.ndarray, arrival_weights: np.ndarray) -> np.ndarray:
    """E over the next arrival of V(c, ., f, v); shared by solve and load."""
    return np.einsum("cfv,fv->c", values_cfv, arrival_weights)


@dataclass(eq=False)
class ValueTable:
    """Optimal values, stored via the continuation marginal ``w[c_idx, t]``.

    Dense per-state values are derived on demand; they are exactly
    ``max(q_accept, q_reject)`` recomputed from ``w``, which is what the
    induction stored in the first place.
    """

    level: Level
    params: ModelParams
    space: StateSpace
    w: np.ndarray  # (n_c, n_t) continuation values, rows c_lo..c_max
    accept_reward: np.ndarray  # (f_max, 5) immediate ACCEPT reward
    arrival_weights: np.ndarray  # (f_max, 5) next-arrival probabilities
    digest: bytes

    def continuation(self, capacity: int, time_left: int) -> float:
        c = min(max(capacity, self.space.c_lo), self.space.c_hi)
        return float(self.w[c - self.space.c_lo, time_left])

    def q_values(self, state: State) -> tuple[float, float]:
        if isinstance(state, _Terminal):
            raise DomainError("q_values is undefined on the terminal state")
        self.space.state_index(state)  # range check
        if state.is_preterminal():
            return 0.0, 0.0
        w_prev = self.w[:, state.time_left - 1]
        c_idx = state.capacity - self.space.c_lo
        q_reject = float(w_prev[c_idx])
        q_accept = float(
            self.accept_reward[state.family_size - 1, state.category]
            + self.params.p_board * w_prev[c_idx - state.family_size]
            + (1.0 - self.params.p_board) * w_prev[c_idx]
        )
        return q_accept, q_reject

    def value(self, state: State) -> float:
        if isinstance(state, _Terminal):
            return 0.0
        q_accept, q_reject = self.q_values(state)
        return max(q_accept, q_reject)

    def dense_slice(self, c_idx: int) -> np.ndarray:
        """Values for one capacity row, shape (n_t, f_max, 5)."""
        sp = self.space
        out = np.zeros((sp.n_t, sp.n_f, sp.n_v))
        if c_idx < sp.n_f:  # capacity <= 0
            return out
        w_prev = self.w[:, : sp.n_t - 1]
        q_reject = w_prev[c_idx][:, None, None]
        f_idx = np.arange(1, sp.n_f + 1)
        q_accept = (
            self.accept_reward[None, :, :]
            + self.params.p_board * w_prev[c_idx - f_idx].T[:, :, None]
            + (1.0 - self.params.p_board) * q_reject
        )
        out[1:] = np.maximum(q_accept, q_reject)
        return out

    def dense(self) -> np.ndarray:
        """Materialize all per-state values, shape (n_c, n_t, f_max, 5)."""
        sp = self.space
        out = np.empty((sp.n_c, sp.n_t, sp.n_f, sp.n_v))
        for c_idx in range(sp.n_c):
            out[c_idx] = self.dense_slice(c_idx)
        return out


@dataclass(eq=False)
class PolicyTable:
    """Dense optimal actions; pre-terminal and terminal states hold REJECT."""

    level: Level
    space: StateSpace
    actions: np.ndarray  # (n_c, n_t, f_max, 5) uint8
    digest: bytes

    def lookup(self, state: State) -> Action:
        if isinstance(state, _Terminal):
            return Action.REJECT
        self.space.state_index(state)  # range check
        return Action(
            int(
                self.actions[
                    state.capacity - self.space.c_lo,
                    state.time_left,
                    state.family_size - 1,
                    state.category,
                ]
            )
        )

    def policy_grid(self, capacity: int, time_left: int) -> np.ndarray:
        """Action matrix over (family size, category) at one (capacity, time)."""
        sp = self.space
        if not (sp.c_lo <= capacity <= sp.c_hi) or not (0 <= time_left < sp.n_t):
            raise DomainError("policy_grid point out of range")
        return self.actions[capacity - sp.c_lo, time_left].copy()


def solve(
    level: Level, params: ModelParams, claim: ClaimModel | None = None
) -> tuple[ValueTable, PolicyTable]:
    """Backward induction over t = 1..t_max; ACCEPT wins exact Q ties.

    ``claim`` overrides the claim model built from params (Level IIb only);
    tables solved with an override still carry the params digest, so the
    caller owns consistency.
    """
    space = StateSpace(params)
    accept_reward, fam, cat_weights = _level_inputs(level, params, claim)
    arrival_weights = np.ascontiguousarray(fam[:, None] * cat_weights[None, :])

    w = np.zeros((space.n_c, space.n_t))
    actions = np.zeros((space.n_c, space.n_t, space.n_f, space.n_v), dtype=np.uint8)
    live = np.arange(space.n_f, space.n_c)  # rows with capacity >= 1
    f_off = np.arange(1, space.n_f + 1)
    gather = live[:, None] - f_off[None, :]  # capacity index after boarding f
    p = params.p_board

    for t in range(1, space.n_t):
        w_prev = w[:, t - 1]
        q_reject = w_prev[live][:, None, None]
        q_accept = (
            accept_reward[None, :, :]
            + p * w_prev[gather][:, :, None]
            + (1.0 - p) * q_reject
        )
        values = np.maximum(q_accept, q_reject)
        actions[live, t] = q_accept >= q_reject
        w[live, t] = _marginal(np.ascontiguousarray(values), arrival_weights)

    digest = params.digest()
    value_table = ValueTable(
        level=level,
        params=params,
        space=space,
        w=w,
        accept_reward=accept_reward,
        arrival_weights=arrival_weights,
        digest=digest,
    )
    policy_table = PolicyTable(level=level, space=space, actions=actions, digest=digest)
    return value_table, policy_table


# --- module-level op aliases ---------------------------------------------


def lookup(policy: PolicyTable, state: State) -> Action:
    return policy.lookup(state)


def q_values(value: ValueTable, state: State, params: ModelParams | None = None) -> tuple[float, float]:
    if params is not None and params.digest() != value.digest:
        raise DomainError("params digest does not match the value table")
    return value.q_values(state)


def policy_grid(policy: PolicyTable, capacity: int, time_left: int) -> np.ndarray:
    return policy.policy_grid(capacity, time_left)


# --- persistence -----------------------------------------------------------


def _write_header(fh, magic: bytes, level: Level, digest: bytes, space: StateSpace):
    fh.write(
        _HEADER.pack(
            magic, FORMAT_VERSION, LEVEL_TAGS[level], digest,
            space.n_c, space.n_t, space.n_f, space.n_v,
        )
    )


def _read_header(fh, magic: bytes, params: ModelParams) -> tuple[Level, StateSpace, bytes]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise DomainError("truncated table header")
    got_magic, version, tag, digest, n_c, n_t, n_f, n_v = _HEADER.unpack(raw)
    if got_magic != magic:
        raise DomainError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise DomainError(f"unsupported table format version {version}")
    if tag not in TAG_LEVELS:
        raise DomainError(f"unknown level tag {tag}")
    if digest != params.digest():
        raise DomainError("table was built under different model params (digest mismatch)")
    space = StateSpace(params)
    if (n_c, n_t, n_f, n_v) != (space.n_c, space.n_t, space.n_f, space.n_v):
        raise DomainError("table dimensions do not match the model params")
    return TAG_LEVELS[tag], space, digest


def save(table, path) -> None:
    """Write a policy or value table; the magic in the header tells them apart."""
    if isinstance(table, PolicyTable):
        save_policy(table, path)
    elif isinstance(table, ValueTable):
        save_value(table, path)
    else:
        raise DomainError(f"cannot save object of type {type(table).__name__}")


def load(path, params: ModelParams):
    """Read back whichever table kind the file holds."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == POLICY_MAGIC:
        return load_policy(path, params)
    if magic == VALUE_MAGIC:
        return load_value(path, params)
    raise DomainError(f"unrecognized table magic {magic!r}")


def save_policy(policy: PolicyTable, path) -> None:
    with open(path, "wb") as fh:
        _write_header(fh, POLICY_MAGIC, policy.level, policy.digest, policy.space)
        fh.write(np.ascontiguousarray(policy.actions).tobytes())


def load_policy(path, params: ModelParams) -> PolicyTable:
    with open(path, "rb") as fh:
        level, space, digest = _read_header(fh, POLICY_MAGIC, params)
        payload = fh.read(space.grid)
        if len(payload) != space.grid:
            raise DomainError("truncated policy payload")
        actions = np.frombuffer(payload, dtype=np.uint8).reshape(
            space.n_c, space.n_t, space.n_f, space.n_v
        ).copy()
    if actions.max(initial=0) > 1:
        raise DomainError("policy payload contains invalid action codes")
    return PolicyTable(level=level, space=space, actions=actions, digest=digest)


def save_value(value: ValueTable, path) -> None:
    """Dense little-endian float64 payload in (c, t, f, v) order, one row at a time."""
    with open(path, "wb") as fh:
        _write_header(fh, VALUE_MAGIC, value.level, value.digest, value.space)
        for c_idx in range(value.space.n_c):
            fh.write(np.ascontiguousarray(value.dense_slice(c_idx), dtype="<f8").tobytes())


def load_value(path, params: ModelParams) -> ValueTable:
    with open(path, "rb") as fh:
        level, space, digest = _read_header(fh, VALUE_MAGIC, params)
        payload = fh.read(space.grid * 8)
        if len(payload) != space.grid * 8:
            raise DomainError("truncated value payload")
    dense = np.frombuffer(payload, dtype="<f8").reshape(
        space.n_c, space.n_t, space.n_f, space.n_v
    )
    accept_reward, fam, cat_weights = _level_inputs(level, params)
    arrival_weights = np.ascontiguousarray(fam[:, None] * cat_weights[None, :])
    w = np.zeros((space.n_c, space.n_t))
    for t in range(1, space.n_t):
        w[:, t] = _marginal(np.ascontiguousarray(dense[:, t]), arrival_weights)
    return ValueTable(
        level=level,
        params=params,
        space=space,
        w=w,
        accept_reward=accept_reward,
        arrival_weights=arrival_weights,
        digest=digest,
    )
