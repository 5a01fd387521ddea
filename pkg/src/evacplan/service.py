"""Session-based HTTP+JSON API for the human training exercise.

A session walks one pre-sampled trajectory: the human sees each arrival's
claimed category and family size (never the true category), accepts or
rejects, and can consult the advisor policy's recommendation. The final
debrief replays the advisor on the identical trajectory and compares totals
by true category. Sessions are in-memory, expire after an idle TTL, and all
mutation is serialized per session.
"""
from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict

from . import harness
from .domain import (
    Action,
    CATEGORY_NAMES,
    ClaimModel,
    DomainError,
    EvacState,
    Level,
    ModelParams,
    N_CATEGORIES,
    PriorityCategory,
)
from .policies import EpisodeContext, Policy, PolicyKind, TableSet, decide, make_policy, observe

__all__ = ["create_app", "ApiError"]

# config override keys that do not touch the solved tables' digest
_OVERRIDABLE_KEYS = {"pomcp", "threshold_t"}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    advisor: str | None = None
    level: str | None = None
    seed: int | None = None
    config: dict | None = None


class DecisionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    action: str
    cursor: int | None = None


@dataclass
class Session:
    id: str
    params: ModelParams
    policy: Policy
    trajectory: harness.Trajectory
    ctx: EpisodeContext
    claim: ClaimModel
    cursor: int = 0
    capacity: int = 0
    reward_total: float = 0.0
    accepted_total: int = 0
    accepted_people: np.ndarray = dc_field(default_factory=lambda: np.zeros(N_CATEGORIES, np.int64))
    arrived_people: np.ndarray = dc_field(default_factory=lambda: np.zeros(N_CATEGORIES, np.int64))
    history: list[dict] = dc_field(default_factory=list)
    status: str = "active"
    last_touch: float = 0.0
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    recommendations: dict[int, dict] = dc_field(default_factory=dict)


class SessionRegistry:
    def __init__(self, params: ModelParams, tables: TableSet, ttl: float):
        self.params = params
        self.tables = tables
        self.ttl = ttl
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _purge(self, now: float) -> None:
        dead = [sid for sid, s in self._sessions.items() if now - s.last_touch > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def create(self, request: CreateSessionRequest) -> Session:
        kind_name = request.advisor or request.level or PolicyKind.LEVEL_I.value
        try:
            kind = PolicyKind.parse(kind_name)
        except DomainError as exc:
            raise ApiError(400, "unknown_kind", str(exc)) from None
        params = self.params
        if request.config:
            bad = set(request.config) - _OVERRIDABLE_KEYS
            if bad:
                raise ApiError(
                    400, "config_not_overridable",
                    f"only {sorted(_OVERRIDABLE_KEYS)} may be overridden per session, got {sorted(bad)}",
                )
            merged = params.to_dict()
            merged.update(request.config)
            try:
                params = ModelParams.from_dict(merged)
            except DomainError as exc:
                raise ApiError(400, "bad_config", str(exc)) from None
        try:
            policy = make_policy(kind, params, self.tables)
        except DomainError as exc:
            raise ApiError(400, "missing_tables", str(exc)) from None
        seed = request.seed if request.seed is not None else secrets.randbits(63)
        trajectory = harness.sample_trajectory(int(seed), params)
        now = time.monotonic()
        session = Session(
            id=secrets.token_hex(16),
            params=params,
            policy=policy,
            trajectory=trajectory,
            ctx=policy.new_context(trajectory.seed),
            claim=ClaimModel.from_params(params),
            capacity=params.c_max,
            last_touch=now,
        )
        with self._lock:
            self._purge(now)
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        now = time.monotonic()
        with self._lock:
            self._purge(now)
            session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id}")
        session.last_touch = now
        return session

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise ApiError(404, "unknown_session", f"no session {session_id}")
            del self._sessions[session_id]


def _view(session: Session) -> dict:
    params = session.params
    out = {
        "id": session.id,
        "status": session.status,
        "advisor": session.policy.kind.value,
        "cursor": session.cursor,
        "capacity": session.capacity,
        "time_left": params.t_max - session.cursor,
        "c_max": params.c_max,
        "t_max": params.t_max,
        "reward_total": session.reward_total,
        "accepted_total": session.accepted_total,
        "history": session.history,
    }
    if session.status == "active":
        k = session.cursor
        out["arrival"] = {
            "family_size": int(session.trajectory.family_sizes[k]),
            "claimed": CATEGORY_NAMES[int(session.trajectory.claimed_categories[k])],
        }
    else:
        out["arrival"] = None
    if session.ctx.belief is not None:
        out["belief_mean"] = [float(x) for x in session.ctx.belief.mean()]
    return out


def _people_dict(values: np.ndarray) -> dict:
    return {name: int(values[i]) for i, name in enumerate(CATEGORY_NAMES)}


def _truncated(trajectory: harness.Trajectory, n: int) -> harness.Trajectory:
    return harness.Trajectory(
        seed=trajectory.seed,
        theta=trajectory.theta,
        family_sizes=trajectory.family_sizes[:n],
        true_categories=trajectory.true_categories[:n],
        claimed_categories=trajectory.claimed_categories[:n],
        board_draws=trajectory.board_draws[:n],
    )


def _summary(session: Session) -> dict:
    partial = session.status == "active"
    trajectory = (
        _truncated(session.trajectory, session.cursor) if partial else session.trajectory
    )
    replay = harness.run_episode(session.policy, trajectory, session.params, log_steps=True)
    params = session.params
    steps = []
    n_rows = max(session.cursor, replay.termination_step)
    for k in range(n_rows):
        t = params.t_max - k
        row = {
            "t": t,
            "family_size": int(session.trajectory.family_sizes[k]),
            "claimed": CATEGORY_NAMES[int(session.trajectory.claimed_categories[k])],
            "true": CATEGORY_NAMES[int(session.trajectory.true_categories[k])],
            "human": None,
            "advisor": None,
        }
        if k < len(session.history):
            h = session.history[k]
            row["human"] = {"action": h["action"], "boarded": h["boarded"], "reward": h["reward"]}
        if k < replay.termination_step:
            s = replay.steps[k]
            row["advisor"] = {"action": s.action, "boarded": s.boarded, "reward": s.reward}
        steps.append(row)
    return {
        "partial": partial,
        "human": {
            "reward": session.reward_total,
            "accepted_total": session.accepted_total,
            "accepted_people": _people_dict(session.accepted_people),
            "arrived_people": _people_dict(session.arrived_people),
            "termination_step": session.cursor,
        },
        "advisor": {
            "kind": session.policy.kind.value,
            "reward": replay.reward,
            "accepted_total": int(replay.accepted_total),
            "accepted_people": _people_dict(replay.accepted_people),
            "arrived_people": _people_dict(replay.arrived_people),
            "termination_step": replay.termination_step,
        },
        "steps": steps,
    }


def _recommendation(session: Session, tables: TableSet) -> dict:
    cached = session.recommendations.get(session.cursor)
    if cached is not None:
        return cached
    params = session.params
    k = session.cursor
    f = int(session.trajectory.family_sizes[k])
    claimed = PriorityCategory(int(session.trajectory.claimed_categories[k]))
    obs_state = EvacState(session.capacity, params.t_max - k, f, claimed)
    action = decide(session.policy, obs_state, session.ctx)
    q_accept = q_reject = None
    if session.ctx.last_plan is not None and session.policy.planner_level is not None:
        diag = session.ctx.last_plan
        q_accept, q_reject = diag.q_accept, diag.q_reject
    else:
        value = {
            PolicyKind.LEVEL_I: tables.value_i,
            PolicyKind.LEVEL_IIB: tables.value_iib,
            PolicyKind.AFTER_THRESHOLD_AMCITS: tables.value_i,
            PolicyKind.BEFORE_THRESHOLD_AMCITS: tables.value_i,
        }.get(session.policy.kind)
        if value is not None:
            q_accept, q_reject = value.q_values(obs_state)
    out = {
        "action": Action(action).name,
        "q_accept": q_accept,
        "q_reject": q_reject,
        "posterior_true": [float(x) for x in session.claim.posterior[claimed]],
    }
    if session.ctx.belief is not None:
        out["belief_mean"] = [float(x) for x in session.ctx.belief.mean()]
    session.recommendations[session.cursor] = out
    return out


def create_app(
    params: ModelParams,
    tables: TableSet,
    *,
    ui_dir=None,
    session_ttl: float = 3600.0,
) -> FastAPI:
    app = FastAPI(title="evacplan exercise service")
    registry = SessionRegistry(params, tables, ttl=session_ttl)
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"code": "bad_request", "message": str(exc)})

    @app.exception_handler(DomainError)
    async def _domain_error(_req: Request, exc: DomainError):
        return JSONResponse(status_code=400, content={"code": "domain_error", "message": str(exc)})

    @app.post("/sessions")
    def create_session(request: CreateSessionRequest):
        session = registry.create(request)
        return _view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _view(registry.get(session_id))

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(session_id: str):
        session = registry.get(session_id)
        with session.lock:
            if session.status != "active":
                raise ApiError(409, "session_finished", "session is finished")
            return _recommendation(session, tables)

    @app.post("/sessions/{session_id}/decision")
    def post_decision(session_id: str, request: DecisionRequest):
        session = registry.get(session_id)
        name = request.action.strip().upper()
        if name not in Action.__members__:
            raise ApiError(400, "bad_action", f"action must be ACCEPT or REJECT, got {request.action!r}")
        action = Action[name]
        with session.lock:
            if session.status != "active":
                raise ApiError(409, "session_finished", "session is finished")
            if request.cursor is not None and request.cursor != session.cursor:
                raise ApiError(
                    409, "cursor_conflict",
                    f"decision targets cursor {request.cursor} but the session is at {session.cursor}",
                )
            p = session.params
            k = session.cursor
            t = p.t_max - k
            f = int(session.trajectory.family_sizes[k])
            true_v = int(session.trajectory.true_categories[k])
            claimed = PriorityCategory(int(session.trajectory.claimed_categories[k]))
            session.arrived_people[true_v] += f
            boarded = False
            step_reward = 0.0
            if action == Action.ACCEPT:
                step_reward = f * p.rewards[true_v] + p.epsilon
                session.reward_total += step_reward
                session.accepted_people[true_v] += f
                session.accepted_total += f
                boarded = bool(session.trajectory.board_draws[k] < p.p_board)
            session.history.append(
                {
                    "t": t,
                    "family_size": f,
                    "claimed": claimed.name,
                    "action": action.name,
                    "boarded": boarded,
                    "reward": step_reward,
                }
            )
            if boarded:
                session.capacity -= f
            observe(session.policy, session.ctx, (f, claimed))
            session.cursor += 1
            if session.capacity <= 0 or session.cursor >= p.t_max:
                session.status = "finished"
            out = {"outcome": {"boarded": boarded, "reward": step_reward}}
            if session.status == "active":
                out["view"] = _view(session)
            else:
                out["summary"] = _summary(session)
            return out

    @app.get("/sessions/{session_id}/summary")
    def get_summary(session_id: str):
        session = registry.get(session_id)
        with session.lock:
            return _summary(session)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        registry.delete(session_id)
        return Response(status_code=204)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
