"""Reproducible evaluation harness: pre-sampled arrival trajectories shared
across policies, episode replay against the true categories, Table-style
metric aggregation, and data-file exports (CSV metrics and reward curves,
JSON policy grids and step logs).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    Action,
    CATEGORY_NAMES,
    ClaimModel,
    EvacState,
    ModelParams,
    N_CATEGORIES,
    PriorityCategory,
    family_size_pmf,
)
from .dp import PolicyTable
from .policies import EpisodeContext, Policy, decide, observe

__all__ = [
    "Trajectory",
    "EpisodeResult",
    "StepRecord",
    "PolicyMetrics",
    "MetricsTable",
    "generate_trajectories",
    "sample_trajectory",
    "save_trajectories",
    "load_trajectories",
    "run_episode",
    "evaluate",
    "write_metrics_csv",
    "write_curves_csv",
    "write_grid_json",
    "write_step_log_json",
]


@dataclass
class Trajectory:
    """One pre-sampled episode: the population draw and t_max arrival records."""

    seed: int
    theta: np.ndarray  # (5,) population distribution this episode draws from
    family_sizes: np.ndarray  # (t_max,) int
    true_categories: np.ndarray  # (t_max,) int codes
    claimed_categories: np.ndarray  # (t_max,) int codes
    board_draws: np.ndarray  # (t_max,) uniform [0,1) draws, shared by all policies

    def __len__(self) -> int:
        return len(self.family_sizes)


def sample_trajectory(seed: int, params: ModelParams) -> Trajectory:
    """Regenerate a trajectory from its seed; used by both generation and replay.

    Draw order (fixed for reproducibility): theta, then family sizes, true
    categories, claim draws, boarding draws, each as one vectorized block.
    """
    gen = np.random.default_rng(seed)
    alpha = np.asarray(params.populations, dtype=float) / params.dirichlet_scale
    theta = gen.dirichlet(alpha)
    fam_cdf = np.cumsum(family_size_pmf(params))
    theta_cdf = np.cumsum(theta)
    fwd_cdf = np.cumsum(np.asarray(params.claim_matrix, dtype=float), axis=1)
    n = params.t_max
    family = (
        np.searchsorted(fam_cdf, gen.random(n), side="right").clip(0, params.f_max - 1) + 1
    )
    true_v = np.searchsorted(theta_cdf, gen.random(n), side="right").clip(0, N_CATEGORIES - 1)
    claimed = (fwd_cdf[true_v] <= gen.random(n)[:, None]).sum(axis=1).clip(0, N_CATEGORIES - 1)
    board = gen.random(n)
    return Trajectory(
        seed=int(seed),
        theta=theta,
        family_sizes=family.astype(np.int64),
        true_categories=true_v.astype(np.int64),
        claimed_categories=claimed.astype(np.int64),
        board_draws=board,
    )


def generate_trajectories(n: int, master_seed: int, params: ModelParams) -> list[Trajectory]:
    if n < 1:
        raise ValueError("need at least one trajectory")
    master = np.random.default_rng(master_seed)
    seeds = master.integers(0, 2**63, size=n)
    return [sample_trajectory(int(s), params) for s in seeds]


def save_trajectories(trajectories: Iterable[Trajectory], path) -> None:
    """JSON Lines: {seed, theta:[5], arrivals:[{f, true, claimed, u}]} per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            line = {
                "seed": traj.seed,
                "theta": [float(x) for x in traj.theta],
                "arrivals": [
                    {
                        "f": int(traj.family_sizes[k]),
                        "true": int(traj.true_categories[k]),
                        "claimed": int(traj.claimed_categories[k]),
                        "u": float(traj.board_draws[k]),
                    }
                    for k in range(len(traj))
                ],
            }
            fh.write(json.dumps(line, separators=(",", ":")) + "\n")


def load_trajectories(path) -> list[Trajectory]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            arrivals = data["arrivals"]
            out.append(
                Trajectory(
                    seed=int(data["seed"]),
                    theta=np.array(data["theta"], dtype=float),
                    family_sizes=np.array([a["f"] for a in arrivals], dtype=np.int64),
                    true_categories=np.array([a["true"] for a in arrivals], dtype=np.int64),
                    claimed_categories=np.array([a["claimed"] for a in arrivals], dtype=np.int64),
                    board_draws=np.array([a["u"] for a in arrivals], dtype=float),
                )
            )
    return out


@dataclass
class StepRecord:
    t: int
    capacity: int
    family_size: int
    claimed: int
    true: int
    action: str
    boarded: bool
    reward: float

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "capacity": self.capacity,
            "family_size": self.family_size,
            "claimed": CATEGORY_NAMES[self.claimed],
            "true": CATEGORY_NAMES[self.true],
            "action": self.action,
            "boarded": self.boarded,
            "reward": self.reward,
        }


@dataclass
class EpisodeResult:
    reward: float
    accepted_people: np.ndarray  # (5,) by true category
    arrived_people: np.ndarray  # (5,) by true category, until termination
    accepted_total: int
    boarded_total: int
    termination_step: int  # arrivals processed before the episode ended
    cumulative_by_step: np.ndarray  # (t_max,) running true reward, flat after termination
    steps: list[StepRecord] | None = None


def run_episode(
    policy: Policy,
    trajectory: Trajectory,
    params: ModelParams,
    log_steps: bool = False,
) -> EpisodeResult:
    """Replay one policy over a pre-sampled trajectory.

    The policy is shown the claimed category; rewards and the accepted/arrived
    tallies use the true one. The episode ends when capacity is exhausted or
    the records run out; later arrivals are not counted as arrived.
    """
    t_max = params.t_max
    rewards = params.rewards
    p_board = params.p_board
    eps = params.epsilon
    capacity = params.c_max
    total = 0.0
    accepted = np.zeros(N_CATEGORIES, dtype=np.int64)
    arrived = np.zeros(N_CATEGORIES, dtype=np.int64)
    accepted_total = 0
    boarded_total = 0
    curve = np.zeros(t_max)
    steps: list[StepRecord] | None = [] if log_steps else None
    ctx = policy.new_context(trajectory.seed)
    termination_step = 0

    for k in range(len(trajectory)):
        t = t_max - k
        f = int(trajectory.family_sizes[k])
        true_v = int(trajectory.true_categories[k])
        claimed = PriorityCategory(int(trajectory.claimed_categories[k]))
        arrived[true_v] += f
        obs_state = EvacState(capacity, t, f, claimed)
        action = decide(policy, obs_state, ctx)
        boarded = False
        step_reward = 0.0
        if action == Action.ACCEPT:
            step_reward = f * rewards[true_v] + eps
            total += step_reward
            accepted[true_v] += f
            accepted_total += f
            boarded = trajectory.board_draws[k] < p_board
            if boarded:
                boarded_total += f
        if steps is not None:
            steps.append(
                StepRecord(
                    t=t,
                    capacity=capacity,
                    family_size=f,
                    claimed=int(claimed),
                    true=true_v,
                    action=Action(action).name,
                    boarded=bool(boarded),
                    reward=step_reward,
                )
            )
        if boarded:
            capacity -= f
        observe(policy, ctx, (f, claimed))
        curve[k] = total
        termination_step = k + 1
        if capacity <= 0:
            break
    curve[termination_step:] = total

    return EpisodeResult(
        reward=total,
        accepted_people=accepted,
        arrived_people=arrived,
        accepted_total=accepted_total,
        boarded_total=boarded_total,
        termination_step=termination_step,
        cumulative_by_step=curve,
        steps=steps,
    )


@dataclass
class PolicyMetrics:
    name: str
    n: int
    reward_mean: float
    reward_stderr: float
    accepted_mean: float
    accepted_stderr: float
    accepted_by_category: np.ndarray  # (5,) mean people
    arrived_by_category: np.ndarray  # (5,) mean people
    curve: np.ndarray  # (t_max,) mean cumulative reward per step
    rewards: np.ndarray  # (n,) per-trajectory cumulative rewards
    accepted: np.ndarray  # (n,) per-trajectory accepted people
    accepted_per_traj: np.ndarray  # (n, 5)
    arrived_per_traj: np.ndarray  # (n, 5)


@dataclass
class MetricsTable:
    rows: list[PolicyMetrics]

    def row(self, name: str) -> PolicyMetrics:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def _stderr(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def evaluate(
    policies: Sequence[Policy],
    trajectories: Sequence[Trajectory],
    params: ModelParams,
) -> MetricsTable:
    """Replay every policy over the identical trajectory set and aggregate."""
    if not policies or not trajectories:
        raise ValueError("evaluate needs at least one policy and one trajectory")
    rows = []
    for policy in policies:
        n = len(trajectories)
        rewards = np.zeros(n)
        accepted = np.zeros(n)
        acc_cat = np.zeros((n, N_CATEGORIES))
        arr_cat = np.zeros((n, N_CATEGORIES))
        curve_sum = np.zeros(params.t_max)
        for i, traj in enumerate(trajectories):
            res = run_episode(policy, traj, params)
            rewards[i] = res.reward
            accepted[i] = res.accepted_total
            acc_cat[i] = res.accepted_people
            arr_cat[i] = res.arrived_people
            curve_sum += res.cumulative_by_step
        rows.append(
            PolicyMetrics(
                name=policy.name,
                n=n,
                reward_mean=float(rewards.mean()),
                reward_stderr=_stderr(rewards),
                accepted_mean=float(accepted.mean()),
                accepted_stderr=_stderr(accepted),
                accepted_by_category=acc_cat.mean(axis=0),
                arrived_by_category=arr_cat.mean(axis=0),
                curve=curve_sum / n,
                rewards=rewards,
                accepted=accepted,
                accepted_per_traj=acc_cat,
                arrived_per_traj=arr_cat,
            )
        )
    return MetricsTable(rows=rows)


# --- exports ----------------------------------------------------------------


def write_metrics_csv(table: MetricsTable, path) -> None:
    header = ["policy", "reward_mean", "reward_stderr", "accepted_mean", "accepted_stderr"]
    for name in CATEGORY_NAMES:
        header += [f"accepted_{name.lower()}", f"arrived_{name.lower()}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in table.rows:
            record = [
                row.name,
                repr(row.reward_mean),
                repr(row.reward_stderr),
                repr(row.accepted_mean),
                repr(row.accepted_stderr),
            ]
            for i in range(N_CATEGORIES):
                record += [repr(float(row.accepted_by_category[i])),
                           repr(float(row.arrived_by_category[i]))]
            writer.writerow(record)


def write_curves_csv(table: MetricsTable, path) -> None:
    """Mean cumulative reward after each step, t_max rows per policy."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "step", "cum_reward_mean"])
        for row in table.rows:
            for step, value in enumerate(row.curve, start=1):
                writer.writerow([row.name, step, repr(float(value))])


def write_grid_json(policy_table: PolicyTable, capacity: int, time_left: int, path) -> None:
    grid = policy_table.policy_grid(capacity, time_left)
    payload = {
        "c": capacity,
        "t": time_left,
        "family_sizes": list(range(1, grid.shape[0] + 1)),
        "categories": list(CATEGORY_NAMES),
        "actions": [[Action(int(a)).name for a in row] for row in grid],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_step_log_json(policy_name: str, trajectory_seed: int, result: EpisodeResult, path) -> None:
    if result.steps is None:
        raise ValueError("episode was run without log_steps=True")
    payload = {
        "policy": policy_name,
        "trajectory_seed": trajectory_seed,
        "reward": result.reward,
        "steps": [s.as_dict() for s in result.steps],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
