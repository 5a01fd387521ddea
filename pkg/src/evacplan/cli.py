"""Command-line entry point: solve tables, sample trajectories, evaluate
policies, export policy grids, and run the training-exercise service.

Model constants come from one JSON config (--config or EVACPLAN_CONFIG);
flags only select inputs, outputs, and sizes, so a command's outputs are a
pure function of (flags, config, input files).
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dp, harness
from .domain import DomainError, Level, ModelParams
from .policies import PolicyKind, TableSet, make_policy

_LEVEL_FLAGS = {"1": Level.I, "2b": Level.IIB}
_FILE_TAGS = {Level.I: "1", Level.IIB: "2b"}


def _load_params(args) -> ModelParams:
    path = getattr(args, "config", None) or os.environ.get("EVACPLAN_CONFIG")
    if path:
        return ModelParams.from_json(path)
    return ModelParams()


def _table_path(tables_dir, level: Level, what: str) -> Path:
    return Path(tables_dir) / f"level_{_FILE_TAGS[level]}.{what}.bin"


def _load_tables(tables_dir, params: ModelParams, kinds: list[PolicyKind]) -> TableSet:
    tables = TableSet()
    need = {
        "policy_i": any(
            k in (PolicyKind.LEVEL_I, PolicyKind.AFTER_THRESHOLD_AMCITS,
                  PolicyKind.BEFORE_THRESHOLD_AMCITS)
            for k in kinds
        ),
        "policy_iib": PolicyKind.LEVEL_IIB in kinds,
        "value_i": PolicyKind.LEVEL_IIA in kinds,
        "value_iib": PolicyKind.LEVEL_III in kinds,
    }
    if any(need.values()) and tables_dir is None:
        raise DomainError("--tables is required for optimized policy kinds")
    if need["policy_i"]:
        tables.policy_i = dp.load_policy(_table_path(tables_dir, Level.I, "policy"), params)
    if need["policy_iib"]:
        tables.policy_iib = dp.load_policy(_table_path(tables_dir, Level.IIB, "policy"), params)
    if need["value_i"]:
        tables.value_i = dp.load_value(_table_path(tables_dir, Level.I, "value"), params)
    if need["value_iib"]:
        tables.value_iib = dp.load_value(_table_path(tables_dir, Level.IIB, "value"), params)
    return tables


def _cmd_solve(args) -> int:
    params = _load_params(args)
    level = _LEVEL_FLAGS[args.level]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    value, policy = dp.solve(level, params)
    policy_path = _table_path(out_dir, level, "policy")
    value_path = _table_path(out_dir, level, "value")
    dp.save_policy(policy, policy_path)
    dp.save_value(value, value_path)
    print(f"wrote {policy_path}")
    print(f"wrote {value_path}")
    return 0


def _cmd_trajectories(args) -> int:
    params = _load_params(args)
    trajectories = harness.generate_trajectories(args.n, args.seed, params)
    harness.save_trajectories(trajectories, args.out)
    print(f"wrote {args.out} ({len(trajectories)} trajectories)")
    return 0


# worker state inherited through fork, avoids pickling the solved tables
_EVAL_STATE: dict = {}


def _eval_chunk(bounds: tuple[int, int]):
    lo, hi = bounds
    policies = _EVAL_STATE["policies"]
    trajectories = _EVAL_STATE["trajectories"][lo:hi]
    params = _EVAL_STATE["params"]
    table = harness.evaluate(policies, trajectories, params)
    return [
        (r.rewards, r.accepted, r.accepted_per_traj, r.arrived_per_traj, r.curve * r.n)
        for r in table.rows
    ]


def _evaluate_parallel(policies, trajectories, params, jobs: int) -> harness.MetricsTable:
    if jobs <= 1 or len(trajectories) < 2 * jobs:
        return harness.evaluate(policies, trajectories, params)
    bounds = [
        (lo, min(lo + -(-len(trajectories) // jobs), len(trajectories)))
        for lo in range(0, len(trajectories), -(-len(trajectories) // jobs))
    ]
    _EVAL_STATE.update(policies=policies, trajectories=trajectories, params=params)
    try:
        import multiprocessing as mp

        with ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("fork")) as pool:
            chunk_rows = list(pool.map(_eval_chunk, bounds))
    finally:
        _EVAL_STATE.clear()
    rows = []
    for p_idx, policy in enumerate(policies):
        rewards = np.concatenate([c[p_idx][0] for c in chunk_rows])
        accepted = np.concatenate([c[p_idx][1] for c in chunk_rows])
        acc_cat = np.concatenate([c[p_idx][2] for c in chunk_rows])
        arr_cat = np.concatenate([c[p_idx][3] for c in chunk_rows])
        curve_sum = np.zeros(params.t_max)
        for c in chunk_rows:
            curve_sum += c[p_idx][4]
        n = len(rewards)
        rows.append(
            harness.PolicyMetrics(
                name=policy.name,
                n=n,
                reward_mean=float(rewards.mean()),
                reward_stderr=harness._stderr(rewards),
                accepted_mean=float(accepted.mean()),
                accepted_stderr=harness._stderr(accepted),
                accepted_by_category=acc_cat.mean(axis=0),
                arrived_by_category=arr_cat.mean(axis=0),
                curve=curve_sum / n,
                rewards=rewards,
                accepted=accepted,
                accepted_per_traj=acc_cat,
                arrived_per_traj=arr_cat,
            )
        )
    return harness.MetricsTable(rows=rows)


def _cmd_evaluate(args) -> int:
    params = _load_params(args)
    kinds = [PolicyKind.parse(name) for name in args.policies.split(",") if name.strip()]
    if not kinds:
        raise DomainError("--policies must name at least one policy kind")
    tables = _load_tables(args.tables, params, kinds)
    policies = [make_policy(kind, params, tables) for kind in kinds]
    trajectories = harness.load_trajectories(args.trajectories)
    table = _evaluate_parallel(policies, trajectories, params, args.jobs)
    harness.write_metrics_csv(table, args.out)
    print(f"wrote {args.out}")
    if args.curves:
        harness.write_curves_csv(table, args.curves)
        print(f"wrote {args.curves}")
    return 0


def _cmd_grid(args) -> int:
    params = _load_params(args)
    policy = dp.load_policy(args.policy, params)
    harness.write_grid_json(policy, args.c, args.t, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    params = _load_params(args)
    tables = TableSet()
    for attr, level, what in (
        ("policy_i", Level.I, "policy"),
        ("value_i", Level.I, "value"),
        ("policy_iib", Level.IIB, "policy"),
        ("value_iib", Level.IIB, "value"),
    ):
        path = _table_path(args.tables, level, what)
        if path.exists():
            loader = dp.load_policy if what == "policy" else dp.load_value
            setattr(tables, attr, loader(path, params))
    app = create_app(params, tables, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evacplan",
        description="Gate-admission evacuation planning: solvers, baselines, harness, exercise service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run backward induction and write policy/value tables")
    p.add_argument("--level", choices=sorted(_LEVEL_FLAGS), required=True)
    p.add_argument("--config", help="JSON model config (default: EVACPLAN_CONFIG or built-ins)")
    p.add_argument("--out", required=True, help="output directory for the table files")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("trajectories", help="sample a reproducible trajectory file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(fn=_cmd_trajectories)

    p = sub.add_parser("evaluate", help="replay policies over a trajectory file")
    p.add_argument("--policies", required=True, help="comma-separated policy kinds")
    p.add_argument("--trajectories", required=True, help="trajectory JSONL path")
    p.add_argument("--tables", help="directory holding solved table files")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--curves", help="optional cumulative-reward curve CSV path")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("grid", help="export the action grid at one (capacity, time) point")
    p.add_argument("--policy", required=True, help="policy table file")
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(fn=_cmd_grid)

    p = sub.add_parser("serve", help="run the training-exercise HTTP service")
    p.add_argument("--config")
    p.add_argument("--tables", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="directory of built frontend assets to serve at /")
    p.set_defaults(fn=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
