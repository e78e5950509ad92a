"""Command-line experiment runner.

Three subcommands: `run-sched` drives a scheduling scenario under one or
all policies, `run-context` drives a message session under one or all
context policies, and `report` re-renders tables from a stored run
directory without re-simulating. Every run writes a full parameter dump
next to its outputs for provenance.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
from pathlib import Path

import yaml

from .contextmgr import ALL_CONTEXT_POLICIES, run_session
from .engine import run_scenario
from .errors import ConfigInvalidError, NotARunError, ResmanError
from .metrics import (
    CTX_COLUMNS,
    SCHED_COLUMNS,
    aggregate,
    compute_ctx,
    compute_sched,
    render_table,
    to_csv,
)
from .scheduler import ALL_POLICIES
from .workloads import (
    BUILTIN_SCENARIOS,
    BUILTIN_SESSIONS,
    ScenarioConfig,
    SessionConfig,
    gen_session,
)

DEFAULT_OUT_ENV = "RESMAN_OUT"


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = raw.split(",")
        return tuple(type(e)(p) for e, p in zip(current, parts))
    return raw


def apply_overrides(cfg, overrides: list[str]):
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalidError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        if not hasattr(cfg, key):
            raise ConfigInvalidError(f"unknown config field {key!r}")
        setattr(cfg, key, _coerce(getattr(cfg, key), raw))
    cfg.validate()
    return cfg


def load_scenario(args) -> ScenarioConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
        try:
            cfg = ScenarioConfig(**doc)
        except TypeError as exc:
            raise ConfigInvalidError(f"bad scenario config: {exc}") from exc
    else:
        if args.scenario not in BUILTIN_SCENARIOS:
            raise ConfigInvalidError(
                f"unknown scenario {args.scenario!r}; built-ins: {sorted(BUILTIN_SCENARIOS)}"
            )
        cfg = dataclasses.replace(BUILTIN_SCENARIOS[args.scenario])
    return apply_overrides(cfg, args.override)


def load_session_cfg(args) -> SessionConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
        try:
            cfg = SessionConfig(**doc)
        except TypeError as exc:
            raise ConfigInvalidError(f"bad session config: {exc}") from exc
    else:
        if args.session not in BUILTIN_SESSIONS:
            raise ConfigInvalidError(
                f"unknown session {args.session!r}; built-ins: {sorted(BUILTIN_SESSIONS)}"
            )
        cfg = dataclasses.replace(BUILTIN_SESSIONS[args.session])
    return apply_overrides(cfg, args.override)


def out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(DEFAULT_OUT_ENV, "out"))


def dump_params(directory: Path, cfg, args_ns) -> None:
    doc = {
        "config": dataclasses.asdict(cfg),
        "policy": args_ns.policy,
        "seed": args_ns.seed,
        "seeds": args_ns.seeds,
    }
    (directory / "params.yaml").write_text(
        yaml.safe_dump(doc, sort_keys=True), encoding="utf-8"
    )


def write_outputs(directory: Path, columns: list[str], per_seed: list[dict],
                  agg_rows: list[dict], event_lines: list[str]) -> str:
    directory.mkdir(parents=True, exist_ok=True)
    seed_cols = ["seed"] + columns
    (directory / "per_seed.csv").write_text(to_csv(seed_cols, per_seed), encoding="utf-8")
    table = render_table(columns, agg_rows)
    (directory / "table.txt").write_text(table + "\n", encoding="utf-8")
    (directory / "aggregate.csv").write_text(to_csv(columns, agg_rows), encoding="utf-8")
    (directory / "events.log").write_text(
        "\n".join(event_lines) + ("\n" if event_lines else ""), encoding="utf-8"
    )
    return table


def _fmt(mean: float, std: float) -> str:
    return f"{mean:.1f}±{std:.1f}"


def aggregate_rows(policy_rows: dict[str, list[dict]], columns: list[str]) -> list[dict]:
    out = []
    for policy, rows in policy_rows.items():
        mean, std = aggregate(rows)
        agg = {"policy": policy}
        for c in columns:
            if c == "policy":
                continue
            agg[c] = _fmt(mean[c], std[c])
        out.append(agg)
    return out


def cmd_run_sched(args) -> int:
    cfg = load_scenario(args)
    policies = list(ALL_POLICIES) if args.policy == "all" else [args.policy]
    for p in policies:
        if p not in ALL_POLICIES:
            raise ConfigInvalidError(f"unknown policy {p!r}; choose from {list(ALL_POLICIES)}")
    seeds = [args.seed + i for i in range(args.seeds)]

    per_seed_rows: list[dict] = []
    policy_rows: dict[str, list[dict]] = {p: [] for p in policies}
    event_lines: list[str] = []
    violations: list[str] = []
    for policy in policies:
        for seed in seeds:
            result = run_scenario(cfg, policy, seed, boost_enabled=not args.no_boost)
            violations.extend(f"{policy}/seed={seed}: {v}" for v in result.violations)
            report = compute_sched(result).to_dict()
            policy_rows[policy].append(report)
            per_seed_rows.append({"seed": seed, **report})
            event_lines.append(f"# policy={policy} seed={seed}")
            event_lines.extend(result.log_lines)

    agg = aggregate_rows(policy_rows, SCHED_COLUMNS)
    run_id = f"sched-{cfg.name}-{args.policy}-s{args.seed}x{args.seeds}"
    directory = out_root(args) / "runs" / run_id
    table = write_outputs(directory, SCHED_COLUMNS, per_seed_rows, agg, event_lines)
    dump_params(directory, cfg, args)
    print(table)
    print(f"run written to {directory}")
    if violations:
        for v in violations:
            print(f"invariant failed: {v}", file=sys.stderr)
        return 1
    return 0


def cmd_run_context(args) -> int:
    cfg = load_session_cfg(args)
    policies = list(ALL_CONTEXT_POLICIES) if args.policy == "all" else [args.policy]
    for p in policies:
        if p not in ALL_CONTEXT_POLICIES:
            raise ConfigInvalidError(
                f"unknown policy {p!r}; choose from {list(ALL_CONTEXT_POLICIES)}"
            )
    seeds = [args.seed + i for i in range(args.seeds)]

    per_seed_rows: list[dict] = []
    policy_rows: dict[str, list[dict]] = {p: [] for p in policies}
    event_lines: list[str] = []
    for policy in policies:
        for seed in seeds:
            messages = gen_session(cfg, seed)
            session = run_session(messages, policy, limit=cfg.window_limit, seed=seed)
            report = compute_ctx(session).to_dict()
            policy_rows[policy].append(report)
            per_seed_rows.append({"seed": seed, **report})
            stats = session.stats()
            event_lines.append(
                f"# policy={policy} seed={seed} injections={stats['injections']} "
                f"compactions={stats['compactions']} faults={stats['faults']}"
            )

    agg = aggregate_rows(policy_rows, CTX_COLUMNS)
    run_id = f"ctx-{cfg.name}-{args.policy}-s{args.seed}x{args.seeds}"
    directory = out_root(args) / "runs" / run_id
    table = write_outputs(directory, CTX_COLUMNS, per_seed_rows, agg, event_lines)
    dump_params(directory, cfg, args)
    print(table)
    print(f"run written to {directory}")
    return 0


def cmd_report(args) -> int:
    directory = Path(args.run_dir)
    csv_path = directory / "per_seed.csv"
    if not csv_path.exists():
        raise NotARunError(f"{directory} does not contain a completed run")
    with open(csv_path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise NotARunError(f"{csv_path} holds no rows")
    columns = [c for c in rows[0].keys() if c != "seed"]
    policy_rows: dict[str, list[dict]] = {}
    for r in rows:
        parsed = {}
        for k, v in r.items():
            if k in ("policy",):
                parsed[k] = v
            else:
                parsed[k] = float(v) if v else 0.0
        policy_rows.setdefault(r["policy"], []).append(parsed)
    agg = aggregate_rows(policy_rows, columns)
    table = render_table(columns, agg)
    print(table)
    buf = io.StringIO()
    buf.write(to_csv(columns, agg))
    (directory / "aggregate.csv").write_text(buf.getvalue(), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resman", description="agent resource manager experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("run-sched", help="run a scheduling scenario")
    ps.add_argument("--scenario", default="normal")
    ps.add_argument("--policy", default="mlfq")
    ps.add_argument("--seed", type=int, default=42)
    ps.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    ps.add_argument("--config", help="YAML scenario config file")
    ps.add_argument("--out", help="output root (default $RESMAN_OUT or ./out)")
    ps.add_argument("--override", action="append", default=[], metavar="K=V")
    ps.add_argument("--no-boost", action="store_true", help="disable the priority boost")
    ps.set_defaults(func=cmd_run_sched)

    pc = sub.add_parser("run-context", help="run a context-management session")
    pc.add_argument("--session", default="50turn")
    pc.add_argument("--policy", default="clm")
    pc.add_argument("--seed", type=int, default=42)
    pc.add_argument("--seeds", type=int, default=1)
    pc.add_argument("--config", help="YAML session config file")
    pc.add_argument("--out", help="output root (default $RESMAN_OUT or ./out)")
    pc.add_argument("--override", action="append", default=[], metavar="K=V")
    pc.set_defaults(func=cmd_run_context)

    pr = sub.add_parser("report", help="re-render tables from a stored run")
    pr.add_argument("run_dir")
    pr.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResmanError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
