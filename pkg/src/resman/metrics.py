"""Report computation for scheduling runs and context sessions.

Reports are pure functions of run data; recomputation is idempotent.
P95 uses the nearest-rank percentile (no interpolation) so it can be
cross-checked by a naive sort-and-index oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

from .domain import TurnState, response_time
from .engine import RunResult, STARVATION_MS
from .errors import EmptyRunError

LAG_THRESHOLD_MS = 30_000

SCHED_COLUMNS = [
    "policy", "p95_latency_ms", "throughput_per_min", "zombies",
    "avg_hold_s", "lane_waste_s", "recovered", "starved", "lags_over_30s",
]
CTX_COLUMNS = ["policy", "utilization_pct", "retention_pct", "quality", "compact_cost_tokens"]


def nearest_rank_percentile(values: list[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest value."""
    if not values:
        raise EmptyRunError("percentile of empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass
class SchedulingReport:
    policy: str
    p95_latency_ms: float
    throughput_per_min: float
    zombies: int
    avg_hold_s: float
    lane_waste_s: float
    recovered: int
    starved: int
    lags_over_30s: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ContextReport:
    policy: str
    utilization_pct: float
    retention_pct: float
    quality: float
    compact_cost_tokens: int

    def to_dict(self) -> dict:
        return asdict(self)


def starved_count(result: RunResult) -> int:
    """Turns that stayed dispatch-eligible beyond the threshold with no service.

    Eligibility excludes time a turn waits behind its own agent's earlier
    turns; only time the scheduler could have served it counts.
    """
    n = 0
    for t in result.turns:
        if t.eligible_since is None:
            continue
        served_at = t.first_service if t.first_service is not None else result.end_time
        if served_at - t.eligible_since > STARVATION_MS:
            n += 1
    return n


def compute_sched(result: RunResult) -> SchedulingReport:
    terminal = [t for t in result.turns if t.terminal]
    if not terminal:
        raise EmptyRunError("run produced no terminal turns")
    latencies = [float(response_time(t)) for t in terminal]
    completed = [t for t in terminal if t.state == TurnState.COMPLETED]

    span_ms = max(t.finish_time for t in terminal) - min(t.arrival for t in result.turns)
    throughput = len(completed) / (span_ms / 60_000.0) if span_ms > 0 else float(len(completed))

    terminated = [z for z in result.zombie_records if z.outcome == "terminated"]
    waste_s = sum(z.wasted_ms for z in terminated) / 1000.0
    zombies = len(terminated)
    avg_hold_s = waste_s / zombies if zombies else 0.0

    return SchedulingReport(
        policy=result.policy,
        p95_latency_ms=nearest_rank_percentile(latencies, 95.0),
        throughput_per_min=round(throughput, 2),
        zombies=zombies,
        avg_hold_s=round(avg_hold_s, 1),
        lane_waste_s=round(waste_s, 1),
        recovered=result.counters.get("recovered_total", 0),
        starved=starved_count(result),
        lags_over_30s=sum(1 for r in latencies if r > LAG_THRESHOLD_MS),
    )


def compute_ctx(session) -> ContextReport:
    """Build the context report from a finished session (see contextmgr)."""
    stats = session.stats()
    if stats["injections"] == 0:
        return ContextReport(
            policy=session.policy.name,
            utilization_pct=0.0,
            retention_pct=100.0,
            quality=0.95,
            compact_cost_tokens=0,
        )
    utilization = 100.0 * stats["utilization_mean"]
    retention = 100.0 * stats["retention"]
    overflow_frac = stats["overflow_events"] / stats["injections"]
    uncovered_frac = stats["uncovered_drops"] / stats["messages_injected"]
    quality = max(0.0, min(0.95, 0.95 - 0.30 * overflow_frac - 0.10 * uncovered_frac))
    return ContextReport(
        policy=session.policy.name,
        utilization_pct=round(utilization, 1),
        retention_pct=round(retention, 1),
        quality=round(quality, 2),
        compact_cost_tokens=stats["compact_cost_tokens"],
    )


def aggregate(rows: list[dict]) -> tuple[dict, dict]:
    """Mean and sample stddev per numeric column across seed rows."""
    if not rows:
        raise EmptyRunError("nothing to aggregate")
    keys = [k for k, v in rows[0].items() if isinstance(v, (int, float))]
    mean = {}
    std = {}
    for k in keys:
        xs = [float(r[k]) for r in rows]
        m = sum(xs) / len(xs)
        mean[k] = m
        if len(xs) > 1:
            std[k] = math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))
        else:
            std[k] = 0.0
    return mean, std


def render_table(columns: list[str], rows: list[dict]) -> str:
    """Aligned text table mirroring the report column order."""
    widths = {c: len(c) for c in columns}
    display = []
    for r in rows:
        d = {c: str(r.get(c, "")) for c in columns}
        display.append(d)
        for c in columns:
            widths[c] = max(widths[c], len(d[c]))
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for d in display:
        lines.append("  ".join(d[c].ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def to_csv(columns: list[str], rows: list[dict]) -> str:
    out = [",".join(columns)]
    for r in rows:
        out.append(",".join(str(r.get(c, "")) for c in columns))
    return "\n".join(out) + "\n"
