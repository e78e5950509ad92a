"""Scheduling policies and rate control.

One policy interface covers the managed MLFQ scheduler and the three
baselines (FIFO, round robin, static priority queue). Policies only
order queued turns; lane and agent bookkeeping lives in the engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import Turn, TurnClass


class TokenBucket:
    """Admission token bucket; level stays within [0, capacity]."""

    def __init__(self, capacity: float, refill_rate_per_s: float, now: int = 0) -> None:
        self.capacity = float(capacity)
        self.refill_rate = float(refill_rate_per_s)
        self.level = float(capacity)
        self.last_refill = now

    def refill(self, now: int) -> None:
        elapsed_s = max(0, now - self.last_refill) / 1000.0
        self.level = min(self.capacity, self.level + elapsed_s * self.refill_rate)
        self.last_refill = now

    def try_consume(self, now: int, amount: float = 1.0) -> bool:
        self.refill(now)
        if self.level >= amount:
            self.level -= amount
            return True
        return False

    def time_until(self, amount: float, now: int) -> int:
        """Milliseconds until the level reaches ``amount`` at the refill rate."""
        self.refill(now)
        if self.level >= amount:
            return 0
        deficit = amount - self.level
        return int(deficit / self.refill_rate * 1000.0) + 1


class AimdController:
    """Additive-increase / multiplicative-decrease admission limit.

    The limit decreases only when a rate-limit event is reported and
    recovers linearly, one additive step per quiet interval, up to the
    configured ceiling. Growth is applied lazily from timestamps so the
    trajectory is a pure function of the event history.
    """

    def __init__(
        self,
        initial_limit: float = 60.0,
        additive_step: float = 2.0,
        multiplicative_factor: float = 0.5,
        floor: float = 5.0,
        quiet_interval_ms: int = 10_000,
    ) -> None:
        if not (0.0 < multiplicative_factor < 1.0):
            raise ValueError("multiplicative factor must be in (0,1)")
        self.ceiling = float(initial_limit)
        self.additive_step = float(additive_step)
        self.multiplicative_factor = float(multiplicative_factor)
        self.floor = float(floor)
        self.quiet_interval_ms = quiet_interval_ms
        self._base_limit = float(initial_limit)
        self._base_time = 0
        self.events = 0

    def current_limit(self, now: int) -> float:
        quiet = max(0, now - self._base_time) // self.quiet_interval_ms
        return min(self.ceiling, self._base_limit + quiet * self.additive_step)

    def on_rate_limit_event(self, now: int) -> float:
        level = self.current_limit(now)
        self._base_limit = max(self.floor, level * self.multiplicative_factor)
        self._base_time = now
        self.events += 1
        return self._base_limit


class DrfLedger:
    """Dominant-resource-fairness usage tracking.

    Usage vectors are per-agent over named resources; the dominant share
    is the largest usage/capacity fraction and drives dispatch
    tie-breaks (lowest share first).
    """

    def __init__(self, capacities: dict[str, float]) -> None:
        for r, c in capacities.items():
            if c <= 0:
                raise ValueError(f"capacity for {r} must be positive")
        self.capacities = dict(capacities)
        self.usage: dict[str, dict[str, float]] = {}

    def add(self, agent_id: str, resource: str, amount: float) -> None:
        vec = self.usage.setdefault(agent_id, {r: 0.0 for r in self.capacities})
        vec[resource] = max(0.0, vec[resource] + amount)

    def dominant_share(self, agent_id: str) -> float:
        vec = self.usage.get(agent_id)
        if not vec:
            return 0.0
        share = max(vec[r] / self.capacities[r] for r in self.capacities)
        return min(1.0, share)


@dataclass
class QueuedEntry:
    order_key: tuple
    turn: Turn


class SchedulingPolicy:
    """Base policy: an ordered multiset of queued turns."""

    name = "base"
    preemptive = False
    uses_reaper = False
    uses_admission = False
    uses_boost = False

    def __init__(self) -> None:
        self._seq = 0
        self.entries: list[QueuedEntry] = []

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def enqueue(self, turn: Turn, now: int) -> None:
        raise NotImplementedError

    def pop_next(self, now: int, eligible, drf: DrfLedger | None) -> Turn | None:
        raise NotImplementedError

    def quantum_for(self, turn: Turn) -> int | None:
        """Max contiguous run slice in ms; None means run to completion."""
        return None

    def on_quantum_expiry(self, turn: Turn, now: int) -> None:
        self.enqueue(turn, now)

    def queued_eligible_exists(self, now: int, eligible) -> bool:
        return any(eligible(e.turn) for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


class FifoPolicy(SchedulingPolicy):
    """Single queue in arrival order, run to completion."""

    name = "fifo"

    def enqueue(self, turn: Turn, now: int) -> None:
        self.entries.append(QueuedEntry((turn.arrival, self._next_seq()), turn))
        self.entries.sort(key=lambda e: e.order_key)

    def pop_next(self, now, eligible, drf=None):
        for i, e in enumerate(self.entries):
            if eligible(e.turn):
                return self.entries.pop(i).turn
        return None


class RoundRobinPolicy(SchedulingPolicy):
    """Fixed time slice cycling over queued turns regardless of class."""

    name = "rr"
    preemptive = True

    def __init__(self, slice_ms: int = 5_000) -> None:
        super().__init__()
        self.slice_ms = slice_ms

    def enqueue(self, turn: Turn, now: int) -> None:
        self.entries.append(QueuedEntry((self._next_seq(),), turn))

    def pop_next(self, now, eligible, drf=None):
        for i, e in enumerate(self.entries):
            if eligible(e.turn):
                return self.entries.pop(i).turn
        return None

    def quantum_for(self, turn: Turn) -> int | None:
        return self.slice_ms


class PriorityQueuePolicy(SchedulingPolicy):
    """Static class priority, no demotion, no boost, run to completion."""

    name = "pq"

    def enqueue(self, turn: Turn, now: int) -> None:
        key = (turn.turn_class.initial_level, turn.arrival, self._next_seq())
        self.entries.append(QueuedEntry(key, turn))
        self.entries.sort(key=lambda e: e.order_key)

    def pop_next(self, now, eligible, drf=None):
        for i, e in enumerate(self.entries):
            if eligible(e.turn):
                return self.entries.pop(i).turn
        return None


class MlfqPolicy(SchedulingPolicy):
    """Three-level feedback queue with demotion, boost, and DRF tie-breaks.

    Turns enter at the level mapped from their class, are demoted when a
    slice expires (or a per-level token budget is blown), and all queued
    turns are periodically boosted back to level 0 in arrival order.
    """

    name = "mlfq"
    preemptive = True
    uses_reaper = True
    uses_admission = True
    uses_boost = True

    def __init__(
        self,
        quanta_ms: tuple[int, int, int] = (5_000, 15_000, 60_000),
        token_budgets: tuple[float, float, float] = (2_000.0, 8_000.0, float("inf")),
        boost_interval_ms: int = 30_000,
    ) -> None:
        super().__init__()
        self.quanta_ms = quanta_ms
        self.token_budgets = token_budgets
        self.boost_interval_ms = boost_interval_ms
        self.last_boost = 0
        self.boosted_total = 0

    def enqueue(self, turn: Turn, now: int) -> None:
        key = (turn.queue_level, self._next_seq())
        self.entries.append(QueuedEntry(key, turn))

    def pop_next(self, now, eligible, drf: DrfLedger | None = None):
        best_i = None
        best_key = None
        for i, e in enumerate(self.entries):
            if not eligible(e.turn):
                continue
            share = drf.dominant_share(e.turn.agent_id) if drf else 0.0
            key = (e.turn.queue_level, round(share, 9), e.order_key)
            if best_key is None or key < best_key:
                best_key, best_i = key, i
        if best_i is None:
            return None
        return self.entries.pop(best_i).turn

    def quantum_for(self, turn: Turn) -> int | None:
        return self.quanta_ms[turn.queue_level]

    def on_quantum_expiry(self, turn: Turn, now: int) -> None:
        turn.queue_level = min(turn.queue_level + 1, 2)
        self.enqueue(turn, now)

    def maybe_demote_for_tokens(self, turn: Turn) -> None:
        if turn.consumed_tokens > self.token_budgets[turn.queue_level]:
            turn.queue_level = min(turn.queue_level + 1, 2)

    def boost(self, now: int) -> int:
        """Promote every queued turn to level 0, preserving arrival order."""
        promoted = 0
        for e in self.entries:
            if e.turn.queue_level != 0:
                promoted += 1
            e.turn.queue_level = 0
            e.order_key = (0, e.turn.arrival, e.order_key[-1])
        self.entries.sort(key=lambda e: e.order_key)
        for e in self.entries:
            e.order_key = (0, self._next_seq())
        self.last_boost = now
        self.boosted_total += promoted
        return promoted


def make_policy(name: str, **kwargs) -> SchedulingPolicy:
    table = {
        "fifo": FifoPolicy,
        "rr": RoundRobinPolicy,
        "pq": PriorityQueuePolicy,
        "mlfq": MlfqPolicy,
    }
    if name not in table:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(table)}")
    return table[name](**kwargs)


BASELINE_POLICIES = ("fifo", "rr", "pq")
ALL_POLICIES = ("fifo", "rr", "pq", "mlfq")
