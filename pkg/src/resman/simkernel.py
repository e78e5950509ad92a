"""Deterministic discrete-event simulation core.

Virtual time is integer milliseconds. All randomness is drawn from named
substreams derived from a single seed, so the draw sequence seen by one
subsystem (arrivals, hang draws, reaper retries, ...) is independent of
how often any other subsystem draws.
"""

from __future__ import annotations

import heapq
import zlib
from typing import Any, Callable

import numpy as np

from .errors import PastTimeError


class VirtualClock:
    """Monotonically non-decreasing millisecond clock."""

    __slots__ = ("now",)

    def __init__(self) -> None:
        self.now: int = 0

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise PastTimeError(f"clock cannot move back: {t} < {self.now}")
        self.now = t


class SeededRng:
    """Named, splittable substreams over one master seed.

    Each substream is a PCG64 generator keyed by (seed, crc32(name)), so
    identical seeds reproduce identical per-substream draw sequences no
    matter which other substreams are consumed in between.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            key = zlib.crc32(name.encode("utf-8"))
            ss = np.random.SeedSequence([self.seed, key])
            self._streams[name] = np.random.Generator(np.random.PCG64(ss))
        return self._streams[name]


class EventQueue:
    """Min-heap of (fire_time, sequence, payload) with cancellation.

    Ties at one fire time resolve in insertion order, so replays are
    byte-reproducible.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, int]] = []
        self._payloads: dict[int, Any] = {}
        self._seq = 0
        self.scheduled = 0
        self.fired = 0
        self.cancelled = 0

    def push(self, fire_time: int, payload: Any) -> int:
        eid = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (fire_time, eid, eid))
        self._payloads[eid] = payload
        self.scheduled += 1
        return eid

    def cancel(self, event_id: int) -> bool:
        if event_id in self._payloads:
            del self._payloads[event_id]
            self.cancelled += 1
            return True
        return False

    def peek_time(self) -> int | None:
        while self._heap and self._heap[0][2] not in self._payloads:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def pop(self) -> tuple[int, Any] | None:
        while self._heap:
            fire_time, _, eid = heapq.heappop(self._heap)
            payload = self._payloads.pop(eid, None)
            if payload is not None:
                self.fired += 1
                return fire_time, payload
        return None

    def __len__(self) -> int:
        return len(self._payloads)


class EventLoop:
    """Single-threaded deterministic event loop.

    Payloads are zero-argument callables; they may schedule further
    events. Never shared across threads.
    """

    def __init__(self, seed: int = 0) -> None:
        self.clock = VirtualClock()
        self.rng = SeededRng(seed)
        self.queue = EventQueue()

    def schedule(self, at: int, fn: Callable[[], None]) -> int:
        if at < self.clock.now:
            raise PastTimeError(f"cannot schedule at {at} < now {self.clock.now}")
        return self.queue.push(at, fn)

    def cancel(self, event_id: int) -> bool:
        return self.queue.cancel(event_id)

    def run_until(self, end: int) -> int:
        if end < self.clock.now:
            raise PastTimeError(f"run_until({end}) < now {self.clock.now}")
        while True:
            t = self.queue.peek_time()
            if t is None or t > end:
                break
            fire_time, fn = self.queue.pop()
            self.clock.advance_to(fire_time)
            fn()
        self.clock.advance_to(end)
        return self.clock.now

    def run_to_completion(self, hard_limit: int = 10**10) -> int:
        """Drain the queue entirely; the clock rests on the last event."""
        while True:
            item = self.queue.pop()
            if item is None:
                return self.clock.now
            fire_time, fn = item
            if fire_time > hard_limit:
                raise RuntimeError("simulation exceeded hard event horizon")
            self.clock.advance_to(fire_time)
            fn()
