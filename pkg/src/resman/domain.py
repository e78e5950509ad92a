"""Core vocabulary shared by the scheduler and the context manager."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import NotHoldingLaneError, NotTerminalError

ZOMBIE_THRESHOLD_MS = 30_000

# Default initial priority weight per class; interactive work dominates.
CLASS_WEIGHTS = {"interactive": 4.0, "subagent": 2.0, "background": 1.0}


class TurnClass(str, Enum):
    INTERACTIVE = "interactive"
    SUBAGENT = "subagent"
    BACKGROUND = "background"

    @property
    def initial_level(self) -> int:
        return {"interactive": 0, "subagent": 1, "background": 2}[self.value]


class TurnState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    HANGING = "hanging"
    COMPLETED = "completed"
    REAPED_FAILED = "reaped_failed"
    TIMED_OUT_FAILED = "timed_out_failed"


TERMINAL_STATES = {
    TurnState.COMPLETED,
    TurnState.REAPED_FAILED,
    TurnState.TIMED_OUT_FAILED,
}


@dataclass
class Turn:
    """One agent interaction unit: the scheduler's unit of work.

    ``will_hang``, ``hang_onset_ms`` and ``hang_timeout_ms`` are latent
    properties drawn at generation time; no policy may observe them
    before the turn is running.
    """

    id: str
    agent_id: str
    turn_class: TurnClass
    arrival: int                # ms
    service_time: int           # nominal duration, ms
    tokens: int                 # consumed on completion
    weight: float = 1.0
    will_hang: bool = False
    hang_onset_ms: int = 0      # offset from dispatch at which a hang shows
    hang_timeout_ms: int = 0    # unreaped hang self-terminates after this
    rate_limit_event: bool = False

    # lifecycle (owned by the simulation loop)
    state: TurnState = TurnState.QUEUED
    queue_level: int = 0
    remaining_ms: int = field(default=0)
    enqueue_time: int | None = None
    eligible_since: int | None = None
    first_service: int | None = None
    start_time: int | None = None   # current lane acquisition
    finish_time: int | None = None
    hanging_since: int | None = None
    lane: int | None = None
    consumed_tokens: int = 0

    def __post_init__(self) -> None:
        if self.remaining_ms == 0:
            self.remaining_ms = self.service_time
        self.queue_level = self.turn_class.initial_level

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


def classify_zombie(turn: Turn, now: int) -> bool:
    """A turn is a zombie once it has held a lane >30 s while hanging."""
    if turn.lane is None:
        raise NotHoldingLaneError(f"turn {turn.id} holds no lane")
    return (
        turn.state == TurnState.HANGING
        and turn.start_time is not None
        and now - turn.start_time > ZOMBIE_THRESHOLD_MS
    )


def response_time(turn: Turn) -> int:
    """finish - arrival, defined only once the turn is terminal."""
    if not turn.terminal or turn.finish_time is None:
        raise NotTerminalError(f"turn {turn.id} is not terminal")
    return turn.finish_time - turn.arrival


@dataclass
class ZombieRecord:
    """Lane accounting for one zombie episode.

    ``hold_start``/``hold_end`` span the full lane hold (acquisition to
    release) and always exceed the 30 s zombie threshold; ``hang_start``
    marks where productive work stopped, and ``hold_end - hang_start``
    is the wasted portion reported as lane waste.
    """

    turn_id: str
    detected_at: int
    hold_start: int
    hang_start: int
    hold_end: int
    outcome: str  # "recovered" | "terminated"

    @property
    def lane_hold_ms(self) -> int:
        return self.hold_end - self.hold_start

    @property
    def wasted_ms(self) -> int:
        return self.hold_end - self.hang_start


class LanePool:
    """Counted set of execution slots; occupancy may never exceed capacity."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("lane capacity must be >= 1")
        self.capacity = capacity
        self.occupied: dict[int, tuple[str, int]] = {}  # lane -> (turn, acquired_at)
        self._free: list[int] = list(range(capacity))
        self.acquires = 0
        self.releases = 0

    @property
    def free_count(self) -> int:
        return len(self._free)

    def acquire(self, turn_id: str, now: int) -> int:
        if not self._free:
            raise RuntimeError("no free lane")
        lane = self._free.pop(0)
        self.occupied[lane] = (turn_id, now)
        self.acquires += 1
        return lane

    def release(self, lane: int) -> None:
        if lane in self.occupied:
            del self.occupied[lane]
            self._free.append(lane)
            self._free.sort()
            self.releases += 1


@dataclass
class Agent:
    """An autonomous entity submitting turns; at most one active turn."""

    id: str
    active_turn: str | None = None
    call_times: list[int] = field(default_factory=list)  # sliding-window rate
    dominant_share: float = 0.0

    def rate(self, now: int, window_ms: int = 60_000) -> float:
        """API calls per minute over a sliding window."""
        self.call_times = [t for t in self.call_times if now - t <= window_ms]
        return len(self.call_times) * 60_000.0 / window_ms
