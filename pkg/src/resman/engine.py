"""Event-driven scheduling simulation.

Drives a generated turn list through arrival, admission, dispatch,
hang/recovery, and completion under one scheduling policy. An agent's
turns are serviced in arrival order (a conversation cannot answer turn
k+1 before turn k), and a hanging turn keeps both its lane and its
agent until it is recovered, reaped, or times out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import (
    Agent,
    LanePool,
    Turn,
    TurnState,
    ZombieRecord,
    ZOMBIE_THRESHOLD_MS,
    classify_zombie,
)
from .errors import InvariantViolationError
from .scheduler import (
    AimdController,
    DrfLedger,
    MlfqPolicy,
    SchedulingPolicy,
    TokenBucket,
    make_policy,
)
from .simkernel import EventLoop
from .workloads import ScenarioConfig, gen_scenario

REAPER_PERIOD_MS = 5_000
REAPER_MAX_ATTEMPTS = 2
RETRY_SUCCESS_P = 0.5
STARVATION_MS = 60_000
ADMISSION_WINDOW_MS = 60_000


@dataclass
class RunResult:
    scenario: str
    policy: str
    seed: int
    turns: list[Turn]
    zombie_records: list[ZombieRecord]
    counters: dict
    log_lines: list[str]
    aimd_series: list[tuple[int, float, bool]]  # (time, limit, is_event)
    end_time: int
    violations: list[str] = field(default_factory=list)


class SchedulerSim:
    """One deterministic simulation of (scenario, policy, seed)."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        policy: SchedulingPolicy | str,
        seed: int,
        check_invariants: bool = True,
        boost_enabled: bool = True,
    ) -> None:
        self.cfg = cfg
        self.seed = seed
        self.policy = make_policy(policy) if isinstance(policy, str) else policy
        self.loop = EventLoop(seed)
        self.lanes = LanePool(cfg.lane_count)
        self.check_invariants = check_invariants
        self.boost_enabled = boost_enabled

        self.turns = gen_scenario(cfg, seed)
        self.by_id = {t.id: t for t in self.turns}
        self.agents: dict[str, Agent] = {}
        self.agent_turns: dict[str, list[str]] = {}
        for t in self.turns:
            self.agents.setdefault(t.agent_id, Agent(id=t.agent_id))
            self.agent_turns.setdefault(t.agent_id, []).append(t.id)

        total_tokens = max(1, sum(t.tokens for t in self.turns))
        self.drf = DrfLedger({"lanes": float(cfg.lane_count), "tokens": float(total_tokens)})

        self.bucket: TokenBucket | None = None
        self.aimd: AimdController | None = None
        self.admitted_times: list[int] = []
        if self.policy.uses_admission:
            self.bucket = TokenBucket(capacity=60.0, refill_rate_per_s=5.0)
            self.aimd = AimdController()

        self.zombie_records: list[ZombieRecord] = []
        self.log_lines: list[str] = []
        self.aimd_series: list[tuple[int, float, bool]] = []
        self.violations: list[str] = []
        self.counters = {
            "reaper_detections": 0,      # coin-flip retry attempts
            "reaper_recovered_retry": 0,  # successful coin retries
            "reaper_grace": 0,            # recoveries granted without a draw
            "recovered_total": 0,
            "terminated_by_reaper": 0,
            "timed_out": 0,
            "admission_deferrals": 0,
            "boost_promotions": 0,
            "bucket_min": float("inf"),
            "bucket_max": 0.0,
        }
        self._dispatch_token: dict[str, int] = {}
        self._reap_attempts: dict[str, int] = {}
        self._done = 0
        self._reaper_scheduled = False
        self._boost_scheduled = False

    # -- plumbing ----------------------------------------------------------

    def _log(self, event: str, turn: Turn | None = None, **kv) -> None:
        parts = [str(self.loop.clock.now), event]
        if turn is not None:
            parts.append(turn.id)
        parts.extend(f"{k}={v}" for k, v in kv.items())
        self.log_lines.append("\t".join(parts))

    def _check(self) -> None:
        if not self.check_invariants:
            return
        if len(self.lanes.occupied) > self.lanes.capacity:
            self.violations.append(f"lane overflow at {self.loop.clock.now}")
        if self.lanes.acquires - self.lanes.releases != len(self.lanes.occupied):
            self.violations.append(f"lane accounting broken at {self.loop.clock.now}")
        if self.bucket is not None:
            lvl = self.bucket.level
            if not (-1e-9 <= lvl <= self.bucket.capacity + 1e-9):
                self.violations.append(f"bucket out of range at {self.loop.clock.now}")
            self.counters["bucket_min"] = min(self.counters["bucket_min"], lvl)
            self.counters["bucket_max"] = max(self.counters["bucket_max"], lvl)

    def _agent_head(self, agent_id: str) -> Turn | None:
        for tid in self.agent_turns[agent_id]:
            t = self.by_id[tid]
            if not t.terminal:
                return t
        return None

    def _eligible(self, turn: Turn) -> bool:
        if turn.state != TurnState.QUEUED or turn.enqueue_time is None:
            return False
        agent = self.agents[turn.agent_id]
        if agent.active_turn is not None:
            return False
        head = self._agent_head(turn.agent_id)
        return head is not None and head.id == turn.id

    def _mark_eligible(self, turn: Turn) -> None:
        if turn.eligible_since is None and turn.first_service is None:
            turn.eligible_since = self.loop.clock.now

    # -- arrival and admission ---------------------------------------------

    def _on_arrival(self, turn: Turn) -> None:
        if self.policy.uses_admission:
            self._try_admit(turn)
        else:
            self._enqueue(turn)
        self._dispatch()
        self._check()

    def _try_admit(self, turn: Turn) -> None:
        now = self.loop.clock.now
        assert self.bucket is not None and self.aimd is not None
        limit = self.aimd.current_limit(now)
        self.aimd_series.append((now, limit, False))
        window = [t for t in self.admitted_times if now - t < ADMISSION_WINDOW_MS]
        if len(window) + 1 > limit:  # limit may be fractional mid-recovery
            oldest = min(window)
            retry_at = max(now + 500, oldest + ADMISSION_WINDOW_MS)
            self.counters["admission_deferrals"] += 1
            self._log("admission_deferred", turn, retry_ms=retry_at - now)
            self.loop.schedule(retry_at, lambda: (self._try_admit(turn), self._dispatch()))
            return
        if not self.bucket.try_consume(now):
            retry_at = now + self.bucket.time_until(1.0, now)
            self.counters["admission_deferrals"] += 1
            self._log("admission_deferred", turn, retry_ms=retry_at - now)
            self.loop.schedule(retry_at, lambda: (self._try_admit(turn), self._dispatch()))
            return
        self.admitted_times = window + [now]
        if self.check_invariants and len(self.admitted_times) > limit:
            self.violations.append(f"admission window above limit at {now}")
        self._enqueue(turn)

    def _enqueue(self, turn: Turn) -> None:
        turn.enqueue_time = self.loop.clock.now
        self.policy.enqueue(turn, self.loop.clock.now)
        if self._eligible(turn):
            self._mark_eligible(turn)
        self._log("enqueue", turn, level=turn.queue_level)

    # -- dispatch ----------------------------------------------------------

    def _dispatch(self) -> None:
        now = self.loop.clock.now
        while self.lanes.free_count > 0:
            turn = self.policy.pop_next(now, self._eligible, self.drf)
            if turn is None:
                break
            lane = self.lanes.acquire(turn.id, now)
            turn.lane = lane
            turn.state = TurnState.RUNNING
            turn.start_time = now
            if turn.first_service is None:
                turn.first_service = now
            agent = self.agents[turn.agent_id]
            agent.active_turn = turn.id
            agent.call_times.append(now)
            self.drf.add(turn.agent_id, "lanes", 1.0)
            self._log("dispatch", turn, lane=lane, level=turn.queue_level)
            if turn.will_hang:
                self.loop.schedule(now + turn.hang_onset_ms, self._make_hang_onset(turn))
            else:
                self._schedule_segment(turn)
        self._check()

    def _schedule_segment(self, turn: Turn) -> None:
        quantum = self.policy.quantum_for(turn)
        seg = turn.remaining_ms if quantum is None else min(turn.remaining_ms, quantum)
        token = self._dispatch_token.get(turn.id, 0) + 1
        self._dispatch_token[turn.id] = token
        at = self.loop.clock.now + seg
        self.loop.schedule(at, self._make_segment_end(turn, seg, token))

    def _make_segment_end(self, turn: Turn, seg: int, token: int):
        def fire() -> None:
            if self._dispatch_token.get(turn.id) != token or turn.state != TurnState.RUNNING:
                return
            turn.remaining_ms -= seg
            turn.consumed_tokens += turn.tokens * seg / max(1, turn.service_time)
            if turn.remaining_ms <= 0:
                self._complete(turn)
            else:
                self._preempt(turn)
            self._dispatch()
            self._check()
        return fire

    def _complete(self, turn: Turn) -> None:
        turn.state = TurnState.COMPLETED
        turn.finish_time = self.loop.clock.now
        self.drf.add(turn.agent_id, "tokens", float(turn.tokens))
        self._release(turn)
        self._log("complete", turn)

    def _preempt(self, turn: Turn) -> None:
        turn.state = TurnState.QUEUED
        if isinstance(self.policy, MlfqPolicy):
            self.policy.maybe_demote_for_tokens(turn)
        lane = turn.lane
        turn.lane = None
        if lane is not None:
            self.lanes.release(lane)
        self.drf.add(turn.agent_id, "lanes", -1.0)
        self.agents[turn.agent_id].active_turn = None
        self.policy.on_quantum_expiry(turn, self.loop.clock.now)
        self._log("preempt", turn, level=turn.queue_level)

    def _release(self, turn: Turn) -> None:
        """Release lane and agent after a terminal transition."""
        lane = turn.lane
        turn.lane = None
        if lane is not None:
            self.lanes.release(lane)
            self.drf.add(turn.agent_id, "lanes", -1.0)
        agent = self.agents[turn.agent_id]
        agent.active_turn = None
        self._done += 1
        nxt = self._agent_head(turn.agent_id)
        if nxt is not None and nxt.state == TurnState.QUEUED and self._eligible(nxt):
            self._mark_eligible(nxt)

    # -- hang lifecycle ----------------------------------------------------

    def _make_hang_onset(self, turn: Turn):
        def fire() -> None:
            if turn.state != TurnState.RUNNING:
                return
            turn.state = TurnState.HANGING
            turn.hanging_since = self.loop.clock.now
            self._log("hang", turn)
            if turn.rate_limit_event and self.aimd is not None:
                new_limit = self.aimd.on_rate_limit_event(self.loop.clock.now)
                self.aimd_series.append((self.loop.clock.now, new_limit, True))
                self._log("rate_limit_event", turn, limit=round(new_limit, 3))
            if not self.policy.uses_reaper:
                self.loop.schedule(
                    self.loop.clock.now + turn.hang_timeout_ms,
                    self._make_hang_timeout(turn),
                )
        return fire

    def _make_hang_timeout(self, turn: Turn):
        def fire() -> None:
            if turn.state != TurnState.HANGING:
                return
            now = self.loop.clock.now
            turn.state = TurnState.TIMED_OUT_FAILED
            turn.finish_time = now
            self.counters["timed_out"] += 1
            self.zombie_records.append(
                ZombieRecord(
                    turn_id=turn.id,
                    detected_at=(turn.start_time or 0) + ZOMBIE_THRESHOLD_MS,
                    hold_start=turn.start_time or 0,
                    hang_start=turn.hanging_since or 0,
                    hold_end=now,
                    outcome="terminated",
                )
            )
            self._release(turn)
            self._log("timeout_failed", turn)
            self._dispatch()
            self._check()
        return fire

    # -- reaper ------------------------------------------------------------

    def _pressure(self) -> bool:
        """A freed lane would immediately serve queued eligible work."""
        return self.lanes.free_count == 0 and self.policy.queued_eligible_exists(
            self.loop.clock.now, self._eligible
        )

    def _reaper_tick(self) -> None:
        now = self.loop.clock.now
        rng = self.loop.rng.stream("reaper")
        for turn in self.turns:
            if turn.state != TurnState.HANGING or turn.lane is None:
                continue
            if not classify_zombie(turn, now):
                continue
            attempts = self._reap_attempts.get(turn.id, 0) + 1
            self._reap_attempts[turn.id] = attempts
            if attempts < REAPER_MAX_ATTEMPTS:
                self.counters["reaper_detections"] += 1
                if rng.random() < RETRY_SUCCESS_P:
                    self.counters["reaper_recovered_retry"] += 1
                    self._recover(turn, now)
                else:
                    self._log("retry_failed", turn, attempt=attempts)
            else:
                # final attempt: kill only if the lane is actually needed;
                # otherwise grant grace and let the retry run to success
                if self._pressure():
                    self.counters["reaper_detections"] += 1
                    if rng.random() < RETRY_SUCCESS_P:
                        self.counters["reaper_recovered_retry"] += 1
                        self._recover(turn, now)
                    else:
                        self._terminate_zombie(turn, now)
                else:
                    self.counters["reaper_grace"] += 1
                    self._recover(turn, now, grace=True)
        self._dispatch()
        self._check()
        if self._done < len(self.turns):
            self.loop.schedule(now + REAPER_PERIOD_MS, self._reaper_tick)
        else:
            self._reaper_scheduled = False

    def _recover(self, turn: Turn, now: int, grace: bool = False) -> None:
        self.counters["recovered_total"] += 1
        self.zombie_records.append(
            ZombieRecord(
                turn_id=turn.id,
                detected_at=now,
                hold_start=turn.start_time or 0,
                hang_start=turn.hanging_since or 0,
                hold_end=now,
                outcome="recovered",
            )
        )
        turn.state = TurnState.RUNNING
        turn.hanging_since = None
        turn.will_hang = False
        turn.remaining_ms = turn.service_time
        self._log("recovered", turn, grace=int(grace))
        self._schedule_segment(turn)

    def _terminate_zombie(self, turn: Turn, now: int) -> None:
        turn.state = TurnState.REAPED_FAILED
        turn.finish_time = now
        self.counters["terminated_by_reaper"] += 1
        self.zombie_records.append(
            ZombieRecord(
                turn_id=turn.id,
                detected_at=now,
                hold_start=turn.start_time or 0,
                hang_start=turn.hanging_since or 0,
                hold_end=now,
                outcome="terminated",
            )
        )
        self._release(turn)
        self._log("reaped_failed", turn)

    def _boost_tick(self) -> None:
        assert isinstance(self.policy, MlfqPolicy)
        promoted = self.policy.boost(self.loop.clock.now)
        self.counters["boost_promotions"] += promoted
        if promoted:
            self._log("boost", promoted=promoted)
        self._dispatch()
        if self._done < len(self.turns):
            self.loop.schedule(
                self.loop.clock.now + self.policy.boost_interval_ms, self._boost_tick
            )
        else:
            self._boost_scheduled = False

    # -- entry point -------------------------------------------------------

    def run(self) -> RunResult:
        for t in self.turns:
            self.loop.schedule(t.arrival, (lambda turn: lambda: self._on_arrival(turn))(t))
        if self.policy.uses_reaper:
            self.loop.schedule(REAPER_PERIOD_MS, self._reaper_tick)
        if self.boost_enabled and isinstance(self.policy, MlfqPolicy) and self.policy.uses_boost:
            self.loop.schedule(self.policy.boost_interval_ms, self._boost_tick)
        end = self.loop.run_to_completion()
        not_terminal = [t.id for t in self.turns if not t.terminal]
        if not_terminal:
            raise InvariantViolationError(f"turns never finished: {not_terminal[:5]}")
        return RunResult(
            scenario=self.cfg.name,
            policy=self.policy.name,
            seed=self.seed,
            turns=self.turns,
            zombie_records=self.zombie_records,
            counters=dict(self.counters),
            log_lines=list(self.log_lines),
            aimd_series=list(self.aimd_series),
            end_time=end,
            violations=list(self.violations),
        )


def run_scenario(
    cfg: ScenarioConfig,
    policy: str,
    seed: int,
    check_invariants: bool = True,
    boost_enabled: bool = True,
) -> RunResult:
    sim = SchedulerSim(
        cfg, policy, seed, check_invariants=check_invariants, boost_enabled=boost_enabled
    )
    return sim.run()
