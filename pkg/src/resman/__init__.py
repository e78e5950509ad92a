"""OS-style resource management for multi-agent LLM systems.

Deterministic simulation of turn scheduling (MLFQ with zombie reaping,
token-bucket admission, AIMD backoff, DRF fairness) and context
lifecycle management (tiered memory, value-scored compaction,
hibernation), plus workload generators, metrics, and durable storage.
"""

from .domain import Agent, LanePool, Turn, TurnClass, TurnState, ZombieRecord
from .engine import RunResult, run_scenario
from .contextmgr import Session, hibernate, make_context_policy, restore, run_session
from .metrics import ContextReport, SchedulingReport, compute_ctx, compute_sched
from .scheduler import AimdController, DrfLedger, MlfqPolicy, TokenBucket, make_policy
from .simkernel import EventLoop, EventQueue, SeededRng, VirtualClock
from .workloads import (
    BUILTIN_SCENARIOS,
    BUILTIN_SESSIONS,
    Message,
    ScenarioConfig,
    SessionConfig,
    gen_scenario,
    gen_session,
)

__version__ = "0.1.0"

__all__ = [
    "Agent", "LanePool", "Turn", "TurnClass", "TurnState", "ZombieRecord",
    "RunResult", "run_scenario",
    "Session", "hibernate", "restore", "run_session", "make_context_policy",
    "ContextReport", "SchedulingReport", "compute_ctx", "compute_sched",
    "AimdController", "DrfLedger", "MlfqPolicy", "TokenBucket", "make_policy",
    "EventLoop", "EventQueue", "SeededRng", "VirtualClock",
    "BUILTIN_SCENARIOS", "BUILTIN_SESSIONS", "Message",
    "ScenarioConfig", "SessionConfig", "gen_scenario", "gen_session",
    "__version__",
]
