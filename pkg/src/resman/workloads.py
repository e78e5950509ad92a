"""Deterministic workload generators for scheduling scenarios and
context sessions.

Streams are pure functions of (config, seed): arrival, hang, and token
draws come from dedicated substreams, so every policy under test faces
byte-identical inputs at a fixed seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .domain import CLASS_WEIGHTS, Turn, TurnClass
from .errors import ConfigInvalidError
from .simkernel import SeededRng


@dataclass
class ScenarioConfig:
    name: str
    n_turns: int
    n_agents: int
    duration_ms: int
    hang_rate: float = 0.0                  # constant probability
    hang_oscillation: tuple[float, float, int] | None = None  # (min_p, max_p, period_ms)
    arrival_profile: str = "uniform"        # uniform | burst
    burst_window_ms: int = 3_000
    lane_count: int = 4
    class_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)
    service_median_ms: int = 3_000
    service_sigma: float = 0.6
    service_clamp_ms: tuple[int, int] = (500, 30_000)
    hang_onset_max_ms: int = 30_000
    hang_timeout_range_ms: tuple[int, int] = (120_000, 240_000)
    rate_limit_coupling: float = 0.0        # P(hang doubles as a rate-limit event)
    token_range: tuple[int, int] = (200, 2_000)

    def validate(self) -> None:
        if self.n_turns <= 0 or self.n_agents <= 0:
            raise ConfigInvalidError("n_turns and n_agents must be positive")
        if not (0.0 <= self.hang_rate <= 1.0):
            raise ConfigInvalidError("hang_rate must be in [0,1]")
        if self.hang_oscillation is not None:
            lo, hi, period = self.hang_oscillation
            if not (0.0 <= lo <= hi <= 1.0) or period <= 0:
                raise ConfigInvalidError("bad hang oscillation profile")
        if self.arrival_profile not in ("uniform", "burst"):
            raise ConfigInvalidError(f"unknown arrival profile {self.arrival_profile}")
        if not math.isclose(sum(self.class_mix), 1.0, abs_tol=1e-9):
            raise ConfigInvalidError("class mix must sum to 1")


@dataclass
class SessionConfig:
    name: str
    n_turns: int
    n_messages: int
    total_tokens: int
    n_key_messages: int
    window_limit: int = 50_000
    topics: tuple[str, ...] = ("main",)
    n_topic_segments: int = 1
    token_median: int = 450
    token_sigma: float = 0.55
    token_clamp: tuple[int, int] = (50, 2_000)

    def validate(self) -> None:
        if self.n_messages < 0 or self.n_turns <= 0:
            raise ConfigInvalidError("message and turn counts must be sane")
        if self.n_key_messages > self.n_messages:
            raise ConfigInvalidError("more key messages than messages")
        if self.window_limit <= 0:
            raise ConfigInvalidError("window limit must be positive")


def hang_probability(cfg: ScenarioConfig, t_ms: float) -> float:
    """Hang probability at arrival time t; sinusoidal for cascade-style runs."""
    if cfg.hang_oscillation is None:
        return cfg.hang_rate
    lo, hi, period = cfg.hang_oscillation
    phase = 2.0 * math.pi * (t_ms % period) / period
    return lo + (hi - lo) * 0.5 * (1.0 - math.cos(phase))


def gen_scenario(cfg: ScenarioConfig, seed: int) -> list[Turn]:
    """Generate the deterministic turn list for one scenario seed."""
    cfg.validate()
    rng = SeededRng(seed)
    arrivals_rng = rng.stream("arrivals")
    hang_rng = rng.stream("hang")

    if cfg.arrival_profile == "burst":
        times = arrivals_rng.uniform(0, cfg.burst_window_ms, cfg.n_turns)
    else:
        times = arrivals_rng.uniform(0, cfg.duration_ms, cfg.n_turns)
    times = np.sort(times).astype(int)

    agent_ids = arrivals_rng.integers(0, cfg.n_agents, cfg.n_turns)
    class_draws = arrivals_rng.random(cfg.n_turns)
    service = np.exp(
        np.log(cfg.service_median_ms) + cfg.service_sigma * arrivals_rng.standard_normal(cfg.n_turns)
    )
    service = np.clip(service, *cfg.service_clamp_ms).astype(int)
    tokens = arrivals_rng.integers(cfg.token_range[0], cfg.token_range[1] + 1, cfg.n_turns)

    hang_u = hang_rng.random(cfg.n_turns)
    onset = hang_rng.uniform(0, cfg.hang_onset_max_ms, cfg.n_turns).astype(int)
    timeout = hang_rng.uniform(*cfg.hang_timeout_range_ms, cfg.n_turns).astype(int)
    coupling_u = hang_rng.random(cfg.n_turns)

    lo, mid = cfg.class_mix[0], cfg.class_mix[0] + cfg.class_mix[1]
    turns: list[Turn] = []
    for i in range(cfg.n_turns):
        if class_draws[i] < lo:
            tclass = TurnClass.INTERACTIVE
        elif class_draws[i] < mid:
            tclass = TurnClass.SUBAGENT
        else:
            tclass = TurnClass.BACKGROUND
        will_hang = hang_u[i] < hang_probability(cfg, float(times[i]))
        turns.append(
            Turn(
                id=f"t{i:04d}",
                agent_id=f"a{agent_ids[i]}",
                turn_class=tclass,
                arrival=int(times[i]),
                service_time=int(service[i]),
                tokens=int(tokens[i]),
                weight=CLASS_WEIGHTS[tclass.value],
                will_hang=bool(will_hang),
                hang_onset_ms=int(onset[i]),
                hang_timeout_ms=int(timeout[i]),
                rate_limit_event=bool(will_hang and coupling_u[i] < cfg.rate_limit_coupling),
            )
        )
    return turns


@dataclass
class Message:
    """A token-measured conversation unit with generator-assigned semantics."""

    id: str
    turn_index: int
    role: str
    tokens: int
    importance: float
    is_key: bool
    topic: str
    content_digest: str

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "Message":
        return Message(**d)


def _digest(msg_id: str, tokens: int, topic: str) -> str:
    return hashlib.sha256(f"{msg_id}:{tokens}:{topic}".encode()).hexdigest()[:16]


def gen_session(cfg: SessionConfig, seed: int) -> list[Message]:
    """Generate the deterministic message stream for one session seed."""
    cfg.validate()
    if cfg.n_messages == 0:
        return []
    rng = SeededRng(seed)
    g = rng.stream("session")

    raw = np.exp(np.log(cfg.token_median) + cfg.token_sigma * g.standard_normal(cfg.n_messages))
    raw = np.clip(raw, *cfg.token_clamp)
    scale = cfg.total_tokens / raw.sum()
    tokens = np.clip(np.round(raw * scale), *cfg.token_clamp).astype(int)
    # nudge toward the target within the clamp so the +/-2% contract holds
    drift = cfg.total_tokens - int(tokens.sum())
    i = 0
    while drift != 0 and i < 4 * cfg.n_messages:
        j = i % cfg.n_messages
        step = 1 if drift > 0 else -1
        nt = tokens[j] + step
        if cfg.token_clamp[0] <= nt <= cfg.token_clamp[1]:
            tokens[j] = nt
            drift -= step
        i += 1

    # keys spread across the whole session with jitter, never clustered at an end
    key_idx: set[int] = set()
    if cfg.n_key_messages > 0:
        stride = cfg.n_messages / cfg.n_key_messages
        for k in range(cfg.n_key_messages):
            base = k * stride + stride / 2.0
            jitter = g.uniform(-stride / 3.0, stride / 3.0)
            idx = int(min(cfg.n_messages - 1, max(0, base + jitter)))
            while idx in key_idx:
                idx = (idx + 1) % cfg.n_messages
            key_idx.add(idx)

    # topic segments; multi-topic sessions interleave revisits
    if len(cfg.topics) == 1:
        topic_of = lambda i: cfg.topics[0]  # noqa: E731
    else:
        n_seg = max(cfg.n_topic_segments, len(cfg.topics))
        seg_len = cfg.n_messages / n_seg
        seg_topics = [cfg.topics[s % len(cfg.topics)] for s in range(n_seg)]
        topic_of = lambda i: seg_topics[min(n_seg - 1, int(i / seg_len))]  # noqa: E731

    importance_other = g.beta(2.0, 5.0, cfg.n_messages)
    importance_key = g.uniform(0.5, 1.0, cfg.n_messages)

    msgs: list[Message] = []
    for i in range(cfg.n_messages):
        is_key = i in key_idx
        imp = importance_key[i] if is_key else importance_other[i]
        mid = f"m{i:04d}"
        topic = topic_of(i)
        msgs.append(
            Message(
                id=mid,
                turn_index=int(i * cfg.n_turns / cfg.n_messages),
                role="user" if i % 2 == 0 else "assistant",
                tokens=int(tokens[i]),
                importance=float(round(imp, 6)),
                is_key=is_key,
                topic=topic,
                content_digest=_digest(mid, int(tokens[i]), topic),
            )
        )
    return msgs


BUILTIN_SCENARIOS: dict[str, ScenarioConfig] = {
    "normal": ScenarioConfig(
        name="normal", n_turns=27, n_agents=3, duration_ms=300_000, hang_rate=0.05
    ),
    "high_load": ScenarioConfig(
        name="high_load", n_turns=280, n_agents=10, duration_ms=600_000, hang_rate=0.10
    ),
    "burst": ScenarioConfig(
        name="burst", n_turns=30, n_agents=3, duration_ms=60_000,
        hang_rate=0.08, arrival_profile="burst", burst_window_ms=3_000,
    ),
    "faulty": ScenarioConfig(
        name="faulty", n_turns=63, n_agents=5, duration_ms=150_000, hang_rate=0.30
    ),
    "cascade": ScenarioConfig(
        name="cascade", n_turns=149, n_agents=5, duration_ms=600_000,
        hang_oscillation=(0.05, 0.40, 600_000), rate_limit_coupling=0.5,
    ),
}

BUILTIN_SESSIONS: dict[str, SessionConfig] = {
    "50turn": SessionConfig(
        name="50turn", n_turns=50, n_messages=100, total_tokens=51_000, n_key_messages=13
    ),
    "100turn": SessionConfig(
        name="100turn", n_turns=100, n_messages=200, total_tokens=105_000, n_key_messages=27
    ),
    "200turn": SessionConfig(
        name="200turn", n_turns=200, n_messages=400, total_tokens=202_000, n_key_messages=47
    ),
    "multitopic": SessionConfig(
        name="multitopic", n_turns=120, n_messages=240, total_tokens=116_000,
        n_key_messages=35, topics=("alpha", "beta", "gamma", "delta"), n_topic_segments=8,
    ),
}
