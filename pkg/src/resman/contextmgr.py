"""Context lifecycle management: bounded window, tiered storage,
value-scored compaction, hibernation, and the baseline policies.

The window holds verbatim messages and extractive summaries in original
turn order. Tier 1 is a warm store of summaries (and, for recall-style
policies, evicted verbatim messages); tier 2 is the lossless transcript.
Accessing content that lives only in a lower tier is a context fault and
pays that tier's latency.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    CannotFitError,
    ChecksumMismatchError,
    SessionHibernatedError,
    VersionUnsupportedError,
)
from .workloads import Message

TIER1_LATENCY_MS = 1_000
TIER2_LATENCY_MS = 3_000
HIBERNATION_VERSION = 1

DEFAULT_VALUE_WEIGHTS = (0.3, 0.4, 0.3)  # recency, importance, key bonus


@dataclass
class Summary:
    """Extractive summary of a contiguous run of window messages."""

    id: str
    source_ids: list[str]
    tokens: int
    preserved_keys: list[str]
    fidelity: float
    topic: str
    max_turn_index: int

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "Summary":
        return Summary(**d)


def message_value(
    m: Message, now_index: int, weights: tuple[float, float, float] = DEFAULT_VALUE_WEIGHTS
) -> float:
    """Retention value: recency + semantic importance + key-content bonus."""
    alpha, beta, gamma = weights
    recency = (m.turn_index + 1) / (now_index + 1)
    return alpha * recency + beta * m.importance + gamma * (1.0 if m.is_key else 0.0)


def summarize_stub(
    messages: list[Message], compression_ratio: float = 0.25, summary_id: str = "s0000"
) -> Summary:
    """Deterministic extractive summarizer stand-in.

    Output size is a fixed fraction of the input; key messages are always
    listed as preserved. Summaries are irreducible: they cannot be
    summarized again.
    """
    if not messages:
        raise ValueError("cannot summarize an empty run")
    if any(not isinstance(m, Message) for m in messages):
        raise ValueError("summaries are irreducible; only messages can be summarized")
    total = sum(m.tokens for m in messages)
    keys = [m.id for m in messages if m.is_key]
    topics = [m.topic for m in messages]
    majority = max(set(topics), key=lambda t: (topics.count(t), t))
    return Summary(
        id=summary_id,
        source_ids=[m.id for m in messages],
        tokens=max(1, math.ceil(compression_ratio * total)),
        preserved_keys=keys,
        fidelity=0.9 if keys else 0.7,
        topic=majority,
        max_turn_index=max(m.turn_index for m in messages),
    )


@dataclass
class WindowEntry:
    order: float            # original turn-order position
    kind: str               # "message" | "summary"
    message: Message | None = None
    summary: Summary | None = None

    @property
    def tokens(self) -> int:
        return self.message.tokens if self.message else self.summary.tokens

    @property
    def topic(self) -> str:
        return self.message.topic if self.message else self.summary.topic

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "kind": self.kind,
            "message": self.message.to_dict() if self.message else None,
            "summary": self.summary.to_dict() if self.summary else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "WindowEntry":
        return WindowEntry(
            order=d["order"],
            kind=d["kind"],
            message=Message.from_dict(d["message"]) if d["message"] else None,
            summary=Summary.from_dict(d["summary"]) if d["summary"] else None,
        )


class ContextPolicy:
    """Window-control strategy applied at every injection."""

    name = "base"
    summarizing = False
    uses_tiers = False

    def params(self) -> dict:
        return {}

    def pre_append(self, session: "Session", incoming: Message) -> None:
        pass

    def post_append(self, session: "Session", incoming: Message) -> None:
        pass


class NoManagementPolicy(ContextPolicy):
    """Append until overflow, then emergency-truncate oldest."""

    name = "none"

    def post_append(self, session, incoming) -> None:
        if session.used > session.limit:
            session.overflow_events += 1
            while session.used > session.limit and len(session.window) > 1:
                session.drop_entry(session.window[0], covered=False)


class FifoTruncatePolicy(ContextPolicy):
    """Proactively evict oldest verbatim content to stay within the limit."""

    name = "fifo_truncate"

    def pre_append(self, session, incoming) -> None:
        while session.window and session.used + incoming.tokens > session.limit:
            session.drop_entry(session.window[0], covered=False)


class SlidingWindowPolicy(ContextPolicy):
    """Keep only the last k turns."""

    name = "sliding_window"

    def __init__(self, keep_turns: int = 15) -> None:
        self.keep_turns = keep_turns

    def params(self) -> dict:
        return {"keep_turns": self.keep_turns}

    def post_append(self, session, incoming) -> None:
        cutoff = session.now_index - self.keep_turns
        for e in list(session.window):
            idx = e.message.turn_index if e.message else e.summary.max_turn_index
            if idx <= cutoff:
                session.drop_entry(e, covered=False)
        while session.used > session.limit and len(session.window) > 1:
            session.drop_entry(session.window[0], covered=False)


class MemGptStylePolicy(ContextPolicy):
    """Value-blind tiered eviction with cheap block summaries.

    On pressure, the oldest block is moved to the tier-1 recall store and
    replaced by one summary. Only the first half of the block is actually
    fed to the summarizer, so the cost is low but key facts in the back
    half are lost from the window.
    """

    name = "memgpt"
    summarizing = True
    uses_tiers = True

    def __init__(self, trigger: float = 0.70, target: float = 0.50,
                 compression_ratio: float = 0.25) -> None:
        self.trigger = trigger
        self.target = target
        self.compression_ratio = compression_ratio

    def params(self) -> dict:
        return {
            "trigger": self.trigger,
            "target": self.target,
            "compression_ratio": self.compression_ratio,
        }

    def post_append(self, session, incoming) -> None:
        if session.used <= self.trigger * session.limit:
            return
        block: list[Message] = []
        for entry in list(session.window):
            if session.used <= self.target * session.limit:
                break
            if entry.kind == "summary":
                continue  # rolling summaries stay pinned in the window
            block.append(entry.message)
            session.remove_entry(entry)
            session.tier1_messages[entry.message.id] = entry.message
        if not block:
            return
        read = block[: max(1, math.ceil(len(block) / 2))]
        session.compact_cost_tokens += sum(m.tokens for m in read)
        summary = summarize_stub(
            read, self.compression_ratio, summary_id=session.next_summary_id()
        )
        session.mark_covered(read)
        for m in block:
            if m.id not in {r.id for r in read}:
                session.count_uncovered_drop(m)
        session.insert_summary(summary, order=min(session.order_of(m) for m in block))


class ClmPolicy(ContextPolicy):
    """Value-scored adaptive compaction with key-information conservation.

    Victims are the lowest-value entries; contiguous victim runs are
    replaced by extractive summaries so nothing leaves the window without
    a bridge, and summaries that preserve key facts are pinned.
    """

    name = "clm"
    summarizing = True
    uses_tiers = True

    def __init__(
        self,
        trigger: float = 0.75,
        trigger_large_msgs: float = 0.65,
        target: float = 0.60,
        compression_ratio: float = 0.25,
        importance_threshold: float = 0.5,
        weights: tuple[float, float, float] = DEFAULT_VALUE_WEIGHTS,
    ) -> None:
        self.trigger = trigger
        self.trigger_large_msgs = trigger_large_msgs
        self.target = target
        self.compression_ratio = compression_ratio
        self.importance_threshold = importance_threshold
        self.weights = tuple(weights)

    def params(self) -> dict:
        return {
            "trigger": self.trigger,
            "trigger_large_msgs": self.trigger_large_msgs,
            "target": self.target,
            "compression_ratio": self.compression_ratio,
            "importance_threshold": self.importance_threshold,
            "weights": list(self.weights),
        }

    def effective_trigger(self, session) -> float:
        msgs = [e for e in session.window if e.kind == "message"]
        if msgs:
            avg = sum(e.tokens for e in msgs) / len(msgs)
            if avg > session.limit / 50.0:
                return self.trigger_large_msgs
        return self.trigger

    def is_important(self, m: Message, now_index: int) -> bool:
        return m.is_key or message_value(m, now_index, self.weights) >= self.importance_threshold

    def post_append(self, session, incoming) -> None:
        if session.used > self.effective_trigger(session) * session.limit:
            compact(session, self)


def entry_value(entry: WindowEntry, now_index: int, weights) -> float:
    if entry.kind == "message":
        return message_value(entry.message, now_index, weights)
    s = entry.summary
    alpha, beta, gamma = weights
    recency = (s.max_turn_index + 1) / (now_index + 1)
    return alpha * recency + beta * s.fidelity + gamma * (1.0 if s.preserved_keys else 0.0)


def select_victims(
    entries: list[WindowEntry],
    now_index: int,
    weights,
    budget_tokens: float,
    compression_ratio: float,
    protect_topic: str | None = None,
) -> list[WindowEntry]:
    """Pick minimum-value victims until the projected release covers the budget.

    The projection accounts for the summary text that will be added back.
    Entries on the protected topic are spared while alternatives exist.
    Deterministic tie-break: (value, order, id).
    """
    def key(e: WindowEntry):
        ident = e.message.id if e.message else e.summary.id
        return (entry_value(e, now_index, weights), e.order, ident)

    pool = sorted(entries, key=key)
    victims: list[WindowEntry] = []
    released = 0.0
    msg_tokens = 0
    deferred: list[WindowEntry] = []
    for e in pool + deferred:
        if released - compression_ratio * msg_tokens >= budget_tokens:
            break
        if protect_topic is not None and e.topic == protect_topic and e in pool:
            deferred.append(e)
            continue
        victims.append(e)
        released += e.tokens
        if e.kind == "message":
            msg_tokens += e.tokens
    if released - compression_ratio * msg_tokens < budget_tokens:
        for e in deferred:
            if released - compression_ratio * msg_tokens >= budget_tokens:
                break
            victims.append(e)
            released += e.tokens
            if e.kind == "message":
                msg_tokens += e.tokens
    return victims


def compact(session: "Session", policy: ClmPolicy) -> int:
    """Adaptive compaction pass; returns summarizer input tokens consumed."""
    target = policy.target * session.limit
    if session.used <= target:
        return 0
    for e in session.window:
        if e.tokens > session.limit:
            raise CannotFitError(f"irreducible entry {e.to_dict()['kind']} exceeds the window")
    cost = 0
    for _ in range(64):  # each pass strictly shrinks the window
        if session.used <= target:
            break
        candidates = [
            e for e in session.window
            if not (e.kind == "summary" and e.summary.preserved_keys)
        ]
        if not candidates:
            break
        victims = select_victims(
            candidates,
            session.now_index,
            policy.weights,
            budget_tokens=session.used - target,
            compression_ratio=policy.compression_ratio,
            protect_topic=session.current_topic if len(candidates) > len(
                [e for e in candidates if e.topic == session.current_topic]
            ) else None,
        )
        if not victims:
            break
        session.victim_log.extend(
            e.message.id if e.message else e.summary.id for e in victims
        )
        # summaries age out to warm storage; messages go through the summarizer
        message_victims: list[WindowEntry] = []
        for e in victims:
            if e.kind == "summary":
                session.evict_summary_to_tier1(e)
            else:
                message_victims.append(e)
        runs = group_runs(session, message_victims)
        for run in runs:
            msgs = [e.message for e in run]
            order = min(e.order for e in run)
            for e in run:
                session.remove_entry(e)
            summary = summarize_stub(
                msgs, policy.compression_ratio, summary_id=session.next_summary_id()
            )
            cost += sum(m.tokens for m in msgs)
            session.mark_covered(msgs)
            session.insert_summary(summary, order=order)
    session.compact_cost_tokens += cost
    session.compactions += 1
    return cost


def group_runs(session: "Session", victims: list[WindowEntry]) -> list[list[WindowEntry]]:
    """Group victims that are adjacent in the current window into runs."""
    if not victims:
        return []
    pos = {id(e): i for i, e in enumerate(session.window)}
    ordered = sorted(victims, key=lambda e: pos[id(e)])
    runs: list[list[WindowEntry]] = [[ordered[0]]]
    for e in ordered[1:]:
        if pos[id(e)] == pos[id(runs[-1][-1])] + 1:
            runs[-1].append(e)
        else:
            runs.append([e])
    return runs


def make_context_policy(name: str, **kwargs) -> ContextPolicy:
    table = {
        "none": NoManagementPolicy,
        "fifo_truncate": FifoTruncatePolicy,
        "sliding_window": SlidingWindowPolicy,
        "memgpt": MemGptStylePolicy,
        "clm": ClmPolicy,
    }
    if name not in table:
        raise ValueError(f"unknown context policy {name!r}; choose from {sorted(table)}")
    return table[name](**kwargs)


ALL_CONTEXT_POLICIES = ("none", "fifo_truncate", "sliding_window", "memgpt", "clm")


class Session:
    """One agent's full memory: window, warm tier, cold transcript."""

    def __init__(self, agent_id: str, limit: int, policy: ContextPolicy, seed: int = 0) -> None:
        self.agent_id = agent_id
        self.limit = limit
        self.policy = policy
        self.seed = seed
        self.window: list[WindowEntry] = []
        self.tier1_summaries: dict[str, Summary] = {}
        self.tier1_messages: dict[str, Message] = {}
        self.tier2: list[Message] = []
        self.now_index = 0
        self.current_topic: str | None = None
        self.hibernated = False

        self.injections = 0
        self.messages_injected = 0
        self.keys_injected = 0
        self.overflow_events = 0
        self.compact_cost_tokens = 0
        self.compactions = 0
        self.faults = 0
        self.fault_latency_ms = 0
        self.uncovered_drops = 0
        self.util_sum = 0.0
        self.util_count = 0
        self._covered: set[str] = set()
        self._summary_seq = 0
        self.victim_log: list[str] = []
        ss = np.random.SeedSequence([seed, zlib.crc32(b"session")])
        self.rng = np.random.Generator(np.random.PCG64(ss))

    # -- window primitives -------------------------------------------------

    @property
    def used(self) -> int:
        return sum(e.tokens for e in self.window)

    def order_of(self, m: Message) -> float:
        return float(int(m.id[1:]))

    def next_summary_id(self) -> str:
        self._summary_seq += 1
        return f"s{self._summary_seq:04d}"

    def remove_entry(self, entry: WindowEntry) -> None:
        self.window.remove(entry)

    def drop_entry(self, entry: WindowEntry, covered: bool) -> None:
        """Remove an entry; an uncovered verbatim drop is a quality event."""
        self.remove_entry(entry)
        if entry.kind == "message" and not covered and entry.message.id not in self._covered:
            self.count_uncovered_drop(entry.message)

    def count_uncovered_drop(self, m: Message) -> None:
        self.uncovered_drops += 1

    def mark_covered(self, msgs: list[Message]) -> None:
        self._covered.update(m.id for m in msgs)

    def insert_summary(self, summary: Summary, order: float) -> None:
        entry = WindowEntry(order=order, kind="summary", summary=summary)
        self._insert_in_order(entry)
        self.tier1_summaries[summary.id] = summary

    def evict_summary_to_tier1(self, entry: WindowEntry) -> None:
        self.remove_entry(entry)
        self.tier1_summaries[entry.summary.id] = entry.summary

    def _insert_in_order(self, entry: WindowEntry) -> None:
        i = 0
        while i < len(self.window) and self.window[i].order <= entry.order:
            i += 1
        self.window.insert(i, entry)

    # -- injection ---------------------------------------------------------

    def inject(self, m: Message) -> int:
        """Add one message; returns the context-fault latency paid, in ms."""
        if self.hibernated:
            raise SessionHibernatedError(f"session {self.agent_id} is hibernated")
        self.now_index = max(self.now_index, m.turn_index)
        latency = self._fault_check(m) if self.policy.uses_tiers else 0
        self.current_topic = m.topic
        self.policy.pre_append(self, m)
        entry = WindowEntry(order=self.order_of(m), kind="message", message=m)
        self._insert_in_order(entry)
        self.tier2.append(m)
        self.injections += 1
        self.messages_injected += 1
        if m.is_key:
            self.keys_injected += 1
        self.policy.post_append(self, m)
        self.util_sum += self.used / self.limit
        self.util_count += 1
        return latency

    def _fault_check(self, m: Message) -> int:
        """Promote same-topic content from a lower tier when the window lacks it."""
        if any(e.topic == m.topic for e in self.window):
            return 0
        best_summary = None
        for s in self.tier1_summaries.values():
            if s.topic == m.topic and all(
                e.kind != "summary" or e.summary.id != s.id for e in self.window
            ):
                if best_summary is None or s.max_turn_index > best_summary.max_turn_index:
                    best_summary = s
        if best_summary is not None:
            self.faults += 1
            self.fault_latency_ms += TIER1_LATENCY_MS
            self.insert_summary(
                best_summary, order=min(float(int(i[1:])) for i in best_summary.source_ids)
            )
            return TIER1_LATENCY_MS
        window_ids = {e.message.id for e in self.window if e.kind == "message"}
        for msg in reversed(self.tier2):
            if msg.topic == m.topic and msg.id not in window_ids:
                self.faults += 1
                self.fault_latency_ms += TIER2_LATENCY_MS
                entry = WindowEntry(order=self.order_of(msg), kind="message", message=msg)
                self._insert_in_order(entry)
                return TIER2_LATENCY_MS
        return 0

    # -- reporting ---------------------------------------------------------

    def retention(self) -> float:
        """Fraction of key messages represented in the active window."""
        if self.keys_injected == 0:
            return 1.0
        represented: set[str] = set()
        for e in self.window:
            if e.kind == "message" and e.message.is_key:
                represented.add(e.message.id)
            elif e.kind == "summary":
                represented.update(e.summary.preserved_keys)
        all_keys = {m.id for m in self.tier2 if m.is_key}
        return len(represented & all_keys) / len(all_keys)

    def stats(self) -> dict:
        return {
            "injections": self.injections,
            "messages_injected": self.messages_injected,
            "overflow_events": self.overflow_events,
            "compact_cost_tokens": self.compact_cost_tokens,
            "uncovered_drops": self.uncovered_drops,
            "utilization_mean": self.util_sum / self.util_count if self.util_count else 0.0,
            "retention": self.retention(),
            "faults": self.faults,
            "fault_latency_ms": self.fault_latency_ms,
            "compactions": self.compactions,
        }

    def pressure_report(self) -> str:
        """Deterministic utilization block for self-monitoring injection."""
        pct = 100.0 * self.used / self.limit
        lines = [
            "[context-pressure]",
            f"used_tokens: {self.used}",
            f"limit_tokens: {self.limit}",
            f"utilization_pct: {pct:.1f}",
            f"tier1_records: {len(self.tier1_summaries) + len(self.tier1_messages)}",
            f"tier2_records: {len(self.tier2)}",
            f"compactions: {self.compactions}",
        ]
        return "\n".join(lines) + "\n"

    # -- hibernation -------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "limit": self.limit,
            "seed": self.seed,
            "policy": {"name": self.policy.name, "params": self.policy.params()},
            "window": [e.to_dict() for e in self.window],
            "tier1_summaries": {k: v.to_dict() for k, v in sorted(self.tier1_summaries.items())},
            "tier1_messages": {k: v.to_dict() for k, v in sorted(self.tier1_messages.items())},
            "tier2": [m.to_dict() for m in self.tier2],
            "now_index": self.now_index,
            "current_topic": self.current_topic,
            "counters": {
                "injections": self.injections,
                "messages_injected": self.messages_injected,
                "keys_injected": self.keys_injected,
                "overflow_events": self.overflow_events,
                "compact_cost_tokens": self.compact_cost_tokens,
                "compactions": self.compactions,
                "faults": self.faults,
                "fault_latency_ms": self.fault_latency_ms,
                "uncovered_drops": self.uncovered_drops,
                "util_sum": self.util_sum,
                "util_count": self.util_count,
                "summary_seq": self._summary_seq,
            },
            "covered": sorted(self._covered),
            "victim_log": list(self.victim_log),
            "rng_state": json.loads(json.dumps(self.rng.bit_generator.state)),
        }

    @staticmethod
    def from_state_dict(d: dict) -> "Session":
        policy = make_context_policy(d["policy"]["name"], **d["policy"]["params"])
        if isinstance(policy, ClmPolicy):
            policy.weights = tuple(policy.weights)
        s = Session(d["agent_id"], d["limit"], policy, seed=d["seed"])
        s.window = [WindowEntry.from_dict(e) for e in d["window"]]
        s.tier1_summaries = {k: Summary.from_dict(v) for k, v in d["tier1_summaries"].items()}
        s.tier1_messages = {k: Message.from_dict(v) for k, v in d["tier1_messages"].items()}
        s.tier2 = [Message.from_dict(m) for m in d["tier2"]]
        s.now_index = d["now_index"]
        s.current_topic = d["current_topic"]
        c = d["counters"]
        s.injections = c["injections"]
        s.messages_injected = c["messages_injected"]
        s.keys_injected = c["keys_injected"]
        s.overflow_events = c["overflow_events"]
        s.compact_cost_tokens = c["compact_cost_tokens"]
        s.compactions = c["compactions"]
        s.faults = c["faults"]
        s.fault_latency_ms = c["fault_latency_ms"]
        s.uncovered_drops = c["uncovered_drops"]
        s.util_sum = c["util_sum"]
        s.util_count = c["util_count"]
        s._summary_seq = c["summary_seq"]
        s._covered = set(d["covered"])
        s.victim_log = list(d["victim_log"])
        s.rng.bit_generator.state = d["rng_state"]
        return s


def hibernate(session: Session) -> bytes:
    """Serialize complete session state into a checksummed image."""
    payload = json.dumps(session.state_dict(), sort_keys=True, separators=(",", ":"))
    body = json.dumps(
        {"version": HIBERNATION_VERSION, "agent_id": session.agent_id, "state": payload},
        sort_keys=True,
    )
    checksum = hashlib.sha256(body.encode()).hexdigest()
    image = json.dumps({"checksum": checksum, "body": body}, sort_keys=True)
    session.hibernated = True
    return image.encode()


def restore(image: bytes) -> Session:
    """Rebuild a session from an image; validates checksum and version."""
    try:
        outer = json.loads(image.decode())
        body = outer["body"]
        checksum = outer["checksum"]
    except (ValueError, KeyError) as exc:
        raise ChecksumMismatchError("image is not parseable") from exc
    if hashlib.sha256(body.encode()).hexdigest() != checksum:
        raise ChecksumMismatchError("hibernation image checksum mismatch")
    doc = json.loads(body)
    if doc["version"] != HIBERNATION_VERSION:
        raise VersionUnsupportedError(f"unsupported image version {doc['version']}")
    return Session.from_state_dict(json.loads(doc["state"]))


def parse_pressure_report(text: str) -> dict:
    """Read the numbers back out of a pressure block."""
    out: dict = {}
    for line in text.strip().splitlines():
        if line.startswith("["):
            continue
        k, v = line.split(": ", 1)
        out[k] = float(v) if "." in v else int(v)
    return out


def run_session(messages: list[Message], policy: ContextPolicy | str,
                limit: int = 50_000, seed: int = 0, agent_id: str = "agent") -> Session:
    """Drive a full message stream through one policy."""
    if isinstance(policy, str):
        policy = make_context_policy(policy)
    session = Session(agent_id, limit, policy, seed=seed)
    for m in messages:
        session.inject(m)
    return session
