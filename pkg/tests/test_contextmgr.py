"""Context window policies, compaction, faults, and hibernation."""

import pytest

from resman.contextmgr import (
    ALL_CONTEXT_POLICIES,
    ClmPolicy,
    Session,
    WindowEntry,
    compact,
    hibernate,
    make_context_policy,
    message_value,
    parse_pressure_report,
    restore,
    run_session,
    summarize_stub,
)
from resman.errors import (
    CannotFitError,
    ChecksumMismatchError,
    SessionHibernatedError,
    VersionUnsupportedError,
)
from resman.workloads import BUILTIN_SESSIONS, Message, gen_session


def msg(i, tokens=500, importance=0.3, is_key=False, topic="main", turn=None):
    return Message(
        id=f"m{i:04d}", turn_index=i if turn is None else turn, role="user",
        tokens=tokens, importance=importance, is_key=is_key, topic=topic,
        content_digest="0" * 16,
    )


def session(policy="clm", limit=10_000, **kw):
    return Session("a0", limit, make_context_policy(policy, **kw), seed=0)


# -- value and summaries ----------------------------------------------------

def test_value_rewards_recency_importance_and_keys():
    old = msg(0, importance=0.2)
    new = msg(9, importance=0.2)
    assert message_value(new, 9) > message_value(old, 9)
    assert message_value(msg(5, importance=0.9), 9) > message_value(msg(5, importance=0.1), 9)
    assert message_value(msg(5, is_key=True), 9) > message_value(msg(5), 9)


def test_summarize_stub_compresses_and_preserves_keys():
    msgs = [msg(0, tokens=400), msg(1, tokens=400, is_key=True), msg(2, tokens=200)]
    s = summarize_stub(msgs, 0.25)
    assert s.tokens == 250
    assert s.preserved_keys == ["m0001"]
    assert s.fidelity == 0.9
    assert s.source_ids == ["m0000", "m0001", "m0002"]


def test_summaries_are_irreducible():
    s = summarize_stub([msg(0)], 0.25)
    with pytest.raises(ValueError):
        summarize_stub([s], 0.25)
    with pytest.raises(ValueError):
        summarize_stub([], 0.25)


# -- policy mechanics -------------------------------------------------------

def test_none_policy_counts_overflows_and_truncates():
    s = session("none", limit=1_000)
    for i in range(4):
        s.inject(msg(i, tokens=400))
    assert s.overflow_events >= 1
    assert s.used <= 1_000
    assert s.uncovered_drops >= 1


def test_fifo_truncate_never_overflows():
    s = session("fifo_truncate", limit=1_000)
    for i in range(10):
        s.inject(msg(i, tokens=400))
        assert s.used <= 1_000
    assert s.overflow_events == 0


def test_sliding_window_keeps_recent_turns():
    s = session("sliding_window", limit=100_000, keep_turns=15)
    for i in range(40):
        s.inject(msg(i, tokens=100))
    indices = [e.message.turn_index for e in s.window]
    assert min(indices) > 40 - 1 - 15
    assert len(indices) == 15


def test_memgpt_evicts_to_tier1_with_cheap_summary():
    s = session("memgpt", limit=10_000)
    for i in range(30):
        s.inject(msg(i, tokens=600, is_key=(i % 5 == 0)))
    assert s.tier1_messages, "evicted messages should land in the recall store"
    assert any(e.kind == "summary" for e in s.window)
    assert s.compact_cost_tokens > 0
    # only half of each evicted block is read by the summarizer
    evicted = sum(m.tokens for m in s.tier1_messages.values())
    assert s.compact_cost_tokens < evicted


def test_clm_compacts_to_target_and_pins_key_summaries():
    s = session("clm", limit=10_000)
    for i in range(40):
        s.inject(msg(i, tokens=600, is_key=(i % 6 == 0), importance=0.2))
    assert s.compactions >= 1
    assert s.used <= 0.75 * s.limit
    pinned = [e for e in s.window if e.kind == "summary" and e.summary.preserved_keys]
    assert pinned, "key-preserving summaries must stay in the window"
    assert s.retention() == 1.0


def test_clm_uses_lower_trigger_for_large_messages():
    p = ClmPolicy()
    s = session("clm", limit=50_000)
    for i in range(3):
        s.inject(msg(i, tokens=500))   # avg below limit/50
    assert p.effective_trigger(s) == p.trigger
    s2 = session("clm", limit=50_000)
    for i in range(3):
        s2.inject(msg(i, tokens=1_200))  # avg above limit/50
    assert p.effective_trigger(s2) == p.trigger_large_msgs


def test_compact_raises_when_an_entry_cannot_fit():
    s = session("clm", limit=1_000)
    s.window.append(WindowEntry(order=0.0, kind="message", message=msg(0, tokens=5_000)))
    with pytest.raises(CannotFitError):
        compact(s, ClmPolicy())


def test_low_value_messages_are_chosen_first():
    s = session("clm", limit=10_000)
    for i in range(30):
        s.inject(msg(i, tokens=600, importance=(0.9 if i < 5 else 0.05)))
    # early high-importance messages should outlive later filler
    surviving = {e.message.id for e in s.window if e.kind == "message"}
    assert sum(1 for i in range(5) if f"m{i:04d}" in surviving) >= 3


# -- context faults ---------------------------------------------------------

def test_tier2_fault_promotes_verbatim_message():
    s = session("clm", limit=4_000)
    for i in range(12):
        s.inject(msg(i, tokens=600, topic="alpha", importance=0.05))
    # push alpha content fully out by switching topics under pressure
    j = 12
    while any(e.topic == "alpha" for e in s.window):
        s.inject(msg(j, tokens=600, topic="beta", importance=0.9))
        j += 1
        assert j < 60
    before = s.faults
    latency = s.inject(msg(j, tokens=100, topic="alpha", importance=0.9))
    assert latency in (1_000, 3_000)
    assert s.faults == before + 1
    assert s.fault_latency_ms >= latency


def test_no_fault_when_topic_is_resident():
    s = session("clm", limit=50_000)
    s.inject(msg(0, topic="alpha"))
    assert s.inject(msg(1, topic="alpha")) == 0
    assert s.faults == 0


# -- pressure report --------------------------------------------------------

def test_pressure_report_round_trip():
    s = session("clm", limit=10_000)
    for i in range(6):
        s.inject(msg(i, tokens=500))
    text = s.pressure_report()
    parsed = parse_pressure_report(text)
    assert parsed["used_tokens"] == s.used
    assert parsed["limit_tokens"] == 10_000
    assert parsed["utilization_pct"] == pytest.approx(100.0 * s.used / s.limit, abs=0.05)
    assert parsed["tier2_records"] == 6


# -- hibernation ------------------------------------------------------------

def test_hibernate_restore_deep_equality():
    cfg = BUILTIN_SESSIONS["multitopic"]
    for policy in ALL_CONTEXT_POLICIES:
        s = run_session(gen_session(cfg, 3), policy, limit=cfg.window_limit, seed=3)
        r = restore(hibernate(s))
        assert r.state_dict() == s.state_dict(), policy


def test_hibernated_session_rejects_injection():
    s = session("clm")
    s.inject(msg(0))
    hibernate(s)
    with pytest.raises(SessionHibernatedError):
        s.inject(msg(1))


def test_tampered_image_is_rejected():
    s = session("clm")
    s.inject(msg(0))
    image = hibernate(s)
    tampered = image.replace(b"a0", b"zz")  # flips bytes inside the signed body
    with pytest.raises(ChecksumMismatchError):
        restore(tampered)
    with pytest.raises(ChecksumMismatchError):
        restore(b"not an image")


def test_unsupported_version_is_rejected():
    import hashlib, json
    body = json.dumps({"version": 99, "agent_id": "a0", "state": "{}"}, sort_keys=True)
    image = json.dumps(
        {"checksum": hashlib.sha256(body.encode()).hexdigest(), "body": body}
    ).encode()
    with pytest.raises(VersionUnsupportedError):
        restore(image)


def test_interrupted_run_matches_uninterrupted():
    cfg = BUILTIN_SESSIONS["100turn"]
    msgs = gen_session(cfg, 5)
    straight = run_session(msgs, "clm", limit=cfg.window_limit, seed=5)
    part = Session("agent", cfg.window_limit, make_context_policy("clm"), seed=5)
    for m in msgs[:77]:
        part.inject(m)
    resumed = restore(hibernate(part))
    for m in msgs[77:]:
        resumed.inject(m)
    assert resumed.stats() == straight.stats()
    assert resumed.state_dict() == straight.state_dict()
