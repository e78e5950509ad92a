"""Durable formats: cold log, warm store, image files, layout."""

import random

import pytest

from resman.errors import IoFailureError, NotFoundError
from resman.persistence import (
    ColdLog,
    WarmRecord,
    WarmStore,
    read_hibernation_image,
    run_dir,
    session_dir,
    write_event_log,
    write_hibernation_image,
)
from resman.workloads import BUILTIN_SESSIONS, gen_session


def test_cold_log_appends_with_increasing_sequence(tmp_path):
    log = ColdLog(tmp_path / "cold.log", "s1")
    msgs = gen_session(BUILTIN_SESSIONS["50turn"], 0)
    assert log.append(msgs[0]) == 0
    assert log.append(msgs[1]) == 1
    assert log.replay() == msgs[:2]


def test_cold_log_replay_reconstructs_full_session(tmp_path):
    msgs = gen_session(BUILTIN_SESSIONS["200turn"], 1)
    log = ColdLog(tmp_path / "cold.log", "s1")
    for m in msgs:
        log.append(m)
    # reopen from disk and compare byte-for-byte content equality
    replayed = ColdLog(tmp_path / "cold.log", "s1").replay()
    assert replayed == msgs


def test_cold_log_rejects_append_after_close(tmp_path):
    log = ColdLog(tmp_path / "cold.log", "s1")
    log.close()
    with pytest.raises(IoFailureError):
        log.append(gen_session(BUILTIN_SESSIONS["50turn"], 0)[0])


def test_cold_log_tolerates_torn_tail(tmp_path):
    msgs = gen_session(BUILTIN_SESSIONS["50turn"], 2)
    path = tmp_path / "cold.log"
    log = ColdLog(path, "s1")
    for m in msgs[:5]:
        log.append(m)
    with open(path, "a", encoding="utf-8") as f:
        f.write('{"session_id": "s1", "seq": 5, "truncat')  # simulated crash
    with pytest.warns(UserWarning):
        replayed = ColdLog(path, "s1").replay()
    assert replayed == msgs[:5]


def test_cold_log_reopen_continues_sequence(tmp_path):
    msgs = gen_session(BUILTIN_SESSIONS["50turn"], 3)
    path = tmp_path / "cold.log"
    log = ColdLog(path, "s1")
    log.append(msgs[0])
    log2 = ColdLog(path, "s1")
    assert log2.append(msgs[1]) == 1


def test_warm_store_put_get_round_trip(tmp_path):
    store = WarmStore(tmp_path / "warm.db")
    rec = WarmRecord(
        id="s0001", source_ids=["m0001", "m0002"], tokens=250,
        preserved_keys=["m0002"], fidelity=0.9, created_at=41,
    )
    store.put(rec)
    assert store.get("s0001") == rec
    with pytest.raises(NotFoundError):
        store.get("s9999")


def test_warm_store_last_write_wins_and_reopen_rebuilds(tmp_path):
    path = tmp_path / "warm.db"
    store = WarmStore(path)
    a = WarmRecord("s0001", ["m0001"], 100, [], 0.7, 1)
    b = WarmRecord("s0001", ["m0001"], 120, [], 0.7, 2)
    store.put(a)
    store.put(b)
    reopened = WarmStore(path)
    assert reopened.get("s0001") == b
    assert len(reopened) == 1


def test_warm_store_many_round_trips(tmp_path):
    store = WarmStore(tmp_path / "warm.db")
    rng = random.Random(0)
    recs = [
        WarmRecord(
            id=f"s{i:04d}", source_ids=[f"m{i:04d}"], tokens=rng.randint(1, 999),
            preserved_keys=[f"m{i:04d}"] if i % 3 == 0 else [],
            fidelity=rng.choice([0.7, 0.9]), created_at=i,
        )
        for i in range(500)
    ]
    for r in recs:
        store.put(r)
    reopened = WarmStore(tmp_path / "warm.db")
    for r in recs:
        assert reopened.get(r.id) == r


def test_file_layout_and_image_io(tmp_path):
    s = session_dir(tmp_path, "sess-1")
    assert s == tmp_path / "sessions" / "sess-1"
    r = run_dir(tmp_path, "run-1")
    assert r == tmp_path / "runs" / "run-1"

    write_event_log(r, ["0\tstart", "5\tstop"])
    assert (r / "events.log").read_text() == "0\tstart\n5\tstop\n"

    write_hibernation_image(s, b"image-bytes")
    assert read_hibernation_image(s) == b"image-bytes"
    with pytest.raises(NotFoundError):
        read_hibernation_image(r)
