"""Kernel determinism: clock, substreams, event ordering, cancellation."""

import pytest

from resman.errors import PastTimeError
from resman.simkernel import EventLoop, EventQueue, SeededRng, VirtualClock


def test_clock_monotonic():
    c = VirtualClock()
    c.advance_to(10)
    c.advance_to(10)
    assert c.now == 10
    with pytest.raises(PastTimeError):
        c.advance_to(9)


def test_substreams_reproducible_and_independent():
    a = SeededRng(123)
    b = SeededRng(123)
    # consuming an unrelated stream must not perturb another stream
    a.stream("noise").random(1000)
    assert list(a.stream("arrivals").random(5)) == list(b.stream("arrivals").random(5))
    assert list(SeededRng(1).stream("x").random(3)) != list(SeededRng(2).stream("x").random(3))


def test_same_stream_name_is_cached():
    r = SeededRng(5)
    assert r.stream("s") is r.stream("s")


def test_event_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.push(20, "late")
    q.push(10, "first")
    q.push(10, "second")
    fired = [q.pop()[1] for _ in range(3)]
    assert fired == ["first", "second", "late"]
    assert q.pop() is None


def test_event_cancellation_and_counters():
    q = EventQueue()
    e1 = q.push(5, "a")
    e2 = q.push(6, "b")
    assert q.cancel(e1) is True
    assert q.cancel(e1) is False  # already gone
    assert q.peek_time() == 6
    assert q.pop() == (6, "b")
    assert (q.scheduled, q.fired, q.cancelled) == (2, 1, 1)
    assert q.cancel(e2) is False


def test_loop_runs_in_causal_order():
    loop = EventLoop()
    seen = []
    loop.schedule(30, lambda: seen.append(("c", loop.clock.now)))
    loop.schedule(10, lambda: seen.append(("a", loop.clock.now)))
    loop.schedule(10, lambda: seen.append(("b", loop.clock.now)))
    loop.run_until(50)
    assert seen == [("a", 10), ("b", 10), ("c", 30)]
    assert loop.clock.now == 50


def test_run_until_on_empty_queue_advances_clock():
    loop = EventLoop()
    assert loop.run_until(60_000) == 60_000
    assert loop.clock.now == 60_000


def test_handlers_may_schedule_further_events():
    loop = EventLoop()
    seen = []

    def first():
        seen.append(loop.clock.now)
        loop.schedule(loop.clock.now + 5, lambda: seen.append(loop.clock.now))

    loop.schedule(1, first)
    loop.run_to_completion()
    assert seen == [1, 6]


def test_cannot_schedule_in_the_past():
    loop = EventLoop()
    loop.run_until(100)
    with pytest.raises(PastTimeError):
        loop.schedule(50, lambda: None)
    with pytest.raises(PastTimeError):
        loop.run_until(50)


def test_hard_limit_guards_runaway_simulations():
    loop = EventLoop()

    def reschedule():
        loop.schedule(loop.clock.now + 1000, reschedule)

    loop.schedule(0, reschedule)
    with pytest.raises(RuntimeError):
        loop.run_to_completion(hard_limit=50_000)
