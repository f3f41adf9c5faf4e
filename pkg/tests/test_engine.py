import pytest
from hypothesis import given, strategies as st

from qkdsim.engine import (
    Engine,
    format_duration,
    format_time,
    millis,
    parse_duration,
    seconds,
)
from qkdsim.errors import EngineFinished, EventFailure


def recording_engine():
    engine = Engine()
    log = []
    engine.register("a", lambda p: log.append((engine.now(), p)))
    return engine, log


def test_now_before_run_is_zero():
    assert Engine().now() == 0


def test_empty_queue_run():
    summary = Engine().run(seconds(1))
    assert summary.events_processed == 0
    assert summary.final_time == 0


def test_delay_fires_at_offset():
    engine, log = recording_engine()
    engine.schedule(millis(10), "a", "timer")
    engine.run(seconds(1))
    assert log == [(10_000_000, "timer")]


def test_run_until_stops_inclusive():
    engine, log = recording_engine()
    for t in (1, 2, 3):
        engine.schedule(seconds(t), "a", t)
    summary = engine.run(seconds(2))
    assert summary.events_processed == 2
    assert [p for _, p in log] == [1, 2]


def test_final_time_is_last_event_not_horizon():
    engine, _ = recording_engine()
    engine.schedule(seconds(25), "a", None)
    assert engine.run(seconds(30)).final_time == seconds(25)


def test_now_inside_handler():
    engine = Engine()
    seen = []
    engine.register("r", lambda p: seen.append(engine.now()))
    engine.schedule(seconds("20.256"), "r")
    engine.run(seconds(30))
    assert seen == [20_256_000_000]


def test_same_time_fifo():
    engine, log = recording_engine()
    engine.schedule(seconds(1), "a", "e1")
    engine.schedule(seconds(1), "a", "e2")
    engine.run(seconds(2))
    assert [p for _, p in log] == ["e1", "e2"]


def test_zero_delay_runs_after_earlier_same_time_events():
    engine = Engine()
    order = []

    def first(_):
        order.append("first")
        engine.schedule(0, "b", "zero-delay")

    engine.register("a", first)
    engine.register("b", order.append)
    engine.schedule(seconds(5), "a")
    engine.schedule(seconds(5), "b", "already-queued")
    engine.run(seconds(10))
    assert order == ["first", "already-queued", "zero-delay"]


def test_cancel():
    engine, log = recording_engine()
    eid = engine.schedule(1, "a", "x")
    engine.schedule(2, "a", "y")
    engine.cancel(eid)
    assert engine.run(10).events_processed == 1
    assert [p for _, p in log] == ["y"]


def test_schedule_after_run_rejected():
    engine, _ = recording_engine()
    engine.run(seconds(1))
    with pytest.raises(EngineFinished):
        engine.schedule(0, "a", None)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        Engine().schedule(-1, "a")


def test_handler_failure_identifies_event():
    engine = Engine()

    def boom(_):
        raise RuntimeError("kaput")

    engine.register("bad", boom)
    engine.schedule(seconds(3), "bad", "payload")
    with pytest.raises(EventFailure) as info:
        engine.run(seconds(5))
    assert info.value.event.target == "bad"
    assert info.value.event.fire_time == seconds(3)
    assert "kaput" in str(info.value)


def test_unregistered_target_fails_run():
    engine = Engine()
    engine.schedule(0, "nobody")
    with pytest.raises(EventFailure):
        engine.run(1)


def test_ten_thousand_seconds_representable():
    engine, log = recording_engine()
    engine.schedule(seconds(10_000), "a", "late")
    engine.run(seconds(10_001))
    assert log == [(10_000 * 10**9, "late")]


@given(st.lists(st.integers(min_value=0, max_value=50), max_size=60))
def test_dequeue_order_is_stable_sort_by_time(times):
    engine = Engine()
    seen = []
    engine.register("a", seen.append)
    for i, t in enumerate(times):
        engine.schedule(t, "a", i)
    engine.run(100)
    expected = [i for i, _ in sorted(enumerate(times), key=lambda p: p[1])]
    assert seen == expected


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 5)), max_size=40))
def test_replay_is_deterministic(plan):
    def replay():
        engine = Engine()
        seen = []

        def handler(p):
            seen.append((engine.now(), p))
            idx, spawn = p
            if spawn:
                engine.schedule(spawn, "a", (idx, 0))

        engine.register("a", handler)
        for i, (t, spawn) in enumerate(plan):
            engine.schedule(t, "a", (i, spawn))
        engine.run(1000)
        return seen

    assert replay() == replay()


@pytest.mark.parametrize(
    "text, ns",
    [("20.256s", 20_256_000_000), ("10ms", 10_000_000), ("3.2704ms", 3_270_400), ("7us", 7000), ("5ns", 5), (42, 42)],
)
def test_parse_duration(text, ns):
    assert parse_duration(text) == ns


@pytest.mark.parametrize("bad", ["1.5ns", "12", "abc s", True, 1.5])
def test_parse_duration_rejects(bad):
    with pytest.raises(ValueError):
        parse_duration(bad)


@given(st.integers(min_value=0, max_value=10**13))
def test_format_duration_round_trip(ns):
    assert parse_duration(format_duration(ns)) == ns


def test_format_time():
    assert format_time(0) == "+0.000000000s"
    assert format_time(20_256_000_000) == "+20.256000000s"
