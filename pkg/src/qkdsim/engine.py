"""Deterministic discrete-event core.

Simulated time is an integer count of nanoseconds. Events firing at the same
instant are processed in the order they were scheduled.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Callable

from qkdsim.errors import ConfigurationError, EngineFinished, EventFailure

NS_PER_SECOND = 1_000_000_000

_UNITS = {
    "ns": 1,
    "us": 1_000,
    "ms": 1_000_000,
    "s": NS_PER_SECOND,
}


def seconds(value) -> int:
    """Convert a number of seconds (int, str or Decimal) to nanoseconds exactly."""
    return _to_ns(Decimal(str(value)), NS_PER_SECOND)


def millis(value) -> int:
    return _to_ns(Decimal(str(value)), 1_000_000)


def _to_ns(amount: Decimal, scale: int) -> int:
    ns = amount * scale
    if ns != ns.to_integral_value():
        raise ValueError(f"{amount} is not a whole number of nanoseconds")
    return int(ns)


def parse_duration(value) -> int:
    """Parse ``"20.256s"``, ``"10ms"``, ``"3270400ns"`` or a bare integer (ns)."""
    if isinstance(value, bool):
        raise ValueError(f"not a duration: {value!r}")
    if isinstance(value, int):
        return value
    if not isinstance(value, str):
        raise ValueError(f"not a duration: {value!r}")
    text = value.strip()
    for unit in ("ns", "us", "ms", "s"):
        if text.endswith(unit):
            number = text[: -len(unit)].strip()
            try:
                return _to_ns(Decimal(number), _UNITS[unit])
            except InvalidOperation:
                raise ValueError(f"not a duration: {value!r}") from None
    raise ValueError(f"duration {value!r} needs a unit (ns, us, ms, s)")


def format_duration(ns: int) -> str:
    """Inverse of :func:`parse_duration`, using the coarsest exact unit."""
    if ns == 0:
        return "0s"
    for unit in ("s", "ms", "us"):
        scale = _UNITS[unit]
        if ns % scale == 0:
            return f"{ns // scale}{unit}"
    # Fractional milliseconds read better than long ns counts.
    if ns >= 1_000_000:
        return f"{Decimal(ns) / 1_000_000}ms"
    return f"{ns}ns"


def format_time(ns: int) -> str:
    """Render a timestamp the way trace lines do: ``+20.256000000s``."""
    return f"+{ns // NS_PER_SECOND}.{ns % NS_PER_SECOND:09d}s"


@dataclass(frozen=True)
class Event:
    fire_time: int
    seq: int
    target: str
    payload: Any = field(compare=False)

    def describe(self) -> str:
        return f"event #{self.seq} at {format_time(self.fire_time)} target={self.target} payload={self.payload!r:.80}"


@dataclass(frozen=True)
class RunSummary:
    events_processed: int
    final_time: int


class Engine:
    """Clock, event queue and run loop.

    Handlers are registered by name; ``schedule`` addresses them by that name
    and the handler receives the event payload.
    """

    def __init__(self) -> None:
        self._now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._cancelled: set[int] = set()
        self._handlers: dict[str, Callable[[Any], None]] = {}
        self._finished = False
        self.current_event: Event | None = None

    def register(self, target: str, handler: Callable[[Any], None]) -> None:
        if target in self._handlers:
            raise ConfigurationError(f"handler already registered for {target!r}")
        self._handlers[target] = handler

    def now(self) -> int:
        return self._now

    @property
    def finished(self) -> bool:
        return self._finished

    def schedule(self, delay: int, target: str, payload: Any = None) -> int:
        if self._finished:
            raise EngineFinished("cannot schedule events after the run has completed")
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        event = Event(self._now + delay, self._seq, target, payload)
        self._seq += 1
        heapq.heappush(self._queue, (event.fire_time, event.seq, event))
        return event.seq

    def cancel(self, event_id: int) -> None:
        self._cancelled.add(event_id)

    def pending(self) -> int:
        return len(self._queue) - len(self._cancelled)

    def run(self, until: int) -> RunSummary:
        if self._finished:
            raise EngineFinished("engine has already run")
        processed = 0
        try:
            while self._queue and self._queue[0][0] <= until:
                _, seq, event = heapq.heappop(self._queue)
                if seq in self._cancelled:
                    self._cancelled.discard(seq)
                    continue
                self._now = event.fire_time
                handler = self._handlers.get(event.target)
                self.current_event = event
                try:
                    if handler is None:
                        raise ConfigurationError(f"no handler registered for {event.target!r}")
                    handler(event.payload)
                except Exception as exc:
                    raise EventFailure(event, exc) from exc
                processed += 1
        finally:
            self.current_event = None
            self._finished = True
        return RunSummary(processed, self._now)
