"""Deterministic discrete-event engine with integer-nanosecond time.

One engine instance drives one simulation replication, strictly
single-threaded.  Reproducibility contract: the same master seed and the
same sequence of schedule() calls produce the same event order and the
same random draws on any platform.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def us(x: float) -> int:
    """Microseconds to integer nanosecond ticks (must convert exactly)."""
    t = x * NS_PER_US
    it = int(round(t))
    if abs(t - it) > 1e-9:
        raise ValueError(f"{x} us is not an integer number of ns")
    return it


def ms(x: float) -> int:
    return us(x * 1_000)


def seconds(x: float) -> int:
    return us(x * 1_000_000)


class PastEventError(Exception):
    """Raised when an event is scheduled before the current clock."""


class EventKind(Enum):
    FRAME_ARRIVAL = 1
    REPORT_AT_OLT = 2
    GATE_AT_ONU = 3
    TX_START = 4
    TX_END = 5
    FL_ROUND_START = 6
    FL_AGGREGATE = 7
    STATS_FLUSH = 8


@dataclass(slots=True)
class Event:
    fire_at: int
    kind: EventKind
    data: Any = None
    sequence: int = -1  # assigned by the engine at schedule time


def _derive_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    # Hash keeps streams independent for any (seed, name) combination and
    # stable across platforms and Python hash randomization.
    digest = hashlib.sha256(f"{master_seed}\x1f{name}".encode()).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8, 16, 24)]
    return np.random.SeedSequence(words)


class RngStream:
    """Named random stream, deterministic in (master seed, name).

    Backed by the counter-based Philox generator so draw sequences are
    identical on every platform and independent across names.
    """

    def __init__(self, name: str, master_seed: int):
        self.name = name
        self.master_seed = master_seed
        self._gen = np.random.Generator(np.random.Philox(_derive_seed(master_seed, name)))

    def random(self, n: int | None = None):
        return self._gen.random(n)

    def uniform(self, lo: float, hi: float, n: int | None = None):
        return self._gen.uniform(lo, hi, n)

    def integers(self, lo: int, hi: int, n: int | None = None):
        """Uniform integers in [lo, hi] inclusive."""
        return self._gen.integers(lo, hi, size=n, endpoint=True)

    def pareto(self, shape: float, scale: float, n: int | None = None):
        """Classic (type I) Pareto with minimum value `scale`."""
        u = self._gen.random(n)
        return scale * (1.0 - u) ** (-1.0 / shape)

    def bounded_pareto(self, shape: float, lo: float, hi: float, n: int | None = None):
        """Pareto truncated to [lo, hi] via inverse CDF."""
        u = self._gen.random(n)
        ratio = (lo / hi) ** shape
        return lo * (1.0 - u * (1.0 - ratio)) ** (-1.0 / shape)


class Engine:
    """Pending-event set with (fire_at, insertion sequence) total order."""

    def __init__(self, master_seed: int = 1):
        self.master_seed = master_seed
        self._now = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._streams: dict[str, RngStream] = {}
        self._handlers: dict[EventKind, Callable[[Engine, Event], None]] = {}
        self.scheduled_count = 0
        self.processed_count = 0

    # -- clock ----------------------------------------------------------

    def now(self) -> int:
        return self._now

    # -- random streams --------------------------------------------------

    def rng(self, name: str) -> RngStream:
        stream = self._streams.get(name)
        if stream is None:
            stream = RngStream(name, self.master_seed)
            self._streams[name] = stream
        return stream

    # -- event queue ------------------------------------------------------

    def on(self, kind: EventKind, handler: Callable[[Engine, Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self._now:
            raise PastEventError(f"fire_at={event.fire_at} < now={self._now}")
        event.sequence = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (event.fire_at, event.sequence, event))
        self.scheduled_count += 1
        return event

    def schedule_at(self, fire_at: int, kind: EventKind, data: Any = None) -> Event:
        return self.schedule(Event(fire_at, kind, data))

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: int) -> int:
        """Process all events with fire_at <= t_end; clock ends at t_end."""
        queue = self._queue
        handlers = self._handlers
        processed = 0
        while queue and queue[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(queue)
            self._now = fire_at
            processed += 1
            self.processed_count += 1
            handlers[event.kind](self, event)
        self._now = t_end
        return processed
