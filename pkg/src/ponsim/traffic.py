"""Per-ONU frame arrival generators for the four traffic classes.

Delay-critical traffic is a fixed-rate CBR flow; delay-sensitive and
best-effort traffic come from Pareto ON-OFF sources whose aggregate is
self-similar; federated-learning uploads enter the queue as one frame
burst per round.

All generators are open loop: arrival times never depend on scheduling,
so the same seed yields the same arrival trace under every scheduler.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as _np

from .kernel import NS_PER_S, RngStream

ETHERNET_MIN_PAYLOAD = 64
ETHERNET_MAX_PAYLOAD = 1518
MTU = 1500
FRAME_OVERHEAD_BYTES = 20  # preamble + IPG equivalent, on the wire per frame
MEAN_UNIFORM_PAYLOAD = (ETHERNET_MIN_PAYLOAD + ETHERNET_MAX_PAYLOAD) / 2.0


class ConfigError(Exception):
    pass


class TrafficClass(Enum):
    FL = "fl"
    DC = "dc"
    DS = "ds"
    BE = "be"


CLASSES = (TrafficClass.FL, TrafficClass.DC, TrafficClass.DS, TrafficClass.BE)


@dataclass(slots=True)
class Frame:
    """One Ethernet frame; the unit of queuing and delay measurement."""

    id: int
    onu: int
    cls: TrafficClass
    payload_bytes: int
    arrival: int
    overhead_bytes: int = FRAME_OVERHEAD_BYTES
    fl_round: Optional[int] = None

    def __post_init__(self):
        if not ETHERNET_MIN_PAYLOAD <= self.payload_bytes <= ETHERNET_MAX_PAYLOAD:
            raise ConfigError(
                f"payload {self.payload_bytes} outside "
                f"[{ETHERNET_MIN_PAYLOAD}, {ETHERNET_MAX_PAYLOAD}]"
            )
        if (self.fl_round is not None) != (self.cls is TrafficClass.FL):
            raise ConfigError("fl_round must be present exactly for FL frames")

    @property
    def wire_bytes(self) -> int:
        return self.payload_bytes + self.overhead_bytes


@dataclass
class CbrSpec:
    packet_bytes: int = 70
    interarrival_ns: int = 12_500

    def __post_init__(self):
        if self.packet_bytes <= 0 or self.interarrival_ns <= 0:
            raise ConfigError("CBR packet size and inter-arrival must be positive")

    @property
    def rate_bps(self) -> float:
        return 8.0 * self.packet_bytes / (self.interarrival_ns / NS_PER_S)


def bounded_pareto_mean(shape: float, lo: float, hi: float) -> float:
    """Analytic mean of a Pareto truncated to [lo, hi] (shape != 1)."""
    if shape == 1.0:
        raise ConfigError("shape 1 not supported")
    ratio = (lo / hi) ** shape
    return (lo**shape / (1.0 - ratio)) * (shape / (shape - 1.0)) * (
        lo ** (1.0 - shape) - hi ** (1.0 - shape)
    )


@dataclass
class ParetoOnOffSpec:
    """Self-similar ON-OFF source.

    During ON the source emits back-to-back frames (uniform payload) until
    a bounded-Pareto byte budget is spent; OFF durations follow a bounded
    Pareto with the same tail index (the wide cap keeps the sample mean
    honest so the long-run rate converges to the target; the in-band
    long-range dependence comes from the heavy-tailed periods either way).
    The tail index follows from the Hurst parameter as shape = 3 - 2H.

    One of mean_on_ns / peak_rate_bps fixes the emission speed (the other
    is derived); the OFF mean is then set so the long-run payload rate
    equals target_rate_bps.
    """

    target_rate_bps: float
    hurst: float = 0.8
    shape_on: float | None = None
    burst_shape: float | None = None
    burst_min_bytes: int = 1_500
    burst_max_bytes: int = 1_500_000
    mean_on_ns: float | None = None
    peak_rate_bps: float | None = None
    off_bound_ratio: float = 200.0  # OFF cap as a multiple of the OFF scale

    # derived at validation time
    mean_off_ns: float = field(init=False, default=0.0)
    mean_burst_bytes: float = field(init=False, default=0.0)
    off_min_ns: float = field(init=False, default=0.0)
    off_max_ns: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.target_rate_bps < 0:
            raise ConfigError("target rate must be >= 0")
        if not 0.5 < self.hurst < 1.0:
            raise ConfigError("hurst must lie in (0.5, 1)")
        if self.shape_on is None:
            self.shape_on = 3.0 - 2.0 * self.hurst
        if self.burst_shape is None:
            self.burst_shape = self.shape_on
        if self.burst_min_bytes >= self.burst_max_bytes:
            raise ConfigError("burst_min must be < burst_max")
        if self.off_bound_ratio <= 1.0:
            raise ConfigError("off_bound_ratio must exceed 1")
        self.mean_burst_bytes = bounded_pareto_mean(
            self.burst_shape, self.burst_min_bytes, self.burst_max_bytes
        )
        if self.target_rate_bps == 0:
            return
        wire_factor = 1.0 + FRAME_OVERHEAD_BYTES / MEAN_UNIFORM_PAYLOAD
        mean_burst_wire_bits = 8.0 * self.mean_burst_bytes * wire_factor
        if self.peak_rate_bps is None and self.mean_on_ns is None:
            self.peak_rate_bps = 10.0 * self.target_rate_bps
        if self.peak_rate_bps is None:
            self.peak_rate_bps = mean_burst_wire_bits / (self.mean_on_ns / NS_PER_S)
        else:
            self.mean_on_ns = mean_burst_wire_bits / self.peak_rate_bps * NS_PER_S
        cycle_ns = 8.0 * self.mean_burst_bytes / self.target_rate_bps * NS_PER_S
        self.mean_off_ns = cycle_ns - self.mean_on_ns
        if self.mean_off_ns <= 0:
            raise ConfigError(
                "peak rate too low for target rate (derived OFF mean <= 0)"
            )
        # solve the bounded-Pareto scale that hits the required OFF mean
        ratio_mean = bounded_pareto_mean(self.shape_on, 1.0, self.off_bound_ratio)
        self.off_min_ns = self.mean_off_ns / ratio_mean
        self.off_max_ns = self.off_min_ns * self.off_bound_ratio


@dataclass
class FlWorkloadSpec:
    payload_bytes_per_round: int = 26_400_000
    clients: int = 32
    compute_min_s: float = 1.0
    compute_max_s: float = 2.5
    downstream_delay_ns: int = 10_000_000
    aggregation_delay_ns: int = 10_000_000
    sync_window_ns: int | None = None  # None: wait for every client

    def __post_init__(self):
        if self.payload_bytes_per_round < 0:
            raise ConfigError("FL round payload must be >= 0")
        if self.compute_min_s > self.compute_max_s:
            raise ConfigError("compute time bounds reversed")


# ---------------------------------------------------------------------------
# Chunked sources (hot path).  pull(until) returns frames with arrival
# <= until that were not returned before, as parallel lists.
# ---------------------------------------------------------------------------


class CbrSource:
    """Exactly periodic arrivals at k * interarrival, k >= 1."""

    def __init__(self, spec: CbrSpec):
        self.spec = spec
        self._next_k = 1
        self._wire = spec.packet_bytes + FRAME_OVERHEAD_BYTES

    def pull(self, until: int) -> tuple[list[int], list[int]]:
        """Frames (arrival ns, wire bytes) with arrival <= until."""
        step = self.spec.interarrival_ns
        last_k = until // step
        if last_k < self._next_k:
            return [], []
        arrivals = list(range(self._next_k * step, (last_k + 1) * step, step))
        self._next_k = last_k + 1
        return arrivals, [self._wire] * len(arrivals)


class ParetoOnOffSource:
    """ON-OFF burst source, generated one vectorized block of ON/OFF cycles
    at a time.  Burst byte budgets carry a residue across ON periods so the
    long-run rate is unbiased by frame-boundary overshoot.

    Draw order per block is fixed (budgets, OFF gaps, then frame sizes),
    which keeps the arrival trace deterministic for a given stream.
    """

    _BLOCK = 512

    def __init__(self, spec: ParetoOnOffSpec, stream: RngStream):
        if spec.target_rate_bps > 0 and spec.burst_min_bytes >= spec.burst_max_bytes:
            raise ConfigError("burst_min must be < burst_max")
        self.spec = spec
        self.stream = stream
        self._arr: list[int] = []
        self._wire: list[int] = []
        self._head = 0
        self._t = 0.0  # generation frontier, ns
        self._emitted = 0.0  # cumulative payload bytes emitted
        self._budget = 0.0  # cumulative payload byte budget drawn
        self._leftover_sizes = _np.empty(0, dtype=_np.int64)
        if spec.target_rate_bps > 0:
            # ns spent on the wire per frame byte during ON
            self._step = 8.0 / (spec.peak_rate_bps / NS_PER_S)

    def _draw_sizes(self, n: int) -> "_np.ndarray":
        return self.stream.integers(ETHERNET_MIN_PAYLOAD, ETHERNET_MAX_PAYLOAD, n)

    def _generate_block(self) -> None:
        sp = self.spec
        k = self._BLOCK
        bursts = self.stream.bounded_pareto(
            sp.burst_shape, sp.burst_min_bytes, sp.burst_max_bytes, k
        )
        offs = self.stream.bounded_pareto(sp.shape_on, sp.off_min_ns, sp.off_max_ns, k)
        targets = self._budget + _np.cumsum(bursts)
        self._budget = float(targets[-1])

        sizes = self._leftover_sizes
        need = targets[-1] - self._emitted - float(sizes.sum())
        if need > 0:
            extra = self._draw_sizes(int(need / MEAN_UNIFORM_PAYLOAD) + 16)
            sizes = _np.concatenate([sizes, extra])
        while self._emitted + sizes.sum() < targets[-1]:
            sizes = _np.concatenate([sizes, self._draw_sizes(256)])

        cum = self._emitted + _np.cumsum(sizes)
        prefix = _np.concatenate(([self._emitted], cum[:-1]))
        bounds = _np.searchsorted(prefix, targets, side="left")
        n = int(bounds[-1])
        counts = _np.diff(_np.concatenate(([0], bounds)))

        wires = sizes[:n] + FRAME_OVERHEAD_BYTES
        wire_time = wires * self._step
        wp = _np.concatenate(([0.0], _np.cumsum(wire_time)))
        on_dur = wp[bounds] - wp[_np.concatenate(([0], bounds[:-1]))]
        cycle = on_dur + offs
        starts = self._t + _np.concatenate(([0.0], _np.cumsum(cycle[:-1])))
        base = _np.repeat(starts - wp[_np.concatenate(([0], bounds[:-1]))], counts)
        arrivals = (base + wp[:n]).astype(_np.int64)

        self._arr.extend(arrivals.tolist())
        self._wire.extend(wires.tolist())
        self._t += float(cycle.sum())
        self._emitted = float(cum[n - 1]) if n else self._emitted
        self._leftover_sizes = sizes[n:]

    def pull(self, until: int) -> tuple[list[int], list[int]]:
        """Frames (arrival ns, wire bytes) with arrival <= until."""
        if self.spec.target_rate_bps <= 0:
            return [], []
        h = self._head
        arr = self._arr
        if self._t > until and (h == len(arr) or arr[h] > until):
            return [], []
        while self._t <= until:
            self._generate_block()
            arr = self._arr
        k = bisect.bisect_right(arr, until, h)
        arrivals = arr[h:k]
        wires = self._wire[h:k]
        self._head = k
        if k > 16384 and k * 2 > len(arr):
            del self._arr[:k]
            del self._wire[:k]
            self._head = 0
        return arrivals, wires


class FlUploadSource:
    """Round uploads: the whole payload arrives as one burst of MTU-sized
    frames at the release instant (remainder padded to the minimum frame)."""

    def __init__(self, spec: FlWorkloadSpec):
        self.spec = spec
        self._pending: list[tuple[int, int, int]] = []  # (release, round, payload)

    def add_round(self, release: int, round_id: int, payload_bytes: int | None = None) -> None:
        payload = self.spec.payload_bytes_per_round if payload_bytes is None else payload_bytes
        self._pending.append((release, round_id, payload))
        self._pending.sort()

    @staticmethod
    def burst_payloads(payload_bytes: int) -> list[int]:
        full, rem = divmod(payload_bytes, MTU)
        payloads = [MTU] * full
        if rem:
            payloads.append(max(rem, ETHERNET_MIN_PAYLOAD))
        return payloads

    def pull(self, until: int) -> list[tuple[int, int, list[int]]]:
        """Released bursts as (release, round, payload list)."""
        out = []
        while self._pending and self._pending[0][0] <= until:
            release, round_id, payload = self._pending.pop(0)
            out.append((release, round_id, self.burst_payloads(payload)))
        return out


# ---------------------------------------------------------------------------
# Frame-level generator API (thin wrappers over the chunked sources).
# ---------------------------------------------------------------------------


def cbr_arrivals(spec: CbrSpec, horizon_ns: int, onu: int = 0) -> Iterator[Frame]:
    if horizon_ns <= 0:
        raise ConfigError("horizon must be > 0")
    source = CbrSource(spec)
    arrivals, wires = source.pull(horizon_ns)
    for i, (t, w) in enumerate(zip(arrivals, wires)):
        yield Frame(
            id=i, onu=onu, cls=TrafficClass.DC,
            payload_bytes=w - FRAME_OVERHEAD_BYTES, arrival=t,
        )


def pareto_onoff_arrivals(
    spec: ParetoOnOffSpec,
    stream: RngStream,
    horizon_ns: int,
    onu: int = 0,
    cls: TrafficClass = TrafficClass.DS,
) -> Iterator[Frame]:
    source = ParetoOnOffSource(spec, stream)
    arrivals, wires = source.pull(horizon_ns)
    for i, (t, w) in enumerate(zip(arrivals, wires)):
        yield Frame(
            id=i, onu=onu, cls=cls, payload_bytes=w - FRAME_OVERHEAD_BYTES, arrival=t
        )


def fl_round_frames(
    spec: FlWorkloadSpec, client: int, round_id: int, release_time: int
) -> list[Frame]:
    if release_time < 0:
        raise ConfigError("release_time must be >= 0")
    payloads = FlUploadSource.burst_payloads(spec.payload_bytes_per_round)
    return [
        Frame(
            id=i,
            onu=client,
            cls=TrafficClass.FL,
            payload_bytes=p,
            arrival=release_time,
            fl_round=round_id,
        )
        for i, p in enumerate(payloads)
    ]
