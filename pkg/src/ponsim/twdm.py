"""Wavelength allocation for the multi-channel upstream.

Three disciplines: SSD splits every window evenly across all channels,
MSD pins each ONU to one fixed channel, FF picks the channel with the
earliest feasible start (ties to the lowest index).

All times here are in the OLT arrival clock; the scheduler shifts grants
into the ONU transmit clock when issuing the gate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .pon import Grant, Purpose, airtime_ticks


class NoChannelError(Exception):
    pass


class WavelengthPolicy(Enum):
    SSD = "ssd"
    MSD = "msd"
    FF = "ff"


@dataclass
class ChannelState:
    wavelength: int
    line_rate_bps: float
    next_free: int = 0  # OLT arrival clock; guard added at assign time
    busy_ns: int = 0

    def advance(self, start: int, duration_ns: int, guard_ns: int) -> None:
        if start < self.next_free + (guard_ns if self.busy_ns else 0):
            raise AssertionError(
                f"channel {self.wavelength}: start {start} violates guard after "
                f"{self.next_free}"
            )
        self.next_free = start + duration_ns
        self.busy_ns += duration_ns


@dataclass
class ChannelBank:
    channels: list[ChannelState]
    guard_ns: int

    def feasible_start(self, channel: ChannelState, earliest: int) -> int:
        floor = channel.next_free + self.guard_ns if channel.busy_ns else channel.next_free
        return max(earliest, floor)


def _even_split(total: int, k: int) -> list[int]:
    base, rem = divmod(total, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


@dataclass(slots=True)
class Assignment:
    """One contiguous per-channel window, possibly holding two adjacent
    purpose segments (slice bytes then conventional bytes)."""

    channel: ChannelState
    start: int  # OLT arrival clock
    duration_ns: int
    segments: list[tuple[Purpose, int]]
    carries_report: bool = False


def _single_channel_burst(
    channel: ChannelState,
    segments: list[tuple[Purpose, int]],
    earliest_start: int,
    bank: ChannelBank,
    report_tail_ns: int,
) -> list[Assignment]:
    guard = bank.guard_ns if channel.busy_ns else 0
    floor = channel.next_free + guard
    start = earliest_start if earliest_start > floor else floor
    bytes_c = 0
    for _, b in segments:
        bytes_c += b
    duration = report_tail_ns
    if bytes_c:
        duration += airtime_ticks(bytes_c, channel.line_rate_bps)
    a = Assignment(channel, start, duration, segments, True)
    if duration:
        channel.advance(start, duration, bank.guard_ns)
    return [a]


def assign_burst(
    policy: WavelengthPolicy,
    onu: int,
    segments: list[tuple[Purpose, int]],
    earliest_start: int,
    bank: ChannelBank,
    report_tail_ns: int = 0,
    msd_map: Optional[dict[int, int]] = None,
) -> list[Assignment]:
    """Place one ONU burst (data segments plus an optional trailing report
    slot) on the upstream channels and advance their next-free times.

    The report slot rides the window that ends last (lowest channel index
    on ties) so the OLT hears the queue snapshot after all data departed.
    """
    channels = bank.channels
    if not channels:
        raise NoChannelError("no upstream channels configured")
    if policy is WavelengthPolicy.FF:
        best = channels[0]
        best_start = bank.feasible_start(best, earliest_start)
        for c in channels[1:]:
            s = bank.feasible_start(c, earliest_start)
            if s < best_start:
                best, best_start = c, s
        return _single_channel_burst(best, segments, earliest_start, bank, report_tail_ns)
    if policy is WavelengthPolicy.MSD:
        assert msd_map is not None and onu in msd_map, "MSD requires a total onu map"
        return _single_channel_burst(
            channels[msd_map[onu]], segments, earliest_start, bank, report_tail_ns
        )
    if policy is not WavelengthPolicy.SSD:  # pragma: no cover
        raise ValueError(policy)

    picks = list(channels)
    shares = [
        [(purpose, share) for (purpose, _), share in zip(segments, per_ch)]
        for per_ch in zip(*(_even_split(b, len(picks)) for _, b in segments))
    ]
    assignments = []
    for channel, segs in zip(picks, shares):
        start = bank.feasible_start(channel, earliest_start)
        bytes_c = sum(b for _, b in segs)
        duration = airtime_ticks(bytes_c, channel.line_rate_bps) if bytes_c else 0
        assignments.append(Assignment(channel, start, duration, segs))
    # report tail on the latest-ending window, ties to lowest wavelength
    tail_holder = max(assignments, key=lambda a: (a.start + a.duration_ns, -a.channel.wavelength))
    tail_holder.duration_ns += report_tail_ns
    tail_holder.carries_report = True
    for a in assignments:
        if a.duration_ns == 0:
            continue
        a.channel.advance(a.start, a.duration_ns, bank.guard_ns)
    return assignments


def assign(
    policy: WavelengthPolicy,
    onu: int,
    grant_bytes: int,
    earliest_start: int,
    bank: ChannelBank,
    msd_map: Optional[dict[int, int]] = None,
    purpose: Purpose = Purpose.CONVENTIONAL,
) -> list[Grant]:
    """Single-purpose surface over assign_burst; returns per-channel grants
    with start times in the OLT arrival clock."""
    assert grant_bytes > 0, "use assign_burst for report-only windows"
    assignments = assign_burst(
        policy, onu, [(purpose, grant_bytes)], earliest_start, bank, msd_map=msd_map
    )
    return [
        Grant(
            wavelength=a.channel.wavelength,
            start=a.start,
            duration_ns=a.duration_ns,
            purpose=purpose,
            data_bytes=sum(b for _, b in a.segments),
        )
        for a in assignments
        if a.duration_ns > 0
    ]


def default_msd_map(n_onus: int, n_wavelengths: int) -> dict[int, int]:
    return {i: i % n_wavelengths for i in range(n_onus)}
