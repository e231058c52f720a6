"""ONU-side state: per-class queues, MPCP report/gate messages, and the
strict-priority window dequeuer.

Queues keep frames as parallel (arrival, wire size, cumulative wire)
lists, so a window dequeue is a binary search plus C-level slicing and
the per-frame budget walk disappears from the hot path.

Timing conventions: channel occupancy and gate bookkeeping live in the
OLT arrival clock; a Grant's start is in the ONU transmit clock, half an
RTT earlier than the burst's arrival at the OLT.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from itertools import accumulate
from typing import Optional, Sequence

from .traffic import (
    CLASSES,
    FRAME_OVERHEAD_BYTES,
    Frame,
    TrafficClass,
)

FL_ID, DC_ID, DS_ID, BE_ID = range(4)
CLS_ID = {cls: i for i, cls in enumerate(CLASSES)}

REPORT_WIRE_BYTES = 64 + FRAME_OVERHEAD_BYTES  # MPCP REPORT frame on the wire


class GrantOverflow(Exception):
    """Frames exceeded the granted window (scheduler bug, not a model state)."""


def airtime_ns(wire_bytes: int, line_rate_bps: float) -> float:
    return wire_bytes * 8.0 * 1e9 / line_rate_bps


def airtime_ticks(wire_bytes: int, line_rate_bps: float) -> int:
    """Airtime rounded up to whole nanosecond ticks (window granularity)."""
    return math.ceil(wire_bytes * 8 * 1_000_000_000 / line_rate_bps)


class Purpose(Enum):
    FL_SLICE = "fl"
    CONVENTIONAL = "conv"


@dataclass(slots=True)
class Grant:
    wavelength: int
    start: int  # ONU transmit clock
    duration_ns: int
    purpose: Purpose
    data_bytes: int

    def __post_init__(self):
        if self.duration_ns <= 0:
            raise ValueError("grant duration must be > 0")


@dataclass(slots=True)
class ReportMsg:
    """Queue occupancy snapshot; queue_bytes indexed FL, DC, DS, BE."""

    onu: int
    sent_at: int  # ONU clock, snapshot taken at transmission-window end
    queue_bytes: tuple[int, int, int, int]

    def total(self) -> int:
        q = self.queue_bytes
        return q[0] + q[1] + q[2] + q[3]

    def conventional(self) -> int:
        q = self.queue_bytes
        return q[1] + q[2] + q[3]

    @property
    def by_class(self) -> dict[TrafficClass, int]:
        return {cls: self.queue_bytes[i] for i, cls in enumerate(CLASSES)}


@dataclass(slots=True)
class GateMsg:
    onu: int
    issued_at: int  # OLT clock
    grants: list[Grant]


@dataclass
class SlaProfile:
    guaranteed_bps: float
    wmax_bytes: int
    group: Optional[int] = None

    @staticmethod
    def equal_share(total_rate_bps: float, n_onus: int, max_cycle_ns: int) -> "SlaProfile":
        b_i = total_rate_bps / n_onus
        wmax = int(b_i * (max_cycle_ns / 1e9) / 8.0)
        return SlaProfile(guaranteed_bps=b_i, wmax_bytes=wmax)


class ClassQueue:
    """FIFO of frames as parallel lists with cumulative wire-byte sums.

    The per-frame wire list is maintained only when keep_wire is set (the
    merged-FIFO mode and the frame-level API need it); the hot path works
    entirely on arrivals and cumulative sums.
    """

    __slots__ = ("arr", "wire", "cums", "head", "qbytes", "frames_enqueued",
                 "bytes_enqueued", "frames_dropped", "capacity_bytes",
                 "keep_wire")

    def __init__(self, capacity_bytes: Optional[int] = None, keep_wire: bool = False):
        self.arr: list[int] = []
        self.wire: list[int] = []
        self.cums: list[int] = []  # inclusive cumulative wire bytes since origin
        self.head = 0
        self.qbytes = 0
        self.frames_enqueued = 0
        self.bytes_enqueued = 0
        self.frames_dropped = 0
        self.capacity_bytes = capacity_bytes
        self.keep_wire = keep_wire

    @property
    def frames_queued(self) -> int:
        return len(self.arr) - self.head

    @property
    def bytes_queued(self) -> int:
        return self.qbytes

    def enqueue_batch(self, arrivals: Sequence[int], wires: Sequence[int]) -> None:
        if self.capacity_bytes is not None:
            arrivals, wires = self._filter_capacity(arrivals, wires)
            if not arrivals:
                return
        self.arr.extend(arrivals)
        if self.keep_wire:
            self.wire.extend(wires)
        prev = self.cums[-1] if self.cums else 0
        acc = accumulate(wires, initial=prev)
        next(acc)
        self.cums.extend(acc)
        added = self.cums[-1] - prev
        self.qbytes += added
        self.frames_enqueued += len(arrivals)
        self.bytes_enqueued += added

    def enqueue_const(self, arrivals: Sequence[int], wire: int) -> None:
        """Batch of same-sized frames (cumulative sums come from a range)."""
        if self.capacity_bytes is not None:
            self.enqueue_batch(arrivals, [wire] * len(arrivals))
            return
        n = len(arrivals)
        self.arr.extend(arrivals)
        if self.keep_wire:
            self.wire.extend([wire] * n)
        prev = self.cums[-1] if self.cums else 0
        self.cums.extend(range(prev + wire, prev + wire * n + 1, wire))
        self.qbytes += wire * n
        self.frames_enqueued += n
        self.bytes_enqueued += wire * n

    def _filter_capacity(self, arrivals, wires):
        # drop-tail per frame against the byte capacity
        kept_a, kept_w = [], []
        queued = self.bytes_queued
        cap = self.capacity_bytes
        for a, w in zip(arrivals, wires):
            if queued + w > cap:
                self.frames_dropped += 1
                continue
            queued += w
            kept_a.append(a)
            kept_w.append(w)
        return kept_a, kept_w

    def take(self, budget: int, now: int):
        """Dequeue the maximal FIFO prefix of frames that arrived by `now`
        and fit in `budget` wire bytes (never splitting a frame).

        Returns (arrivals, cums, base_bytes) where departure byte offsets
        are cums[j] - base_bytes, or None when nothing is taken.
        """
        h = self.head
        arr = self.arr
        n = len(arr)
        if h == n:
            return None
        cums = self.cums
        base = cums[h - 1] if h else 0
        if self.qbytes <= budget:
            k = n
        else:
            k = bisect_right(cums, base + budget, h)
        if k > h and arr[k - 1] > now:
            k = bisect_right(arr, now, h, k)
        if k == h:
            return None
        if h == 0 and k == n:
            # whole queue drains: hand the lists over without copying
            out = (arr, cums, base)
            self.arr = []
            self.cums = []
            self.qbytes = 0
            if self.keep_wire:
                self.wire = []
            return out
        out = (arr[h:k], cums[h:k], base)
        self.qbytes -= cums[k - 1] - base
        self.head = k
        if k > 16384 and k * 2 > n:
            del self.arr[:k]
            if self.keep_wire:
                del self.wire[:k]
            # rebase the cumulative sums so byte counts stay exact
            offset = cums[k - 1]
            self.cums = [c - offset for c in cums[k:]]
            self.head = 0
        return out

    def head_frame(self) -> Optional[tuple[int, int]]:
        if self.head < len(self.arr):
            return self.arr[self.head], self.wire[self.head]
        return None


class OnuState:
    """Queues and link parameters for one ONU."""

    def __init__(
        self,
        index: int,
        rtt_ns: int,
        sla: SlaProfile,
        buffer_bytes: Optional[int] = None,
        merged_fifo: bool = False,
    ):
        assert rtt_ns > 0
        self.index = index
        self.rtt_ns = rtt_ns
        self.sla = sla
        self.merged_fifo = merged_fifo
        self.qlist = [ClassQueue(buffer_bytes, keep_wire=merged_fifo) for _ in CLASSES]
        self.queues: dict[TrafficClass, ClassQueue] = {
            cls: self.qlist[i] for i, cls in enumerate(CLASSES)
        }
        # merged service order across classes (FCFS mode)
        self.fifo_order: list[int] = []
        self.pending_gate: Optional[GateMsg] = None

    def enqueue(self, frame: Frame) -> None:
        """Single-frame API; FCFS callers must enqueue in arrival order."""
        self.qlist[CLS_ID[frame.cls]].enqueue_batch([frame.arrival], [frame.wire_bytes])
        if self.merged_fifo:
            self.fifo_order.append(CLS_ID[frame.cls])

    def enqueue_batch(self, cls: TrafficClass, arrivals, wires) -> None:
        self.enqueue_batch_id(CLS_ID[cls], arrivals, wires)

    def enqueue_batch_id(self, cls_id: int, arrivals, wires) -> None:
        q = self.qlist[cls_id]
        before = q.frames_queued
        q.enqueue_batch(arrivals, wires)
        if self.merged_fifo:
            self.fifo_order.extend([cls_id] * (q.frames_queued - before))

    def enqueue_merged(self, batches: list[tuple[int, list, list]]) -> None:
        """Enqueue per-class-id batches interleaved by arrival time (ties
        broken by batch position) so FCFS service order is global."""
        merged = []
        for bi, (cls_id, arrivals, wires) in enumerate(batches):
            merged.extend((a, bi, w, cls_id) for a, w in zip(arrivals, wires))
        merged.sort(key=lambda e: (e[0], e[1]))
        for a, _, w, cls_id in merged:
            self.enqueue_batch_id(cls_id, [a], [w])

    def queue_bytes(self, cls: TrafficClass) -> int:
        return self.qlist[CLS_ID[cls]].bytes_queued

    def build_report(self, at: int) -> ReportMsg:
        """Snapshot of wire bytes per class (frames arrived by `at`)."""
        q = self.qlist
        return ReportMsg(
            onu=self.index,
            sent_at=at,
            queue_bytes=(q[0].qbytes, q[1].qbytes, q[2].qbytes, q[3].qbytes),
        )

    def take_window(
        self, budget_bytes: int, order_ids: Sequence[int], now: int
    ) -> list[tuple[int, list[int], list[int], int]]:
        """Hot-path dequeue: serve class ids strictly in order, FIFO within
        a class, stopping a class at its first head frame that does not fit
        the remaining budget.  Returns (cls_id, arrivals, cums, base)."""
        assert budget_bytes >= 0
        if self.merged_fifo:
            return self._take_fifo(budget_bytes, now)
        served = []
        remaining = budget_bytes
        for cls_id in order_ids:
            out = self.qlist[cls_id].take(remaining, now)
            if out is not None:
                arr, cums, base = out
                served.append((cls_id, arr, cums, base))
                remaining -= cums[-1] - base
        return served

    def _take_fifo(self, budget: int, now: int):
        """Single merged FIFO across classes, strict arrival order, grouped
        into runs of consecutive same-class frames."""
        served: list[tuple[int, list[int], list[int], int]] = []
        k = 0
        run_cls = -1
        run_arr: list[int] = []
        run_cums: list[int] = []
        for cls_id in self.fifo_order:
            q = self.qlist[cls_id]
            hf = q.head_frame()
            if hf is None:  # pragma: no cover - order bookkeeping broken
                raise AssertionError("fifo order out of sync")
            a, w = hf
            if w > budget or a > now:
                break
            out = q.take(w, now)
            assert out is not None
            if cls_id != run_cls:
                if run_arr:
                    served.append((run_cls, run_arr, run_cums, 0))
                run_cls = cls_id
                run_arr, run_cums = [], []
            run_arr.append(a)
            run_cums.append((run_cums[-1] if run_cums else 0) + w)
            budget -= w
            k += 1
        if run_arr:
            served.append((run_cls, run_arr, run_cums, 0))
        del self.fifo_order[:k]
        return served

    def dequeue_for_window(
        self, budget_bytes: int, order: Sequence[TrafficClass], now: int
    ) -> list[tuple[TrafficClass, list[int], list[int]]]:
        """Spec-level dequeue returning (class, arrivals, wire sizes)."""
        out = []
        served = self.take_window(budget_bytes, tuple(CLS_ID[c] for c in order), now)
        for cls_id, arr, cums, base in served:
            wires = [c - p for c, p in zip(cums, [base] + cums[:-1])]
            out.append((CLASSES[cls_id], arr, wires))
        return out

    def conservation(self) -> dict[TrafficClass, tuple[int, int, int]]:
        """Per class: (enqueued, queued, dropped) frame counts."""
        return {
            cls: (q.frames_enqueued, q.frames_queued, q.frames_dropped)
            for cls, q in self.queues.items()
        }


def dequeue_frames(
    onu: OnuState, budget_bytes: int, order: Sequence[TrafficClass], now: int
) -> list[Frame]:
    """Frame-object convenience wrapper around dequeue_for_window."""
    frames = []
    for cls, arrivals, wires in onu.dequeue_for_window(budget_bytes, order, now):
        for a, w in zip(arrivals, wires):
            frames.append(
                Frame(
                    id=len(frames),
                    onu=onu.index,
                    cls=cls,
                    payload_bytes=w - FRAME_OVERHEAD_BYTES,
                    arrival=a,
                    fl_round=0 if cls is TrafficClass.FL else None,
                )
            )
    return frames


def transmit_layout(
    arrivals: Sequence[int],
    wires: Sequence[int],
    start: int,
    line_rate_bps: float,
    duration_ns: int,
) -> tuple[float, list[float]]:
    """Back-to-back departure layout inside one granted window.

    Returns (end of last bit, per-frame departure-end times, ONU clock).
    Raises GrantOverflow when the frames do not fit the window.
    """
    ns_per_byte = 8.0e9 / line_rate_bps
    cursor = float(start)
    ends = []
    for w in wires:
        cursor += w * ns_per_byte
        ends.append(cursor)
    if cursor - start > duration_ns + 1e-6:
        raise GrantOverflow(
            f"{sum(wires)} wire bytes exceed {duration_ns} ns window"
        )
    return cursor, ends
