"""OLT-side grant orchestration.

Interleaved polling: a gate is computed the instant a report arrives, with
the window placed at the earliest feasible time on the chosen wavelengths
(never earlier than the gate's flight time back to the ONU).  Idle ONUs
receive a report-only window so the poll loop never stalls.

Four grant disciplines:

* IPACT_LIMITED - one window of min(total request, Wmax).
* MW_BS         - a byte slice per cycle reserved for one FL client at a
                  time, concatenated with a limited conventional window.
* DWBA_FL       - limited window over all classes; the ONU splits it by
                  strict priority (FL-first or DC-first).
* FCFS          - limited window served from a single merged FIFO.

A group wrapper buffers reports of SLA-group members and gates them
together, sharing pooled excess bandwidth; non-members flow through the
plain limited path untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import dba
from .pon import REPORT_WIRE_BYTES, Purpose, ReportMsg, SlaProfile, airtime_ticks
from .traffic import CLASSES, MTU, FRAME_OVERHEAD_BYTES, TrafficClass
from .twdm import Assignment, ChannelBank, WavelengthPolicy, assign_burst


class SchedKind(Enum):
    IPACT_LIMITED = "ipact_limited"
    MW_BS = "mw_bs"
    DWBA_FL = "dwba_fl"
    FCFS = "fcfs"


class PriorityPolicy(Enum):
    FL_FIRST = "fl_first"
    DC_FIRST = "dc_first"


# intra-ONU strict priority orders
ORDER_FL_FIRST = (TrafficClass.FL, TrafficClass.DC, TrafficClass.DS, TrafficClass.BE)
ORDER_DC_FIRST = (TrafficClass.DC, TrafficClass.FL, TrafficClass.DS, TrafficClass.BE)
ORDER_LEGACY = (TrafficClass.DC, TrafficClass.DS, TrafficClass.BE, TrafficClass.FL)
ORDER_CONV = (TrafficClass.DC, TrafficClass.DS, TrafficClass.BE)

_CLS_ID = {cls: i for i, cls in enumerate(CLASSES)}


def order_ids(order: tuple[TrafficClass, ...]) -> tuple[int, ...]:
    return tuple(_CLS_ID[c] for c in order)


@dataclass
class GroupSpec:
    group_id: int
    members: tuple[int, ...]
    policy: dba.ExcessPolicy = dba.ExcessPolicy.DBA2


@dataclass
class SchedulerConfig:
    kind: SchedKind = SchedKind.DWBA_FL
    priority_policy: PriorityPolicy = PriorityPolicy.DC_FIRST
    theta: float = 0.015
    wavelength_policy: WavelengthPolicy = WavelengthPolicy.FF
    max_cycle_ns: int = 1_000_000
    guard_ns: int = 624
    groups: tuple[GroupSpec, ...] = ()

    def validate(self, aggregate_rate_bps: float) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.max_cycle_ns <= 0 or self.guard_ns < 0:
            raise ValueError("cycle/guard out of range")
        if self.kind is SchedKind.MW_BS:
            slice_bytes = self.slice_bytes_per_cycle(aggregate_rate_bps)
            if slice_bytes < MTU + FRAME_OVERHEAD_BYTES:
                raise ValueError(
                    f"slice of {slice_bytes} B cannot carry one maximum frame"
                )
        seen = set()
        for g in self.groups:
            for m in g.members:
                if m in seen:
                    raise ValueError(f"onu {m} in more than one SLA group")
                seen.add(m)

    def slice_bytes_per_cycle(self, aggregate_rate_bps: float) -> int:
        """Per-cycle FL slice: a theta fraction of one maximum cycle's
        worth of the aggregate PON capacity, in wire bytes."""
        return int(self.theta * (self.max_cycle_ns / 1e9) * aggregate_rate_bps / 8.0)


@dataclass
class SliceState:
    slice_bytes_per_cycle: int
    reserved_for: Optional[int] = None
    remaining_fl_bytes: int = 0

    def invariant_ok(self) -> bool:
        return (self.reserved_for is not None) == (self.remaining_fl_bytes > 0)


@dataclass(slots=True)
class GateDecision:
    """Everything the ONU pipeline needs to execute one gated burst."""

    onu: int
    issued_at: int
    assignments: list[Assignment]
    conv_order: tuple[TrafficClass, ...]
    conv_order_ids: tuple[int, ...]
    fcfs: bool = False


TraceFn = Callable[[str], None]


class OltScheduler:
    """Shared interleave machinery; subclasses size the grants."""

    conv_order: tuple[TrafficClass, ...] = ORDER_LEGACY
    fcfs = False

    def __init__(
        self,
        cfg: SchedulerConfig,
        bank: ChannelBank,
        slas: list[SlaProfile],
        rtts: list[int],
        msd_map: Optional[dict[int, int]] = None,
    ):
        self.cfg = cfg
        self.bank = bank
        self.slas = slas
        self.rtts = rtts
        self.msd_map = msd_map
        self.trace: Optional[TraceFn] = None
        rate = bank.channels[0].line_rate_bps
        self.report_tail_ns = airtime_ticks(REPORT_WIRE_BYTES, rate)
        self._conv_order_ids = order_ids(self.conv_order)

    # -- grant sizing hook ------------------------------------------------

    def segments_for(self, report: ReportMsg) -> list[tuple[Purpose, int]]:
        raise NotImplementedError

    # -- public entry points -----------------------------------------------

    def on_report(self, report: ReportMsg, now: int) -> list[GateDecision]:
        return [self._issue(report.onu, self.segments_for(report), now)]

    def bootstrap(self, onu: int, now: int) -> GateDecision:
        """Initial report-only poll replacing MPCP discovery."""
        decision = self._issue(onu, [(Purpose.CONVENTIONAL, 0)], now)
        assert decision is not None
        return decision

    # -- internals ----------------------------------------------------------

    def _issue(
        self, onu: int, segments: list[tuple[Purpose, int]], now: int
    ) -> GateDecision:
        earliest = now + self.rtts[onu]  # gate flight + first bit back, OLT clock
        assignments = assign_burst(
            self.cfg.wavelength_policy,
            onu,
            segments,
            earliest,
            self.bank,
            report_tail_ns=self.report_tail_ns,
            msd_map=self.msd_map,
        )
        decision = GateDecision(
            onu=onu,
            issued_at=now,
            assignments=assignments,
            conv_order=self.conv_order,
            conv_order_ids=self._conv_order_ids,
            fcfs=self.fcfs,
        )
        if self.trace is not None:
            self._emit_trace(decision)
        return decision

    def _emit_trace(self, d: GateDecision) -> None:
        half_rtt = self.rtts[d.onu] // 2
        for a in d.assignments:
            for purpose, nbytes in a.segments:
                if nbytes == 0 and not (a.carries_report and len(a.segments) == 1):
                    continue
                self.trace(
                    f"{d.issued_at},{d.onu},{purpose.value},{a.channel.wavelength},"
                    f"{a.start - half_rtt},{a.duration_ns},{nbytes}"
                )


class IpactLimitedScheduler(OltScheduler):
    conv_order = ORDER_LEGACY

    def segments_for(self, report: ReportMsg) -> list[tuple[Purpose, int]]:
        grant = dba.limited_grant(report.total(), self.slas[report.onu].wmax_bytes)
        return [(Purpose.CONVENTIONAL, grant)]


class DwbaFlScheduler(OltScheduler):
    """Limited grant over all four classes; prioritization happens at the
    ONU dequeuer, so FL rides the customer's own guaranteed bandwidth."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.conv_order = (
            ORDER_FL_FIRST
            if self.cfg.priority_policy is PriorityPolicy.FL_FIRST
            else ORDER_DC_FIRST
        )
        self._conv_order_ids = order_ids(self.conv_order)

    def segments_for(self, report: ReportMsg) -> list[tuple[Purpose, int]]:
        grant = dba.limited_grant(report.total(), self.slas[report.onu].wmax_bytes)
        return [(Purpose.CONVENTIONAL, grant)]


class FcfsScheduler(OltScheduler):
    fcfs = True
    conv_order = ORDER_LEGACY  # unused: merged FIFO ignores class order

    def segments_for(self, report: ReportMsg) -> list[tuple[Purpose, int]]:
        grant = dba.limited_grant(report.total(), self.slas[report.onu].wmax_bytes)
        return [(Purpose.CONVENTIONAL, grant)]


class MwBsScheduler(OltScheduler):
    """Bandwidth slicing adapted to multiple wavelengths and an adaptive
    cycle: a fixed per-cycle byte slice is reserved for whichever FL
    client holds it until that client's reported FL demand is drained;
    conventional traffic gets its own limited window, concatenated after
    the slice with no intervening guard."""

    conv_order = ORDER_CONV

    def __init__(self, *args, aggregate_rate_bps: float, **kwargs):
        super().__init__(*args, **kwargs)
        self.slice = SliceState(self.cfg.slice_bytes_per_cycle(aggregate_rate_bps))

    def segments_for(self, report: ReportMsg) -> list[tuple[Purpose, int]]:
        s = self.slice
        onu = report.onu
        r_fl = report.queue_bytes[0]  # FL slot
        fl_grant = 0
        if r_fl > 0:
            if s.reserved_for is None:
                s.reserved_for = onu
            if s.reserved_for == onu:
                # reservation tracks the latest reported residue
                s.remaining_fl_bytes = r_fl
                fl_grant = min(r_fl, s.slice_bytes_per_cycle)
                s.remaining_fl_bytes -= fl_grant
                if s.remaining_fl_bytes == 0:
                    s.reserved_for = None
        elif s.reserved_for == onu:
            # demand vanished (possible only with drop-tail buffers)
            s.reserved_for = None
            s.remaining_fl_bytes = 0
        assert s.invariant_ok()
        conv = dba.limited_grant(report.conventional(), self.slas[onu].wmax_bytes)
        segments: list[tuple[Purpose, int]] = []
        if fl_grant:
            segments.append((Purpose.FL_SLICE, fl_grant))
        segments.append((Purpose.CONVENTIONAL, conv))
        return segments


class GroupScheduler:
    """Group-SLA wrapper: reports of group members are buffered and gated
    together once the group is complete; everyone else follows the plain
    limited path of the inner scheduler."""

    def __init__(self, inner: OltScheduler):
        self.inner = inner
        self.cfg = inner.cfg
        self.groups: dict[int, dba.GroupState] = {}
        self._member_group: dict[int, int] = {}
        for spec in inner.cfg.groups:
            state = dba.GroupState(
                group_id=spec.group_id,
                members=frozenset(spec.members),
                policy=spec.policy,
            )
            self.groups[spec.group_id] = state
            for m in spec.members:
                self._member_group[m] = spec.group_id

    @property
    def trace(self):
        return self.inner.trace

    @trace.setter
    def trace(self, fn):
        self.inner.trace = fn

    def bootstrap(self, onu: int, now: int) -> GateDecision:
        return self.inner.bootstrap(onu, now)

    def on_report(self, report: ReportMsg, now: int) -> list[GateDecision]:
        gid = self._member_group.get(report.onu)
        if gid is None:
            return self.inner.on_report(report, now)
        group = self.groups[gid]
        if not group.add_report(report.onu, report):
            return []  # gate withheld until the group is complete
        demands = dba.DemandSet(
            [
                dba.Demand(
                    onu=m,
                    request_bytes=group.buffered[m].total(),
                    wmax_bytes=self.inner.slas[m].wmax_bytes,
                )
                for m in group.arrival_order
            ]
        )
        order = list(group.arrival_order)
        grants = dba.group_schedule(group, demands)
        return [
            self.inner._issue(m, [(Purpose.CONVENTIONAL, grants[m])], now)
            for m in order
        ]


def build_scheduler(
    cfg: SchedulerConfig,
    bank: ChannelBank,
    slas: list[SlaProfile],
    rtts: list[int],
    msd_map: Optional[dict[int, int]] = None,
):
    aggregate = sum(c.line_rate_bps for c in bank.channels)
    cfg.validate(aggregate)
    if cfg.kind is SchedKind.IPACT_LIMITED:
        inner = IpactLimitedScheduler(cfg, bank, slas, rtts, msd_map)
    elif cfg.kind is SchedKind.DWBA_FL:
        inner = DwbaFlScheduler(cfg, bank, slas, rtts, msd_map)
    elif cfg.kind is SchedKind.FCFS:
        inner = FcfsScheduler(cfg, bank, slas, rtts, msd_map)
    elif cfg.kind is SchedKind.MW_BS:
        inner = MwBsScheduler(
            cfg, bank, slas, rtts, msd_map, aggregate_rate_bps=aggregate
        )
    else:  # pragma: no cover
        raise ValueError(cfg.kind)
    if cfg.groups:
        return GroupScheduler(inner)
    return inner
