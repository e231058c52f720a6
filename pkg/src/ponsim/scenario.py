"""Scenario configuration and the per-replication simulation executor.

The executor folds each ONU's poll pipeline (gate flight, window
transmission, report return) into a single report-arrival event: all
traffic is open loop, so queue contents at any future instant are already
determined when the gate is computed.  FL round transitions are the only
feedback path; their compute times (seconds) dwarf the pipeline depth
(sub-millisecond), which `validate` enforces, so the look-ahead is exact.

Per-wavelength guard separation, gate causality, grant caps, and frame
conservation are asserted continuously while the simulation runs.
"""
from __future__ import annotations

import gc
import math
from dataclasses import dataclass, field, replace
from itertools import accumulate
from typing import Callable, Optional

from .flsync import FlSession, involved_fraction_curve
from .kernel import Engine, EventKind, NS_PER_S
from .metrics import ClassStats, RunResult, percentile_set
from .pon import (
    FRAME_OVERHEAD_BYTES,
    REPORT_WIRE_BYTES,
    OnuState,
    Purpose,
    SlaProfile,
    airtime_ticks,
)
from .sched import GateDecision, SchedKind, SchedulerConfig, build_scheduler
from .traffic import (
    CLASSES,
    CbrSource,
    CbrSpec,
    FlUploadSource,
    FlWorkloadSpec,
    ParetoOnOffSource,
    ParetoOnOffSpec,
    TrafficClass,
)
from .twdm import ChannelBank, ChannelState, WavelengthPolicy, default_msd_map


class ValidationError(Exception):
    pass


@dataclass
class OnOffTuning:
    """Shared shape parameters for the DS/BE ON-OFF sources; the per-class
    target rate comes from the load split."""

    hurst: float = 0.8
    burst_shape: Optional[float] = None
    burst_min_bytes: int = 1_500
    burst_max_bytes: int = 1_500_000
    peak_factor: float = 10.0
    mean_on_ns: Optional[float] = None

    def spec_for(self, target_rate_bps: float) -> ParetoOnOffSpec:
        peak = None if self.mean_on_ns is not None else self.peak_factor * target_rate_bps
        return ParetoOnOffSpec(
            target_rate_bps=target_rate_bps,
            hurst=self.hurst,
            burst_shape=self.burst_shape,
            burst_min_bytes=self.burst_min_bytes,
            burst_max_bytes=self.burst_max_bytes,
            mean_on_ns=self.mean_on_ns,
            peak_rate_bps=peak,
        )


def default_loads() -> tuple[float, ...]:
    return tuple(round(0.6 + 0.05 * i, 2) for i in range(9))


@dataclass
class ScenarioConfig:
    name: str = "default"
    n_onus: int = 32
    n_wavelengths: int = 2
    line_rate_bps: float = 25e9
    duration_s: float = 100.0
    warmup_s: float = 5.0
    replications: int = 10
    master_seed: int = 1
    rtt_min_ns: int = 100_000
    rtt_max_ns: int = 200_000
    loads: tuple[float, ...] = field(default_factory=default_loads)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    cbr: Optional[CbrSpec] = field(default_factory=CbrSpec)
    fl: Optional[FlWorkloadSpec] = None
    onoff: OnOffTuning = field(default_factory=OnOffTuning)
    ds_be_enabled: bool = True
    buffer_bytes: Optional[int] = None
    sync_sweep_s: tuple[float, ...] = ()

    def __post_init__(self):
        if self.fl is None:
            self.fl = FlWorkloadSpec(clients=self.n_onus)

    # -- derived quantities -------------------------------------------------

    @property
    def aggregate_rate_bps(self) -> float:
        return self.n_wavelengths * self.line_rate_bps

    @property
    def guaranteed_bps(self) -> float:
        return self.aggregate_rate_bps / self.n_onus

    @property
    def wmax_bytes(self) -> int:
        return int(self.guaranteed_bps * (self.scheduler.max_cycle_ns / 1e9) / 8.0)

    def fl_nominal_rate_bps(self) -> float:
        """A-priori mean FL upload rate used only for the load split."""
        fl = self.fl
        if fl is None or fl.clients == 0 or fl.payload_bytes_per_round == 0:
            return 0.0
        upload_s = fl.payload_bytes_per_round * 8.0 / self.guaranteed_bps
        round_s = (
            (fl.downstream_delay_ns + fl.aggregation_delay_ns) / 1e9
            + (fl.compute_min_s + fl.compute_max_s) / 2.0
            + upload_s
        )
        return fl.payload_bytes_per_round * 8.0 / round_s

    def ds_be_rate_bps(self, load: float) -> float:
        """Per-class rate for each of DS and BE after CBR and FL take their
        share of the offered load."""
        if not self.ds_be_enabled:
            return 0.0
        offered = load * self.guaranteed_bps
        cbr = self.cbr.rate_bps if self.cbr is not None else 0.0
        rest = offered - cbr - self.fl_nominal_rate_bps()
        if rest < 0:
            raise ValidationError(
                f"load {load} cannot cover CBR and FL shares "
                f"({offered:.3g} < {cbr + self.fl_nominal_rate_bps():.3g} b/s)"
            )
        return rest / 2.0

    def validate(self) -> None:
        if self.n_onus <= 0:
            raise ValidationError("n_onus must be positive")
        if self.n_wavelengths <= 0:
            raise ValidationError("n_wavelengths must be positive")
        if self.line_rate_bps <= 0:
            raise ValidationError("line rate must be positive")
        if self.duration_s <= 0 or self.warmup_s < 0:
            raise ValidationError("duration/warmup out of range")
        if self.warmup_s >= self.duration_s:
            raise ValidationError("warmup must end before the run does")
        if self.replications <= 0:
            raise ValidationError("replications must be positive")
        if self.rtt_min_ns <= 0 or self.rtt_min_ns > self.rtt_max_ns:
            raise ValidationError("rtt range invalid")
        if not self.loads:
            raise ValidationError("at least one load point required")
        try:
            self.scheduler.validate(self.aggregate_rate_bps)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        for g in self.scheduler.groups:
            for m in g.members:
                if not 0 <= m < self.n_onus:
                    raise ValidationError(f"group member {m} outside ONU range")
        fl = self.fl
        if fl is not None and fl.clients > self.n_onus:
            raise ValidationError("more FL clients than ONUs")
        if fl is not None and fl.clients > 0 and fl.payload_bytes_per_round > 0:
            # one-cycle look-ahead must never straddle an FL release
            pipeline_ns = self.rtt_max_ns + 4 * self.scheduler.max_cycle_ns
            lead_ns = fl.downstream_delay_ns + fl.compute_min_s * 1e9
            if lead_ns <= pipeline_ns:
                raise ValidationError(
                    "FL downstream delay plus minimum compute time must exceed "
                    "the polling pipeline depth"
                )
        for load in self.loads:
            self.ds_be_rate_bps(load)

    def label(self) -> tuple[str, str, str]:
        sched = self.scheduler.kind.value
        policy = (
            self.scheduler.priority_policy.value
            if self.scheduler.kind is SchedKind.DWBA_FL
            else ""
        )
        return sched, policy, self.scheduler.wavelength_policy.value


_FL_I = 0  # index of TrafficClass.FL in CLASSES


class Simulation:
    """One replication at one load point."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        load: float,
        seed: int,
        gate_trace: Optional[Callable[[str], None]] = None,
        frame_trace: Optional[Callable[[str], None]] = None,
    ):
        self.cfg = cfg
        self.load = load
        self.seed = seed
        self.engine = Engine(master_seed=seed)
        self.warmup_ns = int(cfg.warmup_s * NS_PER_S)
        self.duration_ns = int(cfg.duration_s * NS_PER_S)
        self.frame_trace = frame_trace

        n = cfg.n_onus
        self.channels = [
            ChannelState(wavelength=k, line_rate_bps=cfg.line_rate_bps)
            for k in range(cfg.n_wavelengths)
        ]
        self.bank = ChannelBank(self.channels, cfg.scheduler.guard_ns)
        self._ns_per_byte = 8.0e9 / cfg.line_rate_bps
        self.report_tail_ns = airtime_ticks(REPORT_WIRE_BYTES, cfg.line_rate_bps)

        rtt_stream = self.engine.rng("rtt")
        halves = rtt_stream.integers(cfg.rtt_min_ns // 2, cfg.rtt_max_ns // 2, n)
        self.rtts = [2 * int(h) for h in halves]

        group_of = {}
        for g in cfg.scheduler.groups:
            for m in g.members:
                group_of[m] = g.group_id
        self.slas = [
            SlaProfile(cfg.guaranteed_bps, cfg.wmax_bytes, group_of.get(i)) for i in range(n)
        ]
        # a group member may be granted up to the group's pooled budget
        self.grant_cap = [cfg.wmax_bytes] * n
        for g in cfg.scheduler.groups:
            pooled = cfg.wmax_bytes * len(g.members)
            for m in g.members:
                self.grant_cap[m] = pooled

        fcfs = cfg.scheduler.kind is SchedKind.FCFS
        self.onus = [
            OnuState(i, self.rtts[i], self.slas[i], cfg.buffer_bytes, merged_fifo=fcfs)
            for i in range(n)
        ]
        self.scheduler = build_scheduler(
            cfg.scheduler,
            self.bank,
            self.slas,
            self.rtts,
            default_msd_map(n, cfg.n_wavelengths),
        )
        if gate_trace is not None:
            self.scheduler.trace = gate_trace

        ds_rate = cfg.ds_be_rate_bps(load)
        self.cbr_sources = [
            CbrSource(cfg.cbr) if cfg.cbr is not None else None for _ in range(n)
        ]
        if ds_rate > 0:
            ds_spec = cfg.onoff.spec_for(ds_rate)
            self.ds_sources = [
                ParetoOnOffSource(ds_spec, self.engine.rng(f"onu{i}.ds")) for i in range(n)
            ]
            self.be_sources = [
                ParetoOnOffSource(ds_spec, self.engine.rng(f"onu{i}.be")) for i in range(n)
            ]
        else:
            self.ds_sources = [None] * n
            self.be_sources = [None] * n

        fl = cfg.fl
        self.fl_clients: list[int] = []
        self.fl_session: Optional[FlSession] = None
        self.fl_sources: list[Optional[FlUploadSource]] = [None] * n
        if fl is not None and fl.clients > 0 and fl.payload_bytes_per_round > 0:
            self.fl_clients = list(range(fl.clients))
            self.fl_session = FlSession(fl, self.fl_clients, self.engine.rng("fl.compute"))
            for c in self.fl_clients:
                self.fl_sources[c] = FlUploadSource(fl)
        # in-flight FL rounds per ONU: [round, frames remaining, last end]
        self.fl_pending: list[list[list]] = [[] for _ in range(n)]

        self.pulled_to = [-1] * n
        self.stats = [ClassStats() for _ in CLASSES]
        self.tx_frames = [[0] * n for _ in CLASSES]
        self.cycle_sum = 0
        self.cycle_count = 0
        self.last_report_at = [-1] * n
        self._busy_at_warmup = [0] * cfg.n_wavelengths
        self._wmax_air_ns = airtime_ticks(cfg.wmax_bytes, cfg.line_rate_bps)
        slice_air = 0
        if cfg.scheduler.kind is SchedKind.MW_BS:
            slice_air = airtime_ticks(
                cfg.scheduler.slice_bytes_per_cycle(cfg.aggregate_rate_bps),
                cfg.line_rate_bps,
            )
        # limited-policy cycle bound: a gate waits at most one full cycle of
        # everyone's capped windows plus its own flight and window time
        per_round_overhead = cfg.n_onus * (
            cfg.scheduler.guard_ns + self.report_tail_ns + slice_air
        )
        max_members = max((len(g.members) for g in cfg.scheduler.groups), default=1)
        self._cycle_bound_ns = (
            cfg.scheduler.max_cycle_ns
            + cfg.rtt_max_ns
            + per_round_overhead
            + self._wmax_air_ns * max_members
            + slice_air
            + 1_000
        )
        if cfg.scheduler.groups:
            # a member's gate additionally waits for the slowest peer report
            self._cycle_bound_ns += cfg.rtt_max_ns + cfg.scheduler.max_cycle_ns

        eng = self.engine
        eng.on(EventKind.REPORT_AT_OLT, self._on_report)
        eng.on(EventKind.FL_ROUND_START, self._on_round_start)
        eng.on(EventKind.FL_AGGREGATE, self._on_aggregate)
        eng.on(EventKind.STATS_FLUSH, self._on_stats_flush)

    # -- event handlers -------------------------------------------------------

    def _on_stats_flush(self, eng: Engine, ev) -> None:
        self.stats = [ClassStats() for _ in CLASSES]
        self._busy_at_warmup = [c.busy_ns for c in self.channels]
        self.cycle_sum = 0
        self.cycle_count = 0

    def _on_round_start(self, eng: Engine, ev) -> None:
        session = self.fl_session
        states = session.start_round(eng.now())
        for st in states:
            self.fl_sources[st.client].add_round(st.upload_release, st.round)
        window = session.spec.sync_window_ns
        if window is not None:
            eng.schedule_at(eng.now() + window, EventKind.FL_AGGREGATE, session.round)

    def _on_aggregate(self, eng: Engine, ev) -> None:
        session = self.fl_session
        session.close_round(eng.now())
        eng.schedule_at(session.next_round_start(eng.now()), EventKind.FL_ROUND_START)

    def _note_fl_complete(self, client: int, round_id: int, complete_ns: float) -> None:
        session = self.fl_session
        if session.note_completion(client, round_id, int(complete_ns)):
            self.engine.schedule_at(session.aggregate_time(), EventKind.FL_AGGREGATE)

    def _on_report(self, eng: Engine, ev) -> None:
        onu_idx, report = ev.data
        now = eng.now()
        last = self.last_report_at[onu_idx]
        if last >= 0:
            interval = now - last
            assert interval <= self._cycle_bound_ns, (
                f"onu {onu_idx}: poll interval {interval} ns exceeds cycle bound"
            )
            if last >= self.warmup_ns:
                self.cycle_sum += interval
                self.cycle_count += 1
        self.last_report_at[onu_idx] = now
        for decision in self.scheduler.on_report(report, now):
            self._execute(decision)

    # -- traffic injection -----------------------------------------------------

    def _pull_onu(self, idx: int, t: int) -> None:
        if t <= self.pulled_to[idx]:
            return
        self.pulled_to[idx] = t
        onu = self.onus[idx]
        if onu.merged_fifo:
            self._pull_onu_merged(onu, idx, t)
            return
        qlist = onu.qlist
        src = self.cbr_sources[idx]
        if src is not None:
            arr, wires = src.pull(t)
            if arr:
                qlist[1].enqueue_const(arr, wires[0])  # DC, fixed packet size
        src = self.ds_sources[idx]
        if src is not None:
            arr, wires = src.pull(t)
            if arr:
                qlist[2].enqueue_batch(arr, wires)  # DS
            arr, wires = self.be_sources[idx].pull(t)
            if arr:
                qlist[3].enqueue_batch(arr, wires)  # BE
        fl_src = self.fl_sources[idx]
        if fl_src is not None:
            for release, round_id, payloads in fl_src.pull(t):
                if not payloads:
                    self._note_fl_complete(idx, round_id, release)
                    continue
                wires = [p + FRAME_OVERHEAD_BYTES for p in payloads]
                qlist[0].enqueue_batch([release] * len(wires), wires)  # FL
                self.fl_pending[idx].append([round_id, len(wires), 0.0])

    def _pull_onu_merged(self, onu, idx: int, t: int) -> None:
        batches = []
        src = self.cbr_sources[idx]
        if src is not None:
            arr, wires = src.pull(t)
            if arr:
                batches.append((1, arr, wires))  # DC
        src = self.ds_sources[idx]
        if src is not None:
            arr, wires = src.pull(t)
            if arr:
                batches.append((2, arr, wires))  # DS
        src = self.be_sources[idx]
        if src is not None:
            arr, wires = src.pull(t)
            if arr:
                batches.append((3, arr, wires))  # BE
        fl_src = self.fl_sources[idx]
        if fl_src is not None:
            for release, round_id, payloads in fl_src.pull(t):
                if not payloads:
                    self._note_fl_complete(idx, round_id, release)
                    continue
                wires = [p + FRAME_OVERHEAD_BYTES for p in payloads]
                batches.append((0, [release] * len(wires), wires))  # FL
                self.fl_pending[idx].append([round_id, len(wires), 0.0])
        if batches:
            onu.enqueue_merged(batches)

    # -- gate execution ----------------------------------------------------------

    def _execute(self, decision: GateDecision) -> None:
        idx = decision.onu
        onu = self.onus[idx]
        rtt = self.rtts[idx]
        half = rtt // 2
        assignments = decision.assignments
        if len(assignments) == 1:
            min_start = assignments[0].start
        else:
            min_start = min(a.start for a in assignments)
        assert min_start >= decision.issued_at + rtt, "gate causality violated"
        tx_eligible = min_start - half  # ONU transmit clock
        self._pull_onu(idx, tx_eligible)

        # dequeue slice segments first, then conventional, both in channel
        # order, so strict priority holds across the whole burst
        segments0 = assignments[0].segments
        if (
            len(assignments) == 1
            and len(segments0) == 1
            and segments0[0][0] is Purpose.CONVENTIONAL
        ):
            nbytes = segments0[0][1]
            conv_budget_total = nbytes
            served_per_assignment = [
                onu.take_window(nbytes, decision.conv_order_ids, tx_eligible)
                if nbytes
                else []
            ]
        else:
            served_per_assignment = [[] for _ in assignments]
            conv_budget_total = 0
            for ai, a in enumerate(assignments):
                for purpose, nbytes in a.segments:
                    if purpose is Purpose.FL_SLICE and nbytes:
                        served = onu.take_window(nbytes, (0,), tx_eligible)
                        served_per_assignment[ai].extend(served)
            for ai, a in enumerate(assignments):
                for purpose, nbytes in a.segments:
                    if purpose is Purpose.CONVENTIONAL and nbytes:
                        conv_budget_total += nbytes
                        served = onu.take_window(
                            nbytes, decision.conv_order_ids, tx_eligible
                        )
                        served_per_assignment[ai].extend(served)
        assert conv_budget_total <= self.grant_cap[idx], "grant exceeds the SLA cap"

        warmup = self.warmup_ns
        stats = self.stats
        npb = self._ns_per_byte
        trace = self.frame_trace
        pending = self.fl_pending[idx]
        tx_frames = self.tx_frames
        for a, served in zip(assignments, served_per_assignment):
            cursor = float(a.start)  # OLT arrival clock
            record = a.start >= warmup
            for cls_id, arr, cums, cbase in served:
                n = len(arr)
                tx_frames[cls_id][idx] += n
                # frame j's last bit reaches the OLT at tbase + (cums[j] -
                # cbase) * npb; the delay sum collapses to a closed form
                tbase = cursor - cbase * npb
                cursor = tbase + cums[-1] * npb
                if record:
                    st = stats[cls_id]
                    st.count += n
                    st.total_ns += tbase * n + npb * sum(cums) - sum(arr)
                    stride = st.stride
                    j = stride - 1 - st.tick
                    if j < n:
                        samples = st.samples
                        while j < n:
                            samples.append(tbase + cums[j] * npb - arr[j])
                            j += stride
                        if len(samples) >= st.sample_cap:
                            st.samples = samples[::2]
                            st.stride = stride * 2
                    st.tick = (st.tick + n) % stride
                if cls_id == 0:  # FL round completion tracking
                    pos = 0
                    while pos < n:
                        head = pending[0]
                        take = head[1] if head[1] < n - pos else n - pos
                        end = tbase + cums[pos + take - 1] * npb
                        if end > head[2]:
                            head[2] = end
                        head[1] -= take
                        pos += take
                        if head[1] == 0:
                            self._note_fl_complete(idx, head[0], head[2])
                            pending.pop(0)
                if trace is not None:
                    label = CLASSES[cls_id].value
                    for arrival, cum in zip(arr, cums):
                        trace(
                            f"{idx},{label},{arrival},"
                            f"{tbase + cum * npb - half:.1f},{a.channel.wavelength}"
                        )
            assert cursor - a.start <= a.duration_ns + 1e-6, "grant overflow"

        if len(assignments) == 1:
            tail = assignments[0]
        else:
            tail = next(a for a in assignments if a.carries_report)
        report_arrives = tail.start + tail.duration_ns  # OLT clock
        snapshot_local = report_arrives - self.report_tail_ns - half
        self._pull_onu(idx, snapshot_local)
        report = onu.build_report(snapshot_local)
        self.engine.schedule_at(report_arrives, EventKind.REPORT_AT_OLT, (idx, report))

    # -- run ---------------------------------------------------------------------

    def run(self) -> RunResult:
        eng = self.engine
        if self.warmup_ns > 0:
            eng.schedule_at(self.warmup_ns, EventKind.STATS_FLUSH)
        for i in range(self.cfg.n_onus):
            self._execute(self.scheduler.bootstrap(i, 0))
        if self.fl_session is not None:
            eng.schedule_at(0, EventKind.FL_ROUND_START)
        eng.run_until(self.duration_ns)
        self.check_conservation()
        return self._collect()

    def check_conservation(self) -> None:
        for onu in self.onus:
            cons = onu.conservation()
            for cls_id, cls in enumerate(CLASSES):
                enq, queued, dropped = cons[cls]
                tx = self.tx_frames[cls_id][onu.index]
                assert enq == tx + queued + dropped, (
                    f"onu {onu.index} {cls.value}: {enq} enqueued != "
                    f"{tx} tx + {queued} queued + {dropped} dropped"
                )

    def _collect(self) -> RunResult:
        cfg = self.cfg
        sched_label, policy_label, wl_label = cfg.label()
        result = RunResult(
            scenario=cfg.name,
            seed=self.seed,
            load=self.load,
            scheduler=sched_label,
            policy=policy_label,
            wavelength_policy=wl_label,
            warmup_s=cfg.warmup_s,
        )
        for cls_id, cls in enumerate(CLASSES):
            st = self.stats[cls_id]
            if st.count:
                result.class_count[cls] = st.count
                result.class_mean_delay_s[cls] = st.mean_ns() / 1e9
                if cls is not TrafficClass.FL and st.samples:
                    result.class_percentiles_s[cls] = {
                        p: v / 1e9 for p, v in percentile_set(st.samples).items()
                    }
            result.class_drops[cls] = sum(
                onu.qlist[cls_id].frames_dropped for onu in self.onus
            )
        horizon = self.duration_ns - self.warmup_ns
        result.util_per_wavelength = [
            (c.busy_ns - b0) / horizon
            for c, b0 in zip(self.channels, self._busy_at_warmup)
        ]
        if self.cycle_count:
            result.mean_cycle_s = self.cycle_sum / self.cycle_count / 1e9
        if self.fl_session is not None:
            records = [
                r
                for r in self.fl_session.records
                if r.start >= self.warmup_ns and not self._round_open(r.round)
            ]
            delays = [
                d / 1e9 for r in records for d in sorted(r.network_delay_ns.values())
            ]
            result.fl_round_delays_s = delays
            if delays:
                result.fl_round_percentiles_s = percentile_set(delays)
            fractions = [
                len(r.involved) / len(r.ready_offset_ns)
                for r in records
                if r.ready_offset_ns
            ]
            if fractions:
                result.involved_fraction = sum(fractions) / len(fractions)
            if cfg.sync_sweep_s and records:
                grid = [int(s * NS_PER_S) for s in cfg.sync_sweep_s]
                curve = involved_fraction_curve(records, grid)
                result.involved_sweep = [(s / 1e9, f) for s, f in curve]
        result.event_count = self.engine.processed_count
        result.frames_transmitted = sum(sum(per_onu) for per_onu in self.tx_frames)
        return result

    def _round_open(self, round_id: int) -> bool:
        return self.fl_session.is_open(round_id)


def run_replication(
    cfg: ScenarioConfig,
    load: float,
    replication: int,
    gate_trace=None,
    frame_trace=None,
) -> RunResult:
    """Seed derivation: one master seed per (config seed, replication)."""
    seed = cfg.master_seed * 1_000_003 + replication
    sim = Simulation(cfg, load, seed, gate_trace=gate_trace, frame_trace=frame_trace)
    # the hot path allocates heavily but creates no reference cycles
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        return sim.run()
    finally:
        if was_enabled:
            gc.enable()
