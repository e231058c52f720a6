"""Federated-learning round lifecycle.

Rounds are synchronous and strictly serialized: every client receives the
global model (constant downstream delay), trains for a random compute
time, then releases its whole upload into the ONU queue.  A round closes
either when every upload has completed (no sync window) or at a fixed
synchronization window, excluding stragglers.  Model accuracy is an input
lookup table over the involved-client fraction, never computed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .kernel import RngStream
from .traffic import FlWorkloadSpec


class EmptyTable(Exception):
    pass


@dataclass(slots=True)
class FlClientState:
    client: int  # onu index
    round: int
    compute_time_ns: int
    upload_release: int
    upload_complete: Optional[int] = None


@dataclass
class RoundRecord:
    round: int
    start: int
    sync_window_ns: Optional[int]
    involved: set[int] = field(default_factory=set)
    stragglers: set[int] = field(default_factory=set)
    # per client, time from round start until the aggregate could use the
    # upload (completion + aggregation delay); None while still in flight
    ready_offset_ns: dict[int, Optional[int]] = field(default_factory=dict)
    network_delay_ns: dict[int, int] = field(default_factory=dict)


class FlSession:
    """Round state machine; event scheduling stays with the caller."""

    def __init__(self, spec: FlWorkloadSpec, clients: list[int], stream: RngStream):
        self.spec = spec
        self.clients = list(clients)
        self.stream = stream
        self.records: list[RoundRecord] = []
        self.round = -1
        self.round_start = 0
        self._states: dict[int, FlClientState] = {}
        self._open = False

    # -- lifecycle ---------------------------------------------------------

    def start_round(self, now: int) -> list[FlClientState]:
        """Open the next round; returns per-client upload release times."""
        assert not self._open, "previous round not aggregated yet"
        self.round += 1
        self.round_start = now
        self._open = True
        self.records.append(
            RoundRecord(
                round=self.round,
                start=now,
                sync_window_ns=self.spec.sync_window_ns,
                ready_offset_ns={c: None for c in self.clients},
            )
        )
        states = []
        for client in self.clients:
            compute = int(
                self.stream.uniform(
                    self.spec.compute_min_s * 1e9, self.spec.compute_max_s * 1e9
                )
            )
            release = now + self.spec.downstream_delay_ns + compute
            st = FlClientState(
                client=client,
                round=self.round,
                compute_time_ns=compute,
                upload_release=release,
            )
            states.append(st)
            self._states[client] = st
        return states

    def note_completion(self, client: int, round_id: int, complete_ns: int) -> bool:
        """Record an upload completion (last bit at the OLT).  Returns True
        when this completion makes the current round ready to aggregate
        (only in the wait-for-all mode)."""
        record = self.records[round_id]
        ready = complete_ns + self.spec.aggregation_delay_ns
        record.ready_offset_ns[client] = ready - record.start
        if round_id == self.round:
            st = self._states.get(client)
            if st is not None and st.round == round_id:
                st.upload_complete = complete_ns
                record.network_delay_ns[client] = complete_ns - st.upload_release
        if self.spec.sync_window_ns is not None or round_id != self.round:
            return False
        return all(s.upload_complete is not None for s in self._states.values())

    def aggregate_time(self) -> int:
        """When the open round's aggregate fires (wait-for-all mode)."""
        assert self.spec.sync_window_ns is None
        return (
            max((s.upload_complete or 0) for s in self._states.values())
            + self.spec.aggregation_delay_ns
            if self._states
            else self.round_start + self.spec.aggregation_delay_ns
        )

    def close_round(self, now: int) -> RoundRecord:
        """Split clients into involved and stragglers and end the round."""
        assert self._open
        record = self.records[self.round]
        window = self.spec.sync_window_ns
        for client in self.clients:
            offset = record.ready_offset_ns[client]
            if window is None:
                ok = offset is not None
            else:
                ok = offset is not None and offset <= window
            (record.involved if ok else record.stragglers).add(client)
        self._open = False
        self._states.clear()
        return record

    def next_round_start(self, now: int) -> int:
        return now  # aggregation delay already elapsed when close fires

    def is_open(self, round_id: int) -> bool:
        return self._open and round_id == self.round


def involved_fraction_curve(
    records: list[RoundRecord], s_grid_ns: list[int]
) -> list[tuple[int, float]]:
    """Mean involved-client fraction as a function of the sync window,
    evaluated post hoc from recorded upload-ready offsets."""
    assert records, "need at least one completed round"
    out = []
    for s in s_grid_ns:
        fractions = []
        for r in records:
            n = len(r.ready_offset_ns)
            if n == 0:
                continue
            k = sum(1 for off in r.ready_offset_ns.values() if off is not None and off <= s)
            fractions.append(k / n)
        out.append((s, sum(fractions) / len(fractions) if fractions else 0.0))
    return out


class AccuracyTable:
    """Monotone lookup of model accuracy vs involved-client fraction."""

    def __init__(self, rows: list[tuple[float, float]]):
        if not rows:
            raise EmptyTable("accuracy table has no rows")
        self.rows = sorted(rows)
        fracs = [f for f, _ in self.rows]
        accs = [a for _, a in self.rows]
        if any(b < a for a, b in zip(accs, accs[1:])):
            raise ValueError("accuracy must be non-decreasing in fraction")
        if any(not 0.0 <= v <= 1.0 for v in fracs + accs):
            raise ValueError("fractions and accuracies must lie in [0, 1]")

    @classmethod
    def load(cls, path) -> "AccuracyTable":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                frac, acc = line.split()
                rows.append((float(frac), float(acc)))
        return cls(rows)

    def accuracy_at(self, fraction: float) -> float:
        rows = self.rows
        if fraction <= rows[0][0]:
            return rows[0][1]
        if fraction >= rows[-1][0]:
            return rows[-1][1]
        for (f0, a0), (f1, a1) in zip(rows, rows[1:]):
            if f0 <= fraction <= f1:
                if f1 == f0:
                    return a1
                t = (fraction - f0) / (f1 - f0)
                return a0 + t * (a1 - a0)
        raise AssertionError("unreachable")


def accuracy_at(table: AccuracyTable, fraction: float) -> float:
    return table.accuracy_at(fraction)
