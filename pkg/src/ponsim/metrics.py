"""Delay, utilization, cycle, and FL-round statistics, plus the results
CSV contract shared with the plotting frontend.

Frame-delay means come from exact streaming accumulators; percentile sets
use deterministic systematic samples (every k-th frame, k doubling when
the buffer fills) so runs of any length stay bounded and reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from scipy import stats as _scipy_stats

from .traffic import CLASSES, TrafficClass

PERCENTILES = (10, 30, 50, 80, 100)

CSV_COLUMNS = (
    "scenario",
    "seed",
    "load",
    "scheduler",
    "policy",
    "wavelength_policy",
    "class",
    "metric",
    "value",
)


class EmptySamples(Exception):
    pass


class InsufficientReplications(Exception):
    pass


def percentile_set(samples: list[float]) -> dict[int, float]:
    """Nearest-rank percentiles at 10/30/50/80/100 (p100 is the maximum)."""
    if not samples:
        raise EmptySamples("percentiles need at least one sample")
    ordered = sorted(samples)
    n = len(ordered)
    return {p: ordered[max(0, math.ceil(p / 100.0 * n) - 1)] for p in PERCENTILES}


def aggregate_replications(values: list[float]) -> tuple[float, float]:
    """Mean and Student-t 95% half-width across replications."""
    n = len(values)
    if n < 2:
        raise InsufficientReplications("need at least 2 replications")
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = float(_scipy_stats.t.ppf(0.975, n - 1)) * math.sqrt(var / n)
    return mean, half


class ClassStats:
    """Streaming per-class frame-delay accumulator (ns domain)."""

    __slots__ = ("count", "total_ns", "samples", "stride", "tick", "sample_cap")

    def __init__(self, sample_cap: int = 1 << 16):
        self.count = 0
        self.total_ns = 0.0
        self.samples: list[float] = []
        self.stride = 1
        self.tick = 0
        self.sample_cap = sample_cap

    def add(self, delay_ns: float) -> None:
        self.count += 1
        self.total_ns += delay_ns
        self.tick += 1
        if self.tick >= self.stride:
            self.tick = 0
            self.samples.append(delay_ns)
            if len(self.samples) >= self.sample_cap:
                self.samples = self.samples[::2]
                self.stride *= 2

    def mean_ns(self) -> float:
        return self.total_ns / self.count if self.count else float("nan")


@dataclass
class RunResult:
    scenario: str
    seed: int
    load: float
    scheduler: str
    policy: str
    wavelength_policy: str
    class_count: dict[TrafficClass, int] = field(default_factory=dict)
    class_mean_delay_s: dict[TrafficClass, float] = field(default_factory=dict)
    class_percentiles_s: dict[TrafficClass, dict[int, float]] = field(default_factory=dict)
    class_drops: dict[TrafficClass, int] = field(default_factory=dict)
    util_per_wavelength: list[float] = field(default_factory=list)
    mean_cycle_s: float = float("nan")
    fl_round_delays_s: list[float] = field(default_factory=list)
    fl_round_percentiles_s: Optional[dict[int, float]] = None
    involved_fraction: float = float("nan")
    involved_sweep: list[tuple[float, float]] = field(default_factory=list)
    warmup_s: float = 0.0
    # diagnostics, not part of the CSV contract
    event_count: int = 0
    frames_transmitted: int = 0


def result_rows(r: RunResult) -> list[tuple]:
    """Flatten one replication into schema rows, deterministically ordered."""
    base = (r.scenario, r.seed, r.load, r.scheduler, r.policy, r.wavelength_policy)
    rows: list[tuple] = []

    def add(cls_label: str, metric: str, value) -> None:
        rows.append(base + (cls_label, metric, value))

    for cls in CLASSES:
        label = cls.value
        if cls in r.class_mean_delay_s:
            add(label, "mean_delay_s", r.class_mean_delay_s[cls])
            add(label, "frame_count", r.class_count[cls])
        if cls is TrafficClass.FL:
            # percentile rows for FL are round-level network delays
            if r.fl_round_percentiles_s:
                for p, v in sorted(r.fl_round_percentiles_s.items()):
                    add(label, f"p{p}", v)
        elif cls in r.class_percentiles_s:
            for p, v in sorted(r.class_percentiles_s[cls].items()):
                add(label, f"p{p}", v)
        add(label, "drop_count", r.class_drops.get(cls, 0))
    for k, util in enumerate(r.util_per_wavelength):
        add("all", f"util_l{k}", util)
    add("all", "mean_cycle_s", r.mean_cycle_s)
    if r.fl_round_delays_s:
        add("fl", "fl_round_delay_s", sum(r.fl_round_delays_s) / len(r.fl_round_delays_s))
        add("fl", "fl_round_count", len(r.fl_round_delays_s))
    if not math.isnan(r.involved_fraction):
        add("fl", "involved_fraction", r.involved_fraction)
    for s_seconds, fraction in r.involved_sweep:
        add("fl", f"involved_fraction_s{s_seconds:g}", fraction)
    return rows


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[tuple]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"
