"""Closed-form sizing and wasted-bandwidth calculators for the limited
polling scheme and its group-SLA variant, cross-checkable against
simulated channel idle time."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class ConfigError(Exception):
    pass


@dataclass
class WasteInputs:
    cycle_ns: int
    rtt_ns: int
    n_onus: int
    n_group: int
    guard_ns: int
    wlength_percent: float  # window length as a percentage of Wmax
    per_onu_windows: Optional[list[tuple[int, int]]] = None  # (wlength, gt) ns

    def __post_init__(self):
        if self.n_group > self.n_onus:
            raise ConfigError("group larger than the PON")
        if not 0.0 <= self.wlength_percent <= 100.0:
            raise ConfigError("wlength_percent outside [0, 100]")


def wmax_per_onu(cycle_ns: int, n_onus: int, guard_ns: int) -> float:
    """Largest per-ONU window (ns) when a full cycle is divided evenly
    after per-ONU guard times."""
    if cycle_ns <= n_onus * guard_ns:
        raise ConfigError("cycle too short for the guard overhead")
    return (cycle_ns - n_onus * guard_ns) / n_onus


def ipact_waste_percent(cycle_ns: int, rtt_ns: int) -> float:
    """Idle fraction of a cycle spent waiting one round trip between a
    report and the matching grant under plain interleaved polling."""
    assert cycle_ns > 0
    return 100.0 * rtt_ns / cycle_ns


def gsipact_waste_seconds(rtt_ns: int, per_onu_windows: list[tuple[int, int]]) -> int:
    """Channel time (ns) left idle while a group's gates wait for the last
    member report, after the non-group ONUs' windows and guards.

    Note: the no-waste condition and the waste subtraction imply opposite
    inequality directions; the subtraction form is kept (waste shrinks as
    the covering windows grow) and clamped at zero, which is the only
    physically meaningful reading.
    """
    covered = sum(w + g for w, g in per_onu_windows)
    return max(0, rtt_ns - covered)


def gsipact_waste_percent(inputs: WasteInputs) -> float:
    """Scalar-parameter form: the C = n_onus - n_group outside ONUs each
    cover wlength_percent of Wmax plus one guard."""
    wmax = wmax_per_onu(inputs.cycle_ns, inputs.n_onus, inputs.guard_ns)
    c = inputs.n_onus - inputs.n_group
    covered = c * (inputs.wlength_percent * wmax / 100.0 + inputs.guard_ns)
    return 100.0 * max(0.0, inputs.rtt_ns - covered) / inputs.cycle_ns


def gsipact_waste(inputs: WasteInputs) -> tuple[float, float]:
    """(wasted ns, wasted percent of cycle).  The seconds form uses the
    explicit per-ONU windows when supplied, the scalar form otherwise."""
    if inputs.per_onu_windows is not None:
        wasted_ns = gsipact_waste_seconds(inputs.rtt_ns, inputs.per_onu_windows)
        return wasted_ns, 100.0 * wasted_ns / inputs.cycle_ns
    pct = gsipact_waste_percent(inputs)
    return pct * inputs.cycle_ns / 100.0, pct
