"""Grant-sizing policies: limited service, excess-distribution family, and
group-SLA aggregation.

All byte arithmetic is exact; fractional shares round down, and the
leftover from a controlled clamp (DBA3/WDBA1) is not redistributed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class IncompleteGroup(Exception):
    """group_schedule invoked before every member reported."""


class ExcessPolicy(Enum):
    DBA1 = "dba1"  # excess proportional to request
    DBA2 = "dba2"  # equal split
    DBA3 = "dba3"  # equal split clamped to request
    WDBA = "wdba"  # proportional to excess demand R - Wmax
    WDBA1 = "wdba1"  # WDBA clamped to request


@dataclass(frozen=True)
class Demand:
    onu: int
    request_bytes: int
    wmax_bytes: int

    def __post_init__(self):
        if self.request_bytes < 0 or self.wmax_bytes <= 0:
            raise ValueError("request must be >= 0 and wmax > 0")


@dataclass
class DemandSet:
    entries: list[Demand]

    def __post_init__(self):
        onus = [d.onu for d in self.entries]
        if len(set(onus)) != len(onus):
            raise ValueError("duplicate onu index in demand set")

    def by_onu(self) -> dict[int, Demand]:
        return {d.onu: d for d in self.entries}


@dataclass
class ExcessPool:
    total_bytes: int
    contributors: list[int]


def limited_grant(request_bytes: int, wmax_bytes: int) -> int:
    """Limited service policy: grant what was asked, capped at Wmax."""
    assert request_bytes >= 0 and wmax_bytes >= 0
    return min(request_bytes, wmax_bytes)


def classify(demands: DemandSet) -> tuple[set[int], set[int]]:
    """Partition into underloaded (request <= Wmax) and overloaded ONUs."""
    under, over = set(), set()
    for d in demands.entries:
        (under if d.request_bytes <= d.wmax_bytes else over).add(d.onu)
    return under, over


def excess_pool(demands: DemandSet, under: set[int]) -> ExcessPool:
    total = 0
    contributors = []
    for d in demands.entries:
        if d.onu in under:
            total += d.wmax_bytes - d.request_bytes
            contributors.append(d.onu)
    return ExcessPool(total_bytes=total, contributors=contributors)


def distribute_excess(
    policy: ExcessPolicy, demands: DemandSet, over: set[int], pool: ExcessPool
) -> dict[int, int]:
    """Total grants for the overloaded set under the chosen excess policy.

    Returns a map onu -> grant bytes covering exactly the overloaded ONUs
    (empty when none are overloaded; an unused pool is simply not handed
    out).  Underloaded ONUs are granted their request by the caller.
    """
    over_demands = [d for d in demands.entries if d.onu in over]
    if not over_demands:
        return {}
    e_total = pool.total_bytes
    grants: dict[int, int] = {}
    if policy is ExcessPolicy.DBA1:
        total_r = sum(d.request_bytes for d in over_demands)
        assert total_r > 0  # overloaded implies R > Wmax > 0
        for d in over_demands:
            grants[d.onu] = d.wmax_bytes + e_total * d.request_bytes // total_r
    elif policy is ExcessPolicy.DBA2:
        share = e_total // len(over_demands)
        for d in over_demands:
            grants[d.onu] = d.wmax_bytes + share
    elif policy is ExcessPolicy.DBA3:
        share = e_total // len(over_demands)
        for d in over_demands:
            grants[d.onu] = min(d.request_bytes, d.wmax_bytes + share)
    elif policy in (ExcessPolicy.WDBA, ExcessPolicy.WDBA1):
        total_b = sum(d.request_bytes - d.wmax_bytes for d in over_demands)
        assert total_b > 0
        for d in over_demands:
            b_i = d.request_bytes - d.wmax_bytes
            value = d.wmax_bytes + e_total * b_i // total_b
            if policy is ExcessPolicy.WDBA1:
                value = min(d.request_bytes, value)
            grants[d.onu] = value
    else:  # pragma: no cover
        raise ValueError(policy)
    return grants


@dataclass
class GroupState:
    """Report buffer for one SLA group; gates are withheld until full."""

    group_id: int
    members: frozenset[int]
    policy: ExcessPolicy
    buffered: dict[int, object] = field(default_factory=dict)
    arrival_order: list[int] = field(default_factory=list)

    def add_report(self, onu: int, report) -> bool:
        """Buffer a member report; True when the group became complete."""
        assert onu in self.members
        if onu not in self.buffered:
            self.arrival_order.append(onu)
        self.buffered[onu] = report
        return len(self.buffered) == len(self.members)

    def clear(self) -> None:
        self.buffered.clear()
        self.arrival_order.clear()


def group_schedule(group: GroupState, demands: DemandSet) -> dict[int, int]:
    """Grants for a complete group: legacy limited grant plus the member's
    share of the pooled excess from its underloaded peers."""
    if set(group.buffered) != set(group.members):
        raise IncompleteGroup(
            f"group {group.group_id}: {len(group.buffered)}/{len(group.members)} reports"
        )
    under, over = classify(demands)
    pool = excess_pool(demands, under)
    extra = distribute_excess(group.policy, demands, over, pool)
    grants: dict[int, int] = {}
    for d in demands.entries:
        legacy = limited_grant(d.request_bytes, d.wmax_bytes)
        new_length = extra[d.onu] - d.wmax_bytes if d.onu in over else 0
        grants[d.onu] = legacy + new_length
    group.clear()
    return grants
