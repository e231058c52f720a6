import pytest

from ponsim.flsync import (
    AccuracyTable,
    EmptyTable,
    FlSession,
    accuracy_at,
    involved_fraction_curve,
)
from ponsim.kernel import RngStream
from ponsim.traffic import FlWorkloadSpec

S = 1_000_000_000


def session(**spec_kw):
    defaults = dict(
        payload_bytes_per_round=1000,
        clients=3,
        compute_min_s=1.0,
        compute_max_s=2.5,
        downstream_delay_ns=10_000_000,
        aggregation_delay_ns=0,
    )
    defaults.update(spec_kw)
    spec = FlWorkloadSpec(**defaults)
    return FlSession(spec, clients=list(range(spec.clients)), stream=RngStream("fl", 3))


def test_release_is_start_plus_downstream_plus_compute():
    s = session(compute_min_s=1.0, compute_max_s=1.0)
    states = s.start_round(now=0)
    assert all(st.upload_release == 10_000_000 + st.compute_time_ns for st in states)
    assert all(st.compute_time_ns == S for st in states)


def test_releases_ordered_by_compute_time():
    s = session()
    states = s.start_round(now=0)
    by_compute = sorted(states, key=lambda st: st.compute_time_ns)
    by_release = sorted(states, key=lambda st: st.upload_release)
    assert [st.client for st in by_compute] == [st.client for st in by_release]


def test_close_round_threshold_counting():
    s = session(sync_window_ns=2 * S, downstream_delay_ns=0)
    s.start_round(now=0)
    for client, t in ((0, int(1.0 * S)), (1, int(1.8 * S)), (2, int(2.2 * S))):
        s.note_completion(client, 0, t)
    record = s.close_round(now=2 * S)
    assert record.involved == {0, 1}
    assert record.stragglers == {2}
    assert record.involved | record.stragglers == {0, 1, 2}


def test_wait_for_all_involves_everyone():
    s = session(sync_window_ns=None, downstream_delay_ns=0)
    s.start_round(now=0)
    ready = False
    for client, t in ((0, S), (1, 2 * S), (2, 3 * S)):
        ready = s.note_completion(client, 0, t)
    assert ready
    assert s.aggregate_time() == 3 * S  # aggregation delay 0
    record = s.close_round(now=3 * S)
    assert record.involved == {0, 1, 2} and not record.stragglers


def test_aggregation_delay_counts_toward_window():
    s = session(sync_window_ns=2 * S, aggregation_delay_ns=500_000_000)
    s.start_round(now=0)
    s.note_completion(0, 0, int(1.6 * S))  # ready at 2.1 s > S
    s.note_completion(1, 0, int(1.4 * S))  # ready at 1.9 s <= S
    s.note_completion(2, 0, int(0.5 * S))
    record = s.close_round(now=2 * S)
    assert record.involved == {1, 2}


def test_involved_monotone_in_window():
    s = session(sync_window_ns=None, downstream_delay_ns=0)
    s.start_round(now=0)
    for client, t in ((0, S), (1, 2 * S), (2, 3 * S)):
        s.note_completion(client, 0, t)
    s.close_round(now=3 * S)
    curve = involved_fraction_curve(s.records, [int(0.5 * S), S, 2 * S, 3 * S, 4 * S])
    fractions = [f for _, f in curve]
    assert fractions == sorted(fractions)
    assert fractions[0] == 0.0 and fractions[-1] == 1.0


def test_curve_constant_when_all_complete_early():
    s = session(sync_window_ns=None, downstream_delay_ns=0)
    s.start_round(now=0)
    for c in range(3):
        s.note_completion(c, 0, 1000)
    s.close_round(now=S)
    curve = involved_fraction_curve(s.records, [S, 2 * S])
    assert [f for _, f in curve] == [1.0, 1.0]


def test_rounds_serialize():
    s = session(sync_window_ns=S)
    s.start_round(now=0)
    with pytest.raises(AssertionError):
        s.start_round(now=S)


# -- accuracy table -----------------------------------------------------------------


def test_linear_interpolation_and_clamp():
    table = AccuracyTable([(0.0, 0.0), (1.0, 0.8)])
    assert accuracy_at(table, 0.5) == pytest.approx(0.4)
    assert accuracy_at(table, -1.0) == 0.0
    assert accuracy_at(table, 2.0) == 0.8


def test_empty_table_rejected():
    with pytest.raises(EmptyTable):
        AccuracyTable([])


def test_non_monotone_rejected():
    with pytest.raises(ValueError):
        AccuracyTable([(0.0, 0.5), (1.0, 0.4)])


def test_load_table_from_file(tmp_path):
    path = tmp_path / "acc.txt"
    path.write_text("# fraction accuracy\n0.0 0.10\n0.5 0.70  # midpoint\n1.0 0.78\n")
    table = AccuracyTable.load(path)
    assert accuracy_at(table, 0.75) == pytest.approx(0.74)


def test_bundled_example_table_hits_operating_point():
    from pathlib import Path

    table = AccuracyTable.load(
        Path(__file__).parent.parent / "src" / "ponsim" / "data" / "accuracy_example.txt"
    )
    assert accuracy_at(table, 0.8) > 0.75
