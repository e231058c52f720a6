import math

import numpy as np
import pytest
from scipy import stats as scipy_stats

from oracles import nearest_rank
from ponsim.metrics import (
    CSV_COLUMNS,
    ClassStats,
    EmptySamples,
    InsufficientReplications,
    aggregate_replications,
    percentile_set,
    rows_to_csv,
)


def test_percentiles_of_1_to_100():
    p = percentile_set([float(x) for x in range(1, 101)])
    assert p == {10: 10, 30: 30, 50: 50, 80: 80, 100: 100}


def test_single_sample_everywhere():
    assert set(percentile_set([7.0]).values()) == {7.0}


def test_tied_samples():
    assert set(percentile_set([5.0, 5.0, 5.0]).values()) == {5.0}


def test_percentiles_match_naive_nearest_rank():
    rng = np.random.default_rng(1)
    samples = rng.exponential(1.0, 997).tolist()
    ps = percentile_set(samples)
    for p, v in ps.items():
        assert v == nearest_rank(samples, p)


def test_empty_samples_rejected():
    with pytest.raises(EmptySamples):
        percentile_set([])


def test_identical_replications_zero_halfwidth():
    mean, half = aggregate_replications([3.0] * 10)
    assert mean == 3.0 and half == 0.0


def test_two_replications_mean():
    mean, half = aggregate_replications([10.0, 20.0])
    assert mean == 15.0
    # t(0.975, df=1) * s / sqrt(2), s = sqrt(50)
    expected = scipy_stats.t.ppf(0.975, 1) * math.sqrt(50.0 / 2.0)
    assert half == pytest.approx(expected)


def test_insufficient_replications():
    with pytest.raises(InsufficientReplications):
        aggregate_replications([1.0])


def test_streaming_mean_matches_trace():
    rng = np.random.default_rng(2)
    delays = rng.uniform(0, 1e6, 100_000)
    st = ClassStats()
    for d in delays:
        st.add(float(d))
    assert st.mean_ns() == pytest.approx(float(delays.mean()), rel=1e-12)


def test_systematic_sample_mean_close_to_exact():
    # thinned sample buffer acts like a bounded reservoir: its mean stays
    # within 1% of the exact mean over a million skewed samples
    rng = np.random.default_rng(3)
    delays = rng.lognormal(10, 1.0, 1_000_000)
    st = ClassStats(sample_cap=100_000)
    for d in delays:
        st.add(float(d))
    assert len(st.samples) <= 100_000
    sample_mean = sum(st.samples) / len(st.samples)
    assert sample_mean == pytest.approx(float(delays.mean()), rel=0.01)


def test_csv_layout_and_determinism():
    rows = [("s", 1, 0.8, "dwba_fl", "dc_first", "ff", "dc", "mean_delay_s", 0.001)]
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "s,1,0.8,dwba_fl,dc_first,ff,dc,mean_delay_s,0.001"
    assert rows_to_csv(rows) == text


def test_float_repr_round_trips():
    value = 0.1 + 0.2
    text = rows_to_csv([("s", 1, 0.8, "a", "", "ff", "dc", "m", value)])
    assert float(text.splitlines()[1].split(",")[-1]) == value
