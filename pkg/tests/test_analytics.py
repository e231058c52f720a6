import pytest

from ponsim.analytics import (
    ConfigError,
    WasteInputs,
    gsipact_waste,
    gsipact_waste_percent,
    gsipact_waste_seconds,
    ipact_waste_percent,
    wmax_per_onu,
)

US = 1_000


def test_wmax_reference_point():
    assert wmax_per_onu(1000 * US, 32, 1 * US) == 30_250.0  # 30.25 us


def test_wmax_with_default_guard():
    # (1000 - 32 * 0.624) / 32 us
    assert wmax_per_onu(1000 * US, 32, 624) == pytest.approx(30_626.0)


def test_wmax_zero_guard_divides_cycle():
    assert wmax_per_onu(1000 * US, 32, 0) == pytest.approx(31_250.0)


def test_wmax_rejects_guard_dominated_cycle():
    with pytest.raises(ConfigError):
        wmax_per_onu(10 * US, 32, 1 * US)


def test_ipact_waste_endpoints():
    assert ipact_waste_percent(1000 * US, 100 * US) == 10.0
    assert ipact_waste_percent(1000 * US, 200 * US) == 20.0
    assert ipact_waste_percent(1000 * US, 0) == 0.0


def test_gsipact_seconds_subtracts_covering_windows():
    windows = [(50 * US, 10 * US), (50 * US, 10 * US)]  # sums to 120 us
    assert gsipact_waste_seconds(150 * US, windows) == 30 * US


def test_gsipact_seconds_clamps_at_zero():
    windows = [(100 * US, 10 * US), (100 * US, 10 * US)]
    assert gsipact_waste_seconds(150 * US, windows) == 0


def test_gsipact_percent_reference_point():
    inputs = WasteInputs(
        cycle_ns=1000 * US,
        rtt_ns=200 * US,
        n_onus=32,
        n_group=28,
        guard_ns=1 * US,
        wlength_percent=100.0,
    )
    assert gsipact_waste_percent(inputs) == pytest.approx(7.5)
    wasted_ns, pct = gsipact_waste(inputs)
    assert pct == pytest.approx(7.5)
    assert wasted_ns == pytest.approx(75 * US)


def test_gsipact_monotonicity():
    def pct(rtt_us, wl):
        return gsipact_waste_percent(
            WasteInputs(1000 * US, rtt_us * US, 32, 28, 1 * US, wl)
        )

    # waste grows with RTT, shrinks as the covering windows grow
    assert pct(100, 50) <= pct(150, 50) <= pct(200, 50)
    assert pct(200, 100) <= pct(200, 50) <= pct(200, 0)


def test_waste_inputs_validation():
    with pytest.raises(ConfigError):
        WasteInputs(1000, 100, 4, 5, 1, 50.0)
    with pytest.raises(ConfigError):
        WasteInputs(1000, 100, 4, 2, 1, 101.0)


def test_seconds_form_preferred_when_windows_given():
    inputs = WasteInputs(
        cycle_ns=1000 * US,
        rtt_ns=150 * US,
        n_onus=32,
        n_group=30,
        guard_ns=1 * US,
        wlength_percent=0.0,
        per_onu_windows=[(50 * US, 10 * US), (50 * US, 10 * US)],
    )
    wasted_ns, pct = gsipact_waste(inputs)
    assert wasted_ns == 30 * US
    assert pct == pytest.approx(3.0)
