from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ponsim.core import SLOT_TICKS
from ponsim.frames import UpstreamSlotPayload
from ponsim.phy import (
    Awg, BurstReceiver, CwdmStage, DwdmGrid, OpticalPath, PlantError, ReceiverConfig,
    ReceptionKind, Splitter, UpstreamBurst, WavelengthPlan, cwdm_filter, path_loss_db,
    propagation_ticks, receive_bursts, route_wavelength,
)


@pytest.mark.parametrize("length", [0, 1, 999, 1000, 2880, 5000, 12345.5, 20000])
def test_propagation_matches_decimal_oracle(length):
    assert propagation_ticks(length) == oracles.propagation_ticks(length)


def test_propagation_reference_points():
    assert propagation_ticks(1000) == 778
    assert propagation_ticks(20_000) == 15552
    with pytest.raises(PlantError):
        propagation_ticks(-1)


@pytest.mark.parametrize("ports", [2, 4, 8, 16, 32])
def test_splitter_loss(ports):
    assert Splitter(ports).loss_db() == pytest.approx(oracles.splitter_loss_db(ports, 1.0))


def test_splitter_32_loss_value():
    assert Splitter(32).loss_db() == pytest.approx(16.05, abs=0.005)
    with pytest.raises(PlantError):
        Splitter(12)


def test_path_loss_adds_fiber_device_and_connectors():
    path = OpticalPath((4000.0, 6000.0), Splitter(8), connector_loss_db=1.0)
    expected = 0.35 * 10 + oracles.splitter_loss_db(8, 1.0) + 1.0
    assert path_loss_db(path, 1310) == pytest.approx(expected)
    assert path_loss_db(path, 1490) == pytest.approx(expected - 1.0)


def test_cwdm_separates_bands():
    assert cwdm_filter(CwdmStage.CWDM1, 1310) == "upstream"
    assert cwdm_filter(CwdmStage.CWDM1, 1490) == "downstream"
    assert cwdm_filter(CwdmStage.CWDM1, 1550) == "downstream"
    assert cwdm_filter(CwdmStage.CWDM2, 1490) == "basic"
    assert cwdm_filter(CwdmStage.CWDM2, 1550) == "enhancement"
    with pytest.raises(PlantError):
        cwdm_filter(CwdmStage.CWDM2, 1310)
    with pytest.raises(PlantError):
        cwdm_filter(CwdmStage.CWDM1, 1420)


def test_wavelength_plan_checks():
    WavelengthPlan().validate()
    with pytest.raises(PlantError, match="overlap"):
        WavelengthPlan(downstream_basic_band=(1480.0, 1545.0)).validate()
    with pytest.raises(PlantError, match="enhancement band"):
        WavelengthPlan(dwdm_grid=DwdmGrid(1560.0, 0.8, 16)).validate()


def test_dwdm_grid_indexing_is_exact():
    grid = DwdmGrid()
    assert grid.channel_index(1540.8) == 1
    assert grid.channel_index(1552.0) == 15
    assert grid.channel_index(1540.4) is None
    assert grid.channel_index(1552.8) is None


@pytest.mark.parametrize("ports", [4, 8, 16])
def test_awg_routing_is_a_permutation(ports):
    awg = Awg(ports=ports)
    grid = DwdmGrid(count=ports)
    plan = WavelengthPlan(dwdm_grid=grid)
    for inp in range(ports):
        outs = [route_wavelength(awg, inp, wl, plan=plan) for wl in grid.channels()]
        assert all(len(o) == 1 for o in outs)
        assert sorted(next(iter(o)) for o in outs) == list(range(ports))


def test_awg_drift_beyond_tolerance_routes_nowhere():
    awg = Awg()
    t = awg.reference_temp_c + 0.45 / awg.temp_coefficient_nm_per_c
    assert abs(awg.drift_nm(t)) == pytest.approx(0.45)
    assert route_wavelength(awg, 0, 1540.0, temperature_c=t) == frozenset()
    assert route_wavelength(awg, 0, 1540.0, temperature_c=30) == frozenset({0})


def test_awg_threshold_matches_oracle():
    awg = Awg()
    low, high = awg.threshold_temperatures()
    assert (low, high) == oracles.awg_threshold_temperature(25.0, 0.011, 0.8, 0.1)
    assert not awg.aligned(high) and not awg.aligned(low)
    nudge = Fraction(1, 10**9)
    assert awg.aligned(high - nudge) and awg.aligned(low + nudge)


def test_splitter_broadcasts():
    assert route_wavelength(Splitter(8), 0, 1490) == frozenset(range(8))


def burst(source, arrival, power=-20.0, slots=1):
    return UpstreamBurst(source, arrival, payload=UpstreamSlotPayload.idle(),
                         arrival_time=arrival, received_power_dbm=power, slots=slots)


def test_single_slot_outcomes():
    assert receive_bursts([]).kind is ReceptionKind.SILENCE
    assert receive_bursts([burst(1, 0)]).ok
    assert receive_bursts([burst(1, 0, power=-31)]).kind is ReceptionKind.POWER_TOO_LOW
    assert receive_bursts([burst(1, 0, power=-7)]).kind is ReceptionKind.POWER_TOO_HIGH
    clash = receive_bursts([burst(1, 0), burst(2, SLOT_TICKS - 1)])
    assert clash.kind is ReceptionKind.COLLISION and clash.sources == (1, 2)
    assert receive_bursts([burst(1, 0), burst(2, SLOT_TICKS)]).ok


def test_long_reset_needs_more_than_the_preamble():
    slow = ReceiverConfig(reset_ticks=25)
    assert receive_bursts([burst(1, 0)], config=slow).kind is ReceptionKind.INSUFFICIENT_PREAMBLE
    # a big power step lengthens the reset past the 24-bit overhead
    steep = ReceiverConfig(reset_ticks_per_db=1.0)
    assert receive_bursts([burst(1, 0, -10)], previous_burst_power_dbm=-29.0,
                          config=steep).kind is ReceptionKind.INSUFFICIENT_PREAMBLE
    assert receive_bursts([burst(1, 0, -10)], previous_burst_power_dbm=-12.0, config=steep).ok


def test_receiver_splits_overlapping_trains():
    rx = BurstReceiver()
    rx.extend([burst(1, 0, slots=4), burst(2, 3 * SLOT_TICKS, slots=2)])
    runs = rx.settle()
    collided = {(b.source, k) for b, k, n, kind in runs if kind is ReceptionKind.COLLISION}
    assert collided == {(1, 3), (2, 0)}
    ok = sum(n for _, _, n, kind in runs if kind is ReceptionKind.OK)
    assert ok == 4


def test_receiver_waits_for_the_horizon():
    rx = BurstReceiver()
    rx.add(burst(1, 0, slots=3))
    assert rx.settle(horizon=2 * SLOT_TICKS) == []
    assert len(rx) == 1
    assert len(rx.settle(horizon=3 * SLOT_TICKS)) == 1


def _per_slot_outcomes(runs):
    out = {}
    for b, first, count, kind in runs:
        for k in range(first, first + count):
            out[(b.source, b.arrival_time + k * SLOT_TICKS)] = kind
    return out


trains = st.lists(
    st.tuples(st.integers(1, 6), st.integers(0, 40 * SLOT_TICKS), st.integers(1, 5),
              st.sampled_from([-12.0, -20.0, -29.5])),
    min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(trains)
def test_train_reception_equals_slot_by_slot_reception(spec):
    """A train of n slots is received exactly like n back-to-back single slots."""
    # one train per source so (source, time) identifies a slot
    seen = {}
    for src, t, n, p in spec:
        seen.setdefault(src, (t, n, p))
    whole = BurstReceiver()
    split = BurstReceiver()
    for src, (t, n, p) in seen.items():
        whole.add(burst(src, t, p, slots=n))
        for k in range(n):
            split.add(burst(src, t + k * SLOT_TICKS, p))
    assert _per_slot_outcomes(whole.settle()) == _per_slot_outcomes(split.settle())
