import json
import math

import numpy as np
import pytest

from ponsim import ScenarioError, Stage, build_topology, load_scenario, scenario_from_dict, run
from ponsim.core import stream_rng
from ponsim.phy import Awg, route_wavelength
from ponsim.scenario import generate_traffic, traffic_stream, with_seed


def base(**over):
    d = {"stage": "TDM_BASELINE", "plant": {"splitter": {"ports": 32}},
         "onts": [{"id": 1}], "duration_s": 0.01, "seed": 1}
    d.update(over)
    return d


def errors_of(doc):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(doc)
    return info.value.errors


def test_minimal_document_gets_defaults():
    s = scenario_from_dict(base())
    assert s.plant.reach_m == 20_000
    assert s.onts[0].weight == 1 and s.onts[0].kind == "tdm"
    again = scenario_from_dict(json.loads(s.to_json()))
    assert again == s


def test_errors_carry_field_paths():
    errs = errors_of(base(bogus=1, onts=[{"id": 1, "fiber_m": "far"}],
                          plant={"splitter": {"ports": 12}}))
    assert "bogus: unknown key" in errs
    assert any(e.startswith("onts[0].fiber_m:") for e in errs)
    assert any(e.startswith("plant.splitter.ports:") for e in errs)


def test_missing_stage_is_named():
    d = base()
    del d["stage"]
    assert errors_of(d) == ["stage: required field is missing"]


def test_duplicate_ont_id_is_named():
    assert errors_of(base(onts=[{"id": 4}, {"id": 4}])) == ["onts[1].id: duplicate ONT id 4"]


def test_stage_topology_rules():
    assert errors_of(base(stage="FULL_WDM", onts=[{"id": 1, "kind": "wdm"}]))
    assert errors_of(base(stage="COEXISTENCE"))
    assert errors_of(base(plant={"awg": {"ports": 16}}))


def test_zero_rate_is_rejected():
    errs = errors_of(base(traffic={"default": {"model": "cbr", "rate_cells_per_s": 0}}))
    assert errs == ["traffic.default.rate_cells_per_s: must be > 0"]


def test_bad_json_is_a_scenario_error():
    with pytest.raises(ScenarioError):
        load_scenario("{not json")


def test_with_seed_replaces_only_the_seed():
    s = scenario_from_dict(base())
    t = with_seed(s, 99)
    assert t.seed == 99 and t.onts == s.onts


def test_cbr_spacing_is_exact():
    times = [t for t, _ in zip(generate_traffic("cbr", 1000), range(5))]
    assert times == [155_520, 311_040, 466_560, 622_080, 777_600]


def test_poisson_rate_within_three_sigma():
    rate = 50_000.0
    stream = generate_traffic("poisson", rate, stream_rng(11, 1))
    horizon = 155_520_000 * 3      # three seconds, ~150k arrivals
    n = len(stream.until(horizon))
    expected = rate * 3
    assert abs(n - expected) < 3 * math.sqrt(expected)


def test_per_ont_streams_are_independent():
    two = scenario_from_dict(base(onts=[{"id": 1}, {"id": 2}],
                                  traffic={"default": {"model": "poisson",
                                                       "rate_cells_per_s": 1000}}))
    three = scenario_from_dict(base(onts=[{"id": 1}, {"id": 2}, {"id": 3}],
                                    traffic={"default": {"model": "poisson",
                                                         "rate_cells_per_s": 1000}}))
    for ont_id in (1, 2):
        a = traffic_stream(two, ont_id).until(10**9)
        b = traffic_stream(three, ont_id).until(10**9)
        assert a == b
    assert traffic_stream(two, 1).until(10**9) != traffic_stream(two, 2).until(10**9)


def test_stream_chunks_join_seamlessly():
    s = generate_traffic("poisson", 1e6, np.random.default_rng(5))
    pieces = []
    for t in range(0, 155_520_000 // 20, 3001):
        pieces.extend(s.until(t))
    whole = generate_traffic("poisson", 1e6, np.random.default_rng(5)).until(pieces[-1])
    assert pieces == whole
    assert pieces == sorted(pieces)


def test_video_overlay_reaches_every_ont():
    s = scenario_from_dict(base(stage="VIDEO_OVERLAY",
                                onts={"count": 8, "fiber_m": 1000, "spacing_m": 2000}))
    topo = build_topology(s)
    assert topo.video_transmitter_nm == 1555.0
    assert topo.video_receivers() == 8


def test_video_fails_when_power_budget_does_not_close():
    s = scenario_from_dict(base(stage="VIDEO_OVERLAY", plant={
        "splitter": {"ports": 32}, "video": {"launch_dbm": 0}}))
    assert build_topology(s).video_receivers() == 0


def test_coexistence_gives_wdm_onts_dedicated_channels():
    s = scenario_from_dict(base(stage="COEXISTENCE",
                                onts=[{"id": 1}, {"id": 2, "kind": "wdm"},
                                      {"id": 3, "kind": "wdm"}]))
    topo = build_topology(s)
    assert topo.dwdm_filters
    chans = [n.wdm.wavelength_nm for n in topo.wdm_nodes()]
    assert chans == [1540.0, 1540.8]
    assert topo.links_up() == 2
    assert topo.node(1).wdm is None


def test_full_wdm_routes_each_channel_to_its_own_port():
    s = scenario_from_dict(base(stage="FULL_WDM", plant={"awg": {"ports": 8}},
                                onts={"count": 8, "kind": "wdm", "fiber_m": 1000}))
    topo = build_topology(s)
    assert not topo.dwdm_filters
    ports = [n.wdm.port for n in topo.wdm_nodes()]
    assert sorted(ports) == list(range(8))
    for n in topo.wdm_nodes():
        assert route_wavelength(topo.device, 0, n.wdm.wavelength_nm) == {n.wdm.port}
    assert isinstance(topo.device, Awg)


def test_out_of_reach_ont_aborts_run():
    from ponsim import RangingError
    s = scenario_from_dict(base(onts=[{"id": 7, "fiber_m": 20_500}]))
    with pytest.raises(RangingError) as info:
        run(s)
    assert info.value.ont_id == 7


def test_stage_enum_values():
    assert [st.value for st in Stage] == ["TDM_BASELINE", "VIDEO_OVERLAY",
                                          "COEXISTENCE", "FULL_WDM"]
