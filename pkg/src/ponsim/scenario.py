"""
Scenario documents, topology construction for the four migration stages,
and traffic sources.

Stages:

* ``TDM_BASELINE``  OLT, power splitter, TDM ONTs.
* ``VIDEO_OVERLAY`` adds a broadcast video wavelength in the enhancement
  band and a CWDM2 filter at every ONT.
* ``COEXISTENCE``   WDM ONTs share the splitter; each owns a DWDM channel
  used as a point-to-point link outside the TDM MAC.
* ``FULL_WDM``      the splitter becomes an AWG; every ONT is WDM and sees
  only its own channel, as long as the AWG stays aligned.
"""

from __future__ import annotations

import enum
import json
from bisect import bisect_right
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Any, Optional

import numpy as np

from . import phy
from .core import LINE_RATE_HZ, exact, round_half_up, stream_rng
from .olt import DESIGN_REACH_M, MAX_ONTS
from .phy import (Awg, CwdmStage, DwdmGrid, FiberAttenuation, OpticalPath, PlantError,
                  ReceiverConfig, Splitter, WavelengthPlan)

UPSTREAM_NM = 1310.0


class ScenarioError(ValueError):
    """Schema or consistency violation; ``errors`` holds one line per problem."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Stage(enum.Enum):
    TDM_BASELINE = "TDM_BASELINE"
    VIDEO_OVERLAY = "VIDEO_OVERLAY"
    COEXISTENCE = "COEXISTENCE"
    FULL_WDM = "FULL_WDM"


@dataclass(frozen=True)
class VideoConfig:
    launch_dbm: float = 17.0
    sensitivity_dbm: float = -10.0


@dataclass(frozen=True)
class DwdmConfig:
    rate_bps: float = 1e9
    launch_dbm: float = 0.0
    sensitivity_dbm: float = -28.0
    filter_loss_db: float = 1.0


@dataclass(frozen=True)
class PlantConfig:
    feeder_m: float = 0.0
    splitter: Optional[Splitter] = None
    awg: Optional[Awg] = None
    connector_loss_db: float = 1.0
    reach_m: float = DESIGN_REACH_M
    ns_per_m: float = phy.DEFAULT_NS_PER_M
    attenuation: FiberAttenuation = field(default_factory=FiberAttenuation)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    ont_launch_dbm: float = 2.0
    ploam_poll_frames: int = 10
    queue_capacity: int = 1024
    cwdm_loss_db: float = 0.5
    video: VideoConfig = field(default_factory=VideoConfig)
    dwdm: DwdmConfig = field(default_factory=DwdmConfig)
    ambient_c: Optional[float] = None

    @property
    def device(self):
        return self.awg if self.awg is not None else self.splitter


@dataclass(frozen=True)
class OntSpec:
    id: int
    fiber_m: float = 0.0
    weight: int = 1
    kind: str = "tdm"
    max_grants: Optional[int] = None
    launch_dbm: Optional[float] = None


@dataclass(frozen=True)
class TrafficSpec:
    model: str = "poisson"
    rate_cells_per_s: float = 1000.0
    seed: Optional[int] = None


@dataclass(frozen=True)
class Scenario:
    stage: Stage
    plant: PlantConfig
    onts: tuple
    traffic: dict
    wavelength_plan: WavelengthPlan
    duration_s: float
    seed: int
    temperature_profile: tuple = ()

    def ont_spec(self, ont_id: int) -> OntSpec:
        for o in self.onts:
            if o.id == ont_id:
                return o
        raise KeyError(ont_id)

    def traffic_for(self, ont_id: int) -> Optional[TrafficSpec]:
        return self.traffic.get(ont_id, self.traffic.get("default"))

    def tdm_onts(self) -> list:
        return [o for o in self.onts if o.kind == "tdm"]

    def wdm_onts(self) -> list:
        return [o for o in self.onts if o.kind == "wdm"]

    def to_dict(self) -> dict:
        """Normalized document with every default filled in."""
        p = self.plant
        plant = {
            "feeder_m": p.feeder_m,
            "connector_loss_db": p.connector_loss_db,
            "reach_m": p.reach_m,
            "ns_per_m": p.ns_per_m,
            "attenuation_db_per_km": {
                "band_1300": p.attenuation.band_1300_db_per_km,
                "band_1500": p.attenuation.band_1500_db_per_km,
            },
            "receiver": _plain(p.receiver),
            "ont_launch_dbm": p.ont_launch_dbm,
            "ploam_poll_frames": p.ploam_poll_frames,
            "queue_capacity": p.queue_capacity,
            "cwdm_loss_db": p.cwdm_loss_db,
            "video": _plain(p.video),
            "dwdm": _plain(p.dwdm),
            "ambient_c": p.ambient_c,
        }
        if p.splitter is not None:
            plant["splitter"] = _plain(p.splitter)
        if p.awg is not None:
            plant["awg"] = _plain(p.awg)
        traffic = {}
        for key in sorted(self.traffic, key=lambda k: (k != "default", str(k))):
            traffic[str(key)] = _plain(self.traffic[key])
        wp = self.wavelength_plan
        return {
            "stage": self.stage.value,
            "plant": plant,
            "onts": [_plain(o) for o in self.onts],
            "traffic": traffic,
            "wavelength_plan": {
                "upstream_band": list(wp.upstream_band),
                "downstream_basic_band": list(wp.downstream_basic_band),
                "enhancement_band": list(wp.enhancement_band),
                "video_wavelength_nm": wp.video_wavelength_nm,
                "dwdm_grid": _plain(wp.dwdm_grid),
            },
            "duration_s": self.duration_s,
            "seed": self.seed,
            "temperature_profile": [list(x) for x in self.temperature_profile],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _plain(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


# Loading

TOP_KEYS = ("stage", "plant", "onts", "traffic", "wavelength_plan",
            "duration_s", "seed", "temperature_profile")


class _Checker:
    """Collects schema problems with dotted field paths."""

    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def obj(self, value, path: str, allowed) -> dict:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail(path, "expected an object")
            return {}
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")
        return value

    def number(self, d: dict, key: str, path: str, default, *, minimum=None,
               exclusive_min=False, maximum=None, integer=False, optional=False):
        full = f"{path}.{key}" if path else key
        if key not in d or d[key] is None:
            if default is None and not optional:
                self.fail(full, "required field is missing")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(full, f"expected a number, got {type(v).__name__}")
            return default
        if integer and not (isinstance(v, int) or float(v).is_integer()):
            self.fail(full, "expected an integer")
            return default
        if integer:
            v = int(v)
        if minimum is not None and (v <= minimum if exclusive_min else v < minimum):
            self.fail(full, f"must be {'>' if exclusive_min else '>='} {minimum}")
        if maximum is not None and v > maximum:
            self.fail(full, f"must be <= {maximum}")
        return v


def _device(c: _Checker, raw: dict, path: str, kind: str):
    if kind == "splitter":
        d = c.obj(raw, path, ("ports", "excess_loss_db"))
        ports = c.number(d, "ports", path, 32, integer=True)
        if ports not in phy.SPLITTER_PORTS:
            c.fail(f"{path}.ports", f"must be one of {phy.SPLITTER_PORTS}")
            ports = 32
        return Splitter(ports, c.number(d, "excess_loss_db", path, 1.0, minimum=0))
    names = [f.name for f in fields(Awg)]
    d = c.obj(raw, path, names)
    ports = c.number(d, "ports", path, 16, integer=True)
    if ports not in phy.SPLITTER_PORTS:
        c.fail(f"{path}.ports", f"must be one of {phy.SPLITTER_PORTS}")
        ports = 16
    try:
        return Awg(
            ports=ports,
            channel_spacing_nm=c.number(d, "channel_spacing_nm", path, 0.8,
                                        minimum=0, exclusive_min=True),
            insertion_loss_db=c.number(d, "insertion_loss_db", path, 5.0, minimum=0),
            temp_coefficient_nm_per_c=c.number(d, "temp_coefficient_nm_per_c", path, 0.011),
            reference_temp_c=c.number(d, "reference_temp_c", path, 25.0),
            guard_nm=c.number(d, "guard_nm", path, 0.1, minimum=0),
        )
    except PlantError as e:
        c.fail(path, str(e))
        return Awg()


def _sub(c: _Checker, cls, raw, path: str, **bounds):
    names = [f.name for f in fields(cls)]
    d = c.obj(raw, path, names)
    kw = {}
    for f in fields(cls):
        kw[f.name] = c.number(d, f.name, path, f.default, **bounds.get(f.name, {}))
    return cls(**kw)


def _plant(c: _Checker, raw, stage: Stage) -> PlantConfig:
    path = "plant"
    d = c.obj(raw, path, ("feeder_m", "splitter", "awg", "connector_loss_db", "reach_m",
                          "ns_per_m", "attenuation_db_per_km", "receiver", "ont_launch_dbm",
                          "ploam_poll_frames", "queue_capacity", "cwdm_loss_db", "video",
                          "dwdm", "ambient_c"))
    splitter = awg = None
    if "splitter" in d and "awg" in d:
        c.fail(path, "give either a splitter or an awg, not both")
    if "splitter" in d:
        splitter = _device(c, d["splitter"], f"{path}.splitter", "splitter")
    elif "awg" in d:
        awg = _device(c, d["awg"], f"{path}.awg", "awg")
    elif stage is Stage.FULL_WDM:
        awg = Awg()
    else:
        splitter = Splitter()
    att = c.obj(d.get("attenuation_db_per_km"), f"{path}.attenuation_db_per_km",
                ("band_1300", "band_1500"))
    attenuation = FiberAttenuation(
        c.number(att, "band_1300", f"{path}.attenuation_db_per_km", 0.35, minimum=0),
        c.number(att, "band_1500", f"{path}.attenuation_db_per_km", 0.25, minimum=0))
    receiver = _sub(c, ReceiverConfig, d.get("receiver"), f"{path}.receiver",
                    reset_ticks={"minimum": 0}, reset_ticks_per_db={"minimum": 0},
                    overhead_ticks={"integer": True, "minimum": 0})
    if receiver.sensitivity_dbm >= receiver.overload_dbm:
        c.fail(f"{path}.receiver", "sensitivity_dbm must be below overload_dbm")
    video = _sub(c, VideoConfig, d.get("video"), f"{path}.video")
    dwdm = _sub(c, DwdmConfig, d.get("dwdm"), f"{path}.dwdm",
                rate_bps={"minimum": 0, "exclusive_min": True},
                filter_loss_db={"minimum": 0})
    return PlantConfig(
        feeder_m=c.number(d, "feeder_m", path, 0.0, minimum=0),
        splitter=splitter,
        awg=awg,
        connector_loss_db=c.number(d, "connector_loss_db", path, 1.0, minimum=0),
        reach_m=c.number(d, "reach_m", path, DESIGN_REACH_M, minimum=0, exclusive_min=True),
        ns_per_m=c.number(d, "ns_per_m", path, phy.DEFAULT_NS_PER_M,
                          minimum=0, exclusive_min=True),
        attenuation=attenuation,
        receiver=receiver,
        ont_launch_dbm=c.number(d, "ont_launch_dbm", path, 2.0),
        ploam_poll_frames=c.number(d, "ploam_poll_frames", path, 10, minimum=0, integer=True),
        queue_capacity=c.number(d, "queue_capacity", path, 1024, minimum=1, integer=True),
        cwdm_loss_db=c.number(d, "cwdm_loss_db", path, 0.5, minimum=0),
        video=video,
        dwdm=dwdm,
        ambient_c=c.number(d, "ambient_c", path, None, optional=True),
    )


_ONT_KEYS = ("id", "fiber_m", "weight", "kind", "max_grants", "launch_dbm")
_TEMPLATE_KEYS = ("count", "first_id", "fiber_m", "spacing_m", "weight", "kind", "max_grants")


def _onts(c: _Checker, raw) -> tuple:
    if raw is None:
        c.fail("onts", "required field is missing")
        return ()
    if isinstance(raw, dict):
        # template form: {"count": n, "fiber_m": x, "spacing_m": dx, ...}
        d = c.obj(raw, "onts", _TEMPLATE_KEYS)
        count = c.number(d, "count", "onts", None, minimum=1, integer=True)
        if count is None:
            return ()
        first = c.number(d, "first_id", "onts", 1, minimum=1, integer=True)
        fiber = c.number(d, "fiber_m", "onts", 0.0, minimum=0)
        spacing = c.number(d, "spacing_m", "onts", 0.0)
        raw = [{k: v for k, v in
                (("id", first + i), ("fiber_m", fiber + i * spacing),
                 ("weight", d.get("weight", 1)), ("kind", d.get("kind", "tdm")),
                 ("max_grants", d.get("max_grants")))
                if v is not None}
               for i in range(count)]
    if not isinstance(raw, list) or not raw:
        c.fail("onts", "expected a non-empty list of ONTs")
        return ()
    out, seen = [], set()
    for i, item in enumerate(raw):
        path = f"onts[{i}]"
        d = c.obj(item, path, _ONT_KEYS)
        ont_id = c.number(d, "id", path, None, minimum=1, maximum=254, integer=True)
        if ont_id is not None:
            if ont_id in seen:
                c.fail(f"{path}.id", f"duplicate ONT id {ont_id}")
            seen.add(ont_id)
        kind = d.get("kind", "tdm")
        if kind not in ("tdm", "wdm"):
            c.fail(f"{path}.kind", f"must be 'tdm' or 'wdm', got {kind!r}")
            kind = "tdm"
        out.append(OntSpec(
            id=ont_id if ont_id is not None else -1,
            fiber_m=c.number(d, "fiber_m", path, 0.0, minimum=0),
            weight=c.number(d, "weight", path, 1, minimum=1, integer=True),
            kind=kind,
            max_grants=c.number(d, "max_grants", path, None, minimum=0, maximum=53,
                                integer=True, optional=True),
            launch_dbm=c.number(d, "launch_dbm", path, None, optional=True),
        ))
    return tuple(out)


def _traffic(c: _Checker, raw, onts) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        c.fail("traffic", "expected an object keyed by ONT id or 'default'")
        return {}
    ids = {o.id for o in onts}
    out = {}
    for key, item in raw.items():
        path = f"traffic.{key}"
        if key == "default":
            k = "default"
        else:
            try:
                k = int(key)
            except ValueError:
                c.fail(path, "key must be an ONT id or 'default'")
                continue
            if k not in ids:
                c.fail(path, f"no ONT with id {k}")
        d = c.obj(item, path, ("model", "rate_cells_per_s", "seed"))
        model = d.get("model", "poisson")
        if model not in ("cbr", "poisson"):
            c.fail(f"{path}.model", f"must be 'cbr' or 'poisson', got {model!r}")
        rate = c.number(d, "rate_cells_per_s", path, None, minimum=0, exclusive_min=True)
        seed = c.number(d, "seed", path, None, minimum=0, integer=True, optional=True)
        out[k] = TrafficSpec(model, rate if rate is not None else 1.0, seed)
    return out


def _wavelength_plan(c: _Checker, raw) -> WavelengthPlan:
    path = "wavelength_plan"
    d = c.obj(raw, path, ("upstream_band", "downstream_basic_band", "enhancement_band",
                          "video_wavelength_nm", "dwdm_grid"))
    default = WavelengthPlan()

    def band(key):
        v = d.get(key, getattr(default, key))
        if (not isinstance(v, (list, tuple)) or len(v) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            c.fail(f"{path}.{key}", "expected [low_nm, high_nm]")
            return getattr(default, key)
        return (float(v[0]), float(v[1]))

    grid = _sub(c, DwdmGrid, d.get("dwdm_grid"), f"{path}.dwdm_grid",
                count={"integer": True, "minimum": 1},
                spacing_nm={"minimum": 0, "exclusive_min": True})
    plan = WavelengthPlan(
        upstream_band=band("upstream_band"),
        downstream_basic_band=band("downstream_basic_band"),
        enhancement_band=band("enhancement_band"),
        video_wavelength_nm=c.number(d, "video_wavelength_nm", path, 1555.0),
        dwdm_grid=grid,
    )
    try:
        plan.validate()
    except PlantError as e:
        c.fail(path, str(e))
    return plan


def _temperature_profile(c: _Checker, raw) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        c.fail("temperature_profile", "expected a list of [time_s, celsius] pairs")
        return ()
    out, last = [], -1.0
    for i, item in enumerate(raw):
        path = f"temperature_profile[{i}]"
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)):
            c.fail(path, "expected [time_s, celsius]")
            continue
        t, temp = item
        if t < 0 or t < last:
            c.fail(path, "times must be >= 0 and non-decreasing")
        last = t
        out.append((t, temp))
    return tuple(out)


def _check_stage(c: _Checker, s: Scenario) -> None:
    stage, p = s.stage, s.plant
    tdm, wdm = s.tdm_onts(), s.wdm_onts()
    if stage in (Stage.TDM_BASELINE, Stage.VIDEO_OVERLAY):
        if p.splitter is None:
            c.fail("plant", f"{stage.value} requires a splitter plant")
        if wdm:
            c.fail("onts", f"{stage.value} allows only tdm ONTs")
    elif stage is Stage.COEXISTENCE:
        if p.splitter is None:
            c.fail("plant", "COEXISTENCE requires a splitter plant")
        if not tdm or not wdm:
            c.fail("onts", "COEXISTENCE needs at least one tdm and one wdm ONT")
    elif stage is Stage.FULL_WDM:
        if p.awg is None:
            c.fail("plant", "FULL_WDM requires an awg plant, not a splitter")
        if tdm:
            c.fail("onts", "FULL_WDM requires every ONT to be wdm")
    device = p.device
    if device is not None and len(s.onts) > device.ports:
        c.fail("onts", f"{len(s.onts)} ONTs exceed the {device.ports} device ports")
    if len(tdm) > MAX_ONTS:
        c.fail("onts", f"at most {MAX_ONTS} tdm ONTs per PON")
    if len(wdm) > s.wavelength_plan.dwdm_grid.count:
        c.fail("onts", f"{len(wdm)} wdm ONTs exceed the {s.wavelength_plan.dwdm_grid.count} "
                       "DWDM channels")
    if p.awg is not None and exact(p.awg.channel_spacing_nm) != exact(
            s.wavelength_plan.dwdm_grid.spacing_nm):
        c.fail("plant.awg.channel_spacing_nm", "must equal wavelength_plan.dwdm_grid.spacing_nm")
    if s.temperature_profile and p.awg is None:
        c.fail("temperature_profile", "only meaningful with an awg plant")


def scenario_from_dict(doc: Any) -> Scenario:
    c = _Checker()
    if not isinstance(doc, dict):
        raise ScenarioError(["document: expected a JSON object"])
    c.obj(doc, "", TOP_KEYS)
    stage = None
    if "stage" not in doc:
        c.fail("stage", "required field is missing")
    else:
        try:
            stage = Stage(str(doc["stage"]).upper())
        except ValueError:
            c.fail("stage", f"unknown stage {doc['stage']!r}; expected one of "
                            + ", ".join(x.value for x in Stage))
    plant = _plant(c, doc.get("plant"), stage or Stage.TDM_BASELINE)
    onts = _onts(c, doc.get("onts"))
    traffic = _traffic(c, doc.get("traffic"), onts)
    plan = _wavelength_plan(c, doc.get("wavelength_plan"))
    duration = c.number(doc, "duration_s", "", 1.0, minimum=0, exclusive_min=True)
    seed = c.number(doc, "seed", "", 0, minimum=0, integer=True)
    profile = _temperature_profile(c, doc.get("temperature_profile"))
    if c.errors or stage is None:
        raise ScenarioError(c.errors)
    s = Scenario(stage, plant, onts, traffic, plan, duration, seed, profile)
    _check_stage(c, s)
    if c.errors:
        raise ScenarioError(c.errors)
    return s


def load_scenario(text: str) -> Scenario:
    """Parse and validate a JSON scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError([f"document: invalid JSON ({e})"]) from None
    return scenario_from_dict(doc)


def with_seed(s: Scenario, seed: int) -> Scenario:
    return replace(s, seed=seed)


# Topology

@dataclass
class VideoLink:
    wavelength_nm: float
    received_dbm: float
    received: bool


@dataclass
class WdmLink:
    channel: int
    wavelength_nm: float
    port: int
    received_dbm: float
    power_ok: bool
    up: bool = True


@dataclass
class OntNode:
    spec: OntSpec
    path: OpticalPath
    one_way_ticks: int
    upstream_dbm: float
    video: Optional[VideoLink] = None
    wdm: Optional[WdmLink] = None

    @property
    def id(self) -> int:
        return self.spec.id


@dataclass
class Topology:
    stage: Stage
    device: Any
    plan: WavelengthPlan
    nodes: list
    video_transmitter_nm: Optional[float] = None
    temperature_c: Optional[float] = None
    dwdm_filters: bool = False

    def node(self, ont_id: int) -> OntNode:
        for n in self.nodes:
            if n.id == ont_id:
                return n
        raise KeyError(ont_id)

    def tdm_nodes(self) -> list:
        return [n for n in self.nodes if n.spec.kind == "tdm"]

    def wdm_nodes(self) -> list:
        return [n for n in self.nodes if n.spec.kind == "wdm"]

    def video_receivers(self) -> int:
        return sum(1 for n in self.nodes if n.video is not None and n.video.received)

    def links_up(self) -> int:
        return sum(1 for n in self.nodes if n.wdm is not None and n.wdm.up)

    def set_temperature(self, celsius) -> int:
        """Re-route every DWDM channel at a new AWG temperature; returns links up."""
        self.temperature_c = celsius
        for n in self.wdm_nodes():
            w = n.wdm
            if isinstance(self.device, Awg):
                ports = phy.route_wavelength(self.device, 0, w.wavelength_nm, celsius, self.plan)
                w.up = w.power_ok and ports == {w.port}
            else:
                w.up = w.power_ok
        return self.links_up()


def build_topology(s: Scenario) -> Topology:
    p, plan = s.plant, s.wavelength_plan
    device = p.device
    stage = s.stage
    nodes = []
    wdm_index = 0
    for spec in s.onts:
        segments = (p.feeder_m, spec.fiber_m)
        path = OpticalPath(segments, device, p.connector_loss_db)
        launch = p.ont_launch_dbm if spec.launch_dbm is None else spec.launch_dbm
        node = OntNode(
            spec, path, phy.propagation_ticks(path.length_m, p.ns_per_m),
            launch - phy.path_loss_db(path, UPSTREAM_NM, plan, p.attenuation))
        if stage is Stage.VIDEO_OVERLAY:
            # CWDM1 takes the 1500 nm branch, CWDM2 the enhancement band
            vnm = plan.video_wavelength_nm
            assert phy.cwdm_filter(CwdmStage.CWDM1, vnm, plan) == "downstream"
            assert phy.cwdm_filter(CwdmStage.CWDM2, vnm, plan) == "enhancement"
            vpath = replace(path, filter_loss_db=2 * p.cwdm_loss_db)
            rx = p.video.launch_dbm - phy.path_loss_db(vpath, vnm, plan, p.attenuation)
            node.video = VideoLink(vnm, rx, rx >= p.video.sensitivity_dbm)
        if spec.kind == "wdm":
            nm = plan.dwdm_grid.channel_nm(wdm_index)
            if isinstance(device, Awg):
                wpath = path
                port = wdm_index % device.ports
            else:
                wpath = replace(path, filter_loss_db=p.cwdm_loss_db + p.dwdm.filter_loss_db)
                port = wdm_index
            rx = p.dwdm.launch_dbm - phy.path_loss_db(wpath, nm, plan, p.attenuation)
            node.wdm = WdmLink(wdm_index, nm, port, rx, rx >= p.dwdm.sensitivity_dbm)
            wdm_index += 1
        nodes.append(node)
    topo = Topology(stage, device, plan, nodes,
                    video_transmitter_nm=(plan.video_wavelength_nm
                                          if stage is Stage.VIDEO_OVERLAY else None),
                    dwdm_filters=stage is Stage.COEXISTENCE)
    if isinstance(device, Awg):
        ambient = p.ambient_c if p.ambient_c is not None else device.reference_temp_c
        topo.set_temperature(ambient)
    else:
        topo.set_temperature(None)
    return topo


# Traffic

class ArrivalStream:
    """
    Lazily generated arrival ticks for one source.

    ``until(t)`` hands out, in order, every arrival at or before ``t`` not
    handed out yet.  Arrivals are produced in numpy chunks.
    """

    CHUNK = 4096

    def __init__(self, model: str, rate_cells_per_s, rng: Optional[np.random.Generator] = None):
        if rate_cells_per_s <= 0:
            raise ScenarioError(f"traffic rate must be > 0, got {rate_cells_per_s}")
        if model not in ("cbr", "poisson"):
            raise ScenarioError(f"unknown traffic model {model!r}")
        if model == "poisson" and rng is None:
            raise ScenarioError("poisson traffic needs a random stream")
        self.model = model
        self.rate = rate_cells_per_s
        self.rng = rng
        self._spacing = Fraction(LINE_RATE_HZ) / exact(rate_cells_per_s)
        self._n = 0                 # CBR arrivals generated so far
        self._clock = 0.0           # Poisson: un-rounded time of last arrival
        self._buf: list[int] = []
        self._pos = 0
        self.emitted = 0
        self._refill()
        self.next_time: int = self._buf[0]

    def _refill(self) -> None:
        if self.model == "cbr":
            p, q = self._spacing.numerator, self._spacing.denominator
            n = np.arange(self._n + 1, self._n + 1 + self.CHUNK, dtype=np.int64)
            if 2 * (self._n + self.CHUNK) * p + q < 2**62:
                ticks = (2 * n * p + q) // (2 * q)
                chunk = ticks.tolist()
            else:
                chunk = [round_half_up(int(k) * self._spacing) for k in n]
            self._n += self.CHUNK
        else:
            gaps = self.rng.exponential(float(self._spacing), self.CHUNK)
            times = self._clock + np.cumsum(gaps)
            self._clock = float(times[-1])
            chunk = np.floor(times + 0.5).astype(np.int64).tolist()
        self._buf = self._buf[self._pos:] + chunk
        self._pos = 0

    def peek(self) -> int:
        """Time of the next arrival not yet handed out."""
        if self._pos >= len(self._buf):
            self._refill()
        return self._buf[self._pos]

    def until(self, t: int) -> list:
        """Every arrival at or before ``t`` not handed out yet; updates :attr:`next_time`."""
        buf = self._buf
        end = bisect_right(buf, t, self._pos)
        if end < len(buf):
            out = buf[self._pos:end]
            self._pos = end
            self.next_time = buf[end]
            self.emitted += len(out)
            return out
        out = []
        while True:
            buf = self._buf
            end = bisect_right(buf, t, self._pos)
            if end < len(buf):
                out.extend(buf[self._pos:end])
                self._pos = end
                self.next_time = buf[end]
                break
            out.extend(buf[self._pos:])
            self._pos = len(buf)
            self._refill()
        self.emitted += len(out)
        return out

    def __iter__(self):
        while True:
            if self._pos >= len(self._buf):
                self._refill()
            v = self._buf[self._pos]
            self._pos += 1
            self.emitted += 1
            yield v


def generate_traffic(model: str, rate_cells_per_s, rng: Optional[np.random.Generator] = None
                     ) -> ArrivalStream:
    """CBR arrivals at exact 1/rate spacing, or Poisson from ``rng``."""
    return ArrivalStream(model, rate_cells_per_s, rng)


def traffic_stream(s: Scenario, ont_id: int) -> Optional[ArrivalStream]:
    spec = s.traffic_for(ont_id)
    if spec is None:
        return None
    seed = spec.seed if spec.seed is not None else s.seed
    return generate_traffic(spec.model, spec.rate_cells_per_s, stream_rng(seed, ont_id))


def run(s: Scenario, **options):
    from .simulation import run as _run
    return _run(s, **options)
