"""
Optical plant: propagation, loss, wavelength filtering and routing, and
burst-mode reception at the OSU.

Reception is modeled per burst, not per bit.  A burst is lost when it
overlaps another burst, when its received power falls outside the
receiver's dynamic range, or when the decision-threshold reset cannot
finish inside the 24-bit-time slot overhead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from operator import attrgetter
from typing import Optional, Sequence, Union

from .core import LINE_RATE_HZ, OVERHEAD_TICKS, SLOT_TICKS, exact, round_half_up
from .frames import UpstreamSlotPayload

DEFAULT_NS_PER_M = 5
SPLITTER_PORTS = (2, 4, 8, 16, 32)


class PlantError(ValueError):
    """Invalid optical configuration or an out-of-plan wavelength."""


def propagation_ticks(length_m, ns_per_m=DEFAULT_NS_PER_M) -> int:
    """One-way fiber delay in bit-times, rounded half-up."""
    if length_m < 0:
        raise PlantError(f"negative fiber length {length_m}")
    ticks = exact(length_m) * exact(ns_per_m) * Fraction(LINE_RATE_HZ, 10**9)
    return round_half_up(ticks)


# Wavelength plan

@dataclass(frozen=True)
class DwdmGrid:
    start_nm: float = 1540.0
    spacing_nm: float = 0.8
    count: int = 16

    def channel_nm(self, index: int) -> float:
        return float(exact(self.start_nm) + index * exact(self.spacing_nm))

    def channels(self) -> list[float]:
        return [self.channel_nm(i) for i in range(self.count)]

    def channel_index(self, wavelength_nm) -> Optional[int]:
        """Grid index of ``wavelength_nm``, or None when it is off-grid."""
        offset = (exact(wavelength_nm) - exact(self.start_nm)) / exact(self.spacing_nm)
        if offset.denominator != 1 or not 0 <= offset < self.count:
            return None
        return int(offset)

    @property
    def last_nm(self) -> float:
        return self.channel_nm(self.count - 1)


@dataclass(frozen=True)
class WavelengthPlan:
    upstream_band: tuple = (1260.0, 1360.0)
    downstream_basic_band: tuple = (1480.0, 1500.0)
    enhancement_band: tuple = (1539.0, 1565.0)
    video_wavelength_nm: float = 1555.0
    dwdm_grid: DwdmGrid = field(default_factory=DwdmGrid)

    def bands(self) -> dict:
        return {
            "upstream": self.upstream_band,
            "basic": self.downstream_basic_band,
            "enhancement": self.enhancement_band,
        }

    def validate(self) -> None:
        items = list(self.bands().items())
        for name, (lo, hi) in items:
            if not lo < hi:
                raise PlantError(f"{name} band [{lo}, {hi}] is empty")
        for i, (n1, (lo1, hi1)) in enumerate(items):
            for n2, (lo2, hi2) in items[i + 1:]:
                if lo1 <= hi2 and lo2 <= hi1:
                    raise PlantError(f"{n1} and {n2} bands overlap")
        lo, hi = self.enhancement_band
        g = self.dwdm_grid
        if g.count < 1 or g.spacing_nm <= 0:
            raise PlantError("DWDM grid needs a positive count and spacing")
        if not (lo <= g.start_nm and g.last_nm <= hi):
            raise PlantError(
                f"DWDM grid {g.start_nm}..{g.last_nm} nm leaves the enhancement band")
        if not lo <= self.video_wavelength_nm <= hi:
            raise PlantError(
                f"video wavelength {self.video_wavelength_nm} nm is outside the enhancement band")

    def band_of(self, wavelength_nm) -> str:
        for name, (lo, hi) in self.bands().items():
            if lo <= wavelength_nm <= hi:
                return name
        raise PlantError(f"{wavelength_nm} nm lies in no band of the plan")


class CwdmStage(enum.Enum):
    CWDM1 = "CWDM1"
    CWDM2 = "CWDM2"


def cwdm_filter(stage: CwdmStage, wavelength_nm, plan: WavelengthPlan = WavelengthPlan()) -> str:
    """
    CWDM1 splits 1300 nm from 1500 nm; CWDM2 splits basic from enhancement.

    Returns ``"upstream"``/``"downstream"`` for CWDM1 and
    ``"basic"``/``"enhancement"`` for CWDM2.
    """
    band = plan.band_of(wavelength_nm)
    stage = CwdmStage(stage)
    if stage is CwdmStage.CWDM1:
        return "upstream" if band == "upstream" else "downstream"
    if band == "upstream":
        raise PlantError(f"{wavelength_nm} nm never reaches CWDM2 (1300 nm band)")
    return band


# Passive devices and paths

@dataclass(frozen=True)
class Splitter:
    ports: int = 32
    excess_loss_db: float = 1.0

    def __post_init__(self):
        if self.ports not in SPLITTER_PORTS:
            raise PlantError(f"splitter ports {self.ports} not in {SPLITTER_PORTS}")
        if self.excess_loss_db < 0:
            raise PlantError("splitter excess loss must be >= 0")

    def loss_db(self) -> float:
        return 10 * math.log10(self.ports) + self.excess_loss_db


@dataclass(frozen=True)
class Awg:
    ports: int = 16
    channel_spacing_nm: float = 0.8
    insertion_loss_db: float = 5.0
    temp_coefficient_nm_per_c: float = 0.011
    reference_temp_c: float = 25.0
    guard_nm: float = 0.1

    def __post_init__(self):
        if self.ports not in SPLITTER_PORTS:
            raise PlantError(f"AWG ports {self.ports} not in {SPLITTER_PORTS}")
        if self.channel_spacing_nm <= 0 or self.guard_nm < 0:
            raise PlantError("AWG spacing must be > 0 and guard >= 0")

    def drift_nm(self, temperature_c) -> Fraction:
        return exact(self.temp_coefficient_nm_per_c) * (
            exact(temperature_c) - exact(self.reference_temp_c))

    def tolerance_nm(self) -> Fraction:
        return exact(self.channel_spacing_nm) / 2 - exact(self.guard_nm)

    def aligned(self, temperature_c) -> bool:
        """Passbands still cover the grid: |drift| < spacing/2 - guard."""
        return abs(self.drift_nm(temperature_c)) < self.tolerance_nm()

    def threshold_temperatures(self) -> tuple[Fraction, Fraction]:
        """Temperatures at which |drift| reaches the tolerance (exact)."""
        coef = exact(self.temp_coefficient_nm_per_c)
        if coef == 0:
            raise PlantError("zero temperature coefficient never drifts")
        span = self.tolerance_nm() / abs(coef)
        ref = exact(self.reference_temp_c)
        return (ref - span, ref + span)


Device = Union[Splitter, Awg]


@dataclass(frozen=True)
class FiberAttenuation:
    band_1300_db_per_km: float = 0.35
    band_1500_db_per_km: float = 0.25

    def db_per_km(self, band: str) -> float:
        return self.band_1300_db_per_km if band == "upstream" else self.band_1500_db_per_km


@dataclass(frozen=True)
class OpticalPath:
    """OLT-to-ONT path: fiber segments around one passive device."""

    segments_m: tuple = ()
    device: Optional[Device] = None
    connector_loss_db: float = 0.0
    filter_loss_db: float = 0.0

    def __post_init__(self):
        if any(s < 0 for s in self.segments_m):
            raise PlantError("fiber segment lengths must be >= 0")

    @property
    def length_m(self) -> float:
        return sum(self.segments_m)


def path_loss_db(path: OpticalPath, wavelength_nm,
                 plan: WavelengthPlan = WavelengthPlan(),
                 attenuation: FiberAttenuation = FiberAttenuation()) -> float:
    band = plan.band_of(wavelength_nm)
    loss = attenuation.db_per_km(band) * path.length_m / 1000.0
    if isinstance(path.device, Splitter):
        loss += path.device.loss_db()
    elif isinstance(path.device, Awg):
        loss += path.device.insertion_loss_db
    return loss + path.connector_loss_db + path.filter_loss_db


def route_wavelength(device: Device, input_port: int, wavelength_nm,
                     temperature_c=None, plan: WavelengthPlan = WavelengthPlan()) -> frozenset:
    """
    Output ports reached by ``wavelength_nm`` entering ``input_port``.

    A splitter broadcasts to every port.  An AWG sends grid channel ``i`` to
    port ``(i + input_port) mod N`` while its passbands stay aligned, and
    nowhere once temperature drift eats the guard band.
    """
    if isinstance(device, Splitter):
        plan.band_of(wavelength_nm)
        return frozenset(range(device.ports))
    channel = plan.dwdm_grid.channel_index(wavelength_nm)
    if channel is None:
        return frozenset()
    if temperature_c is None:
        temperature_c = device.reference_temp_c
    if not device.aligned(temperature_c):
        return frozenset()
    return frozenset({(channel + input_port) % device.ports})


# Burst-mode reception

class ReceptionKind(enum.Enum):
    OK = "ok"
    COLLISION = "collision"
    POWER_TOO_LOW = "power_too_low"
    POWER_TOO_HIGH = "power_too_high"
    INSUFFICIENT_PREAMBLE = "insufficient_preamble"
    SILENCE = "silence"


@dataclass(frozen=True)
class ReceptionResult:
    kind: ReceptionKind
    payload: Optional[UpstreamSlotPayload] = None
    sources: tuple = ()

    @property
    def ok(self) -> bool:
        return self.kind is ReceptionKind.OK


SILENCE = ReceptionResult(ReceptionKind.SILENCE)


@dataclass(frozen=True)
class ReceiverConfig:
    sensitivity_dbm: float = -30.0
    overload_dbm: float = -8.0
    reset_ticks: float = 16
    reset_ticks_per_db: float = 0.25
    overhead_ticks: int = OVERHEAD_TICKS

    def reset_needed(self, power_dbm, previous_power_dbm) -> float:
        step = 0.0 if previous_power_dbm is None else abs(power_dbm - previous_power_dbm)
        return self.reset_ticks + self.reset_ticks_per_db * step


@dataclass(slots=True)
class UpstreamBurst:
    """
    One transmission from an ONT: ``slots`` back-to-back upstream slots.

    Consecutive granted slots of one ONT travel as a single burst train.  For
    a DATA train, ``enqueue_times`` holds the enqueue times of the cells
    served in its leading slots and ``cells`` their bytes (``None`` for
    synthetic traffic); the remaining slots carry idle cells.
    """
    source: int
    launch_time: int
    wavelength_nm: float = 1310.0
    launch_power_dbm: float = 2.0
    payload: Optional[UpstreamSlotPayload] = None
    arrival_time: int = 0
    received_power_dbm: float = 0.0
    slots: int = 1
    # bookkeeping for the MAC: which grants this burst answers
    frame_no: int = -1
    slot: int = -1
    kind: str = "idle"
    enqueue_times: Optional[list] = None
    cells: Optional[list] = None
    ranging: bool = False

    @property
    def duration(self) -> int:
        return self.slots * SLOT_TICKS

    @property
    def end_time(self) -> int:
        return self.arrival_time + self.slots * SLOT_TICKS

    def slot_kind(self, index: int) -> str:
        """Cell kind carried in slot ``index`` of the train."""
        if self.kind == "data":
            return "data" if index < len(self.enqueue_times or ()) else "idle"
        return self.kind


def single_burst_outcome(power_dbm: float, previous_power_dbm,
                         config: ReceiverConfig) -> ReceptionKind:
    if power_dbm < config.sensitivity_dbm:
        return ReceptionKind.POWER_TOO_LOW
    if power_dbm > config.overload_dbm:
        return ReceptionKind.POWER_TOO_HIGH
    if config.reset_needed(power_dbm, previous_power_dbm) > config.overhead_ticks:
        return ReceptionKind.INSUFFICIENT_PREAMBLE
    return ReceptionKind.OK


def receive_bursts(bursts: Sequence[UpstreamBurst], previous_burst_power_dbm=None,
                   config: ReceiverConfig = ReceiverConfig()) -> ReceptionResult:
    """Outcome of one OSU slot window given the single-slot bursts that start in it."""
    if not bursts:
        return SILENCE
    if len(bursts) > 1:
        ordered = sorted(bursts, key=attrgetter("arrival_time", "source"))
        end = ordered[0].end_time
        for b in ordered[1:]:
            if b.arrival_time < end:
                return ReceptionResult(ReceptionKind.COLLISION,
                                       sources=tuple(x.source for x in ordered))
            end = max(end, b.end_time)
    b = bursts[0] if len(bursts) == 1 else ordered[0]
    kind = single_burst_outcome(b.received_power_dbm, previous_burst_power_dbm, config)
    if kind is ReceptionKind.OK:
        return ReceptionResult(kind, b.payload, (b.source,))
    return ReceptionResult(kind, sources=(b.source,))


class BurstReceiver:
    """
    OSU receiver working on the continuous upstream burst stream.

    Bursts are grouped into clusters of mutually overlapping transmissions.
    A cluster is settled once its end is at or before the horizon passed to
    :meth:`settle`; callers guarantee every burst that could still join it
    has been added by then.

    Outcomes are reported per run of slots: ``(burst, first, count, kind)``
    says slots ``first .. first+count-1`` of ``burst`` were received as
    ``kind``.  A lone train needs at most two runs, since only its first
    slot follows a burst of different power.  Overlapping trains are split
    into slots so that only the slots that actually overlap collide.
    """

    def __init__(self, config: ReceiverConfig = ReceiverConfig()):
        self.config = config
        self._pending: list[UpstreamBurst] = []
        self._previous_power = None
        self._outcome_cache: dict = {}
        self._steady: dict = {}         # outcome after a burst of the same power

    def add(self, burst: UpstreamBurst) -> None:
        self._pending.append(burst)

    def extend(self, bursts) -> None:
        self._pending.extend(bursts)

    def __len__(self) -> int:
        return len(self._pending)

    def _outcome(self, power, previous):
        key = (power, previous)
        kind = self._outcome_cache.get(key)
        if kind is None:
            kind = single_burst_outcome(power, previous, self.config)
            self._outcome_cache[key] = kind
        return kind

    def settle(self, horizon: Optional[int] = None) -> list:
        """Resolve clusters ending at or before ``horizon`` (all when None)."""
        pending = self._pending
        if not pending:
            return []
        pending.sort(key=_ARRIVAL_ORDER)
        cache = self._outcome_cache
        settled = []
        i, n = 0, len(pending)
        while i < n:
            first = pending[i]
            end = first.arrival_time + first.slots * SLOT_TICKS
            j = i + 1
            while j < n and pending[j].arrival_time < end:
                e = pending[j].arrival_time + pending[j].slots * SLOT_TICKS
                if e > end:
                    end = e
                j += 1
            if horizon is not None and end > horizon:
                break
            if j == i + 1:
                power = first.received_power_dbm
                kind = cache.get((power, self._previous_power))
                if kind is None:
                    kind = self._outcome(power, self._previous_power)
                if first.slots == 1:
                    settled.append((first, 0, 1, kind))
                else:
                    rest = self._steady.get(power)
                    if rest is None:
                        rest = self._steady[power] = self._outcome(power, power)
                    if rest is kind:
                        settled.append((first, 0, first.slots, kind))
                    else:
                        settled.append((first, 0, 1, kind))
                        settled.append((first, 1, first.slots - 1, rest))
                self._previous_power = power
            else:
                self._settle_overlap(pending[i:j], settled)
            i = j
        self._pending = pending[i:]
        return settled

    def _settle_overlap(self, group, settled) -> None:
        pieces = sorted(((b.arrival_time + k * SLOT_TICKS, b.source, k, b)
                         for b in group for k in range(b.slots)),
                        key=lambda p: (p[0], p[1]))
        i, n = 0, len(pieces)
        while i < n:
            end = pieces[i][0] + SLOT_TICKS
            j = i + 1
            while j < n and pieces[j][0] < end:
                end = max(end, pieces[j][0] + SLOT_TICKS)
                j += 1
            if j == i + 1:
                _, _, k, b = pieces[i]
                settled.append((b, k, 1, self._outcome(b.received_power_dbm,
                                                       self._previous_power)))
            else:
                for _, _, k, b in pieces[i:j]:
                    settled.append((b, k, 1, ReceptionKind.COLLISION))
            self._previous_power = pieces[j - 1][3].received_power_dbm
            i = j


_ARRIVAL_ORDER = attrgetter("arrival_time", "source")
