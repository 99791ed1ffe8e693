"""
Scenario runner: admits and ranges the TDM ONTs, drives downstream frames
through the event engine, resolves upstream bursts at the OSU and carries
WDM traffic over its point-to-point channels.

Timeline conventions (ticks, downstream frame ``f`` emitted at ``f*F``):

* ONT at one-way delay ``d`` sees frame ``f`` start at ``f*F + d``.
* Its burst for slot ``k`` reaches the OSU at
  ``f*F + F + 2d + eq + 448k``; after ranging ``2d + eq`` equals the
  equalization target ``E`` for every ONT.
* The measurement window covers whole upstream frames, starting ten frames
  after the last ONT receives its equalization delay.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass
from typing import Optional

from .core import (CELL_BITS, FRAME_TICKS, LINE_RATE_HZ, SLOT_TICKS, SLOTS_PER_FRAME, Engine,
                   EventKind, exact, round_half_up, seconds_to_ticks)
from .metrics import (Metrics, MetricsCollector, OntMetrics, PlantMetrics, throughput_mbps)
from .olt import Olt, RangingError
from .ont import Ont
from .phy import Awg, BurstReceiver, ReceptionKind, propagation_ticks, route_wavelength
from .scenario import Scenario, Topology, build_topology, traffic_stream

log = logging.getLogger(__name__)

OLT_ENTITY = 0
PLANT_ENTITY = 1
TIMER_ENTITY = 2
WARMUP_FRAMES = 10


@dataclass
class RunResult:
    metrics: Metrics
    trace_digest: str
    events: dict
    dispatched: int
    final_clock: int


class Simulation:
    def __init__(self, scenario: Scenario, *, force_zero_equalization: bool = False,
                 record_trace: bool = False, max_frames: Optional[int] = None):
        self.scenario = scenario
        self.topology: Topology = build_topology(scenario)
        self.t_end = seconds_to_ticks(scenario.duration_s)
        self.max_frames = max_frames
        p = scenario.plant
        self.engine = Engine(record_trace=record_trace)
        self.olt = Olt(equalization_target=2 * propagation_ticks(p.reach_m, p.ns_per_m),
                       poll_interval=p.ploam_poll_frames)
        self.receiver = BurstReceiver(p.receiver)
        self.metrics = MetricsCollector()
        self.onts: dict[int, Ont] = {}
        self._tdm = []          # (ont, node, counters) in id order
        for node in sorted(self.topology.tdm_nodes(), key=lambda n: n.id):
            spec = node.spec
            ont = Ont(spec.id, queue_capacity=p.queue_capacity,
                      launch_power_dbm=(p.ont_launch_dbm if spec.launch_dbm is None
                                        else spec.launch_dbm),
                      source=traffic_stream(scenario, spec.id))
            ont.pull_limit = self.t_end
            ont.ignore_equalization = force_zero_equalization
            self.onts[spec.id] = ont
            counters = self.metrics.counters(spec.id, "tdm")
            self._tdm.append((ont, node, counters))
            self.olt.admit_ont(spec.id, spec.weight, spec.max_grants)
        for node in self.topology.wdm_nodes():
            self.metrics.counters(node.id, "wdm")
        self.data_start_frame: Optional[int] = None
        self.window_start_frame: Optional[int] = None
        self.window_start = None
        self.window_end = None
        self.window_frames = 0
        self.first_collision_frame: Optional[int] = None
        self.frames_emitted = 0
        self.reception_counts = Counter()
        self.link_timeline: list = []
        self._wdm_queued: dict[int, int] = {}
        self._all_ranged = False
        # per TDM ONT: (frame handler, one-way delay, power at the OSU)
        self._links = [(ont.on_downstream_frame, node.one_way_ticks, node.upstream_dbm)
                       for ont, node, _ in self._tdm]

    # timeline helpers

    def osu_frame_start(self, frame_no: int) -> int:
        """OSU arrival time of slot 0 for grants carried in frame ``frame_no``."""
        return frame_no * FRAME_TICKS + FRAME_TICKS + self.olt.equalization_target

    def _open_window(self, frame_no: int) -> None:
        self.data_start_frame = frame_no
        first = frame_no + WARMUP_FRAMES
        last = (self.t_end - self.osu_frame_start(0) - FRAME_TICKS) // FRAME_TICKS
        self.window_start_frame = first
        self.window_frames = max(0, last - first + 1)
        self.window_start = self.osu_frame_start(first)
        self.window_end = self.window_start + self.window_frames * FRAME_TICKS

    # event handlers

    def _on_frame(self, ev) -> None:
        f = ev.payload
        now = ev.time
        self._settle(now)
        olt = self.olt
        if olt.ranging is None and not self._all_ranged:
            pending = [o for o, _, _ in self._tdm if not olt.records[o.ont_id].ranged]
            self._all_ranged = not pending
            if pending:
                rec = olt.records[pending[0].ont_id]
                if rec.retries > olt.max_ranging_retries:
                    raise RangingError(rec.ont_id, f"no ranging response after "
                                                   f"{rec.retries} attempts")
                olt.start_ranging(rec.ont_id)
        frame = olt.next_frame(f, now)
        self.frames_emitted += 1
        if olt.ranging is not None and olt.ranging.grant_frame == f:
            self.engine.at(olt.ranging_timer_deadline(), TIMER_ENTITY,
                           EventKind.RANGING_TIMER, olt.ranging.ont_id)
        if self.data_start_frame is None and all(r.eligible for r in olt.records.values()):
            self._open_window(f)

        extend = self.receiver.extend
        for plan, d, power in self._links:
            bursts = plan(frame, now + d)
            if bursts:
                for b in bursts:
                    b.frame_no = f
                    b.arrival_time = b.launch_time + d
                    b.received_power_dbm = power
                extend(bursts)

        nxt = now + FRAME_TICKS
        if nxt <= self.t_end and (self.max_frames is None or f + 1 < self.max_frames):
            self.engine.at(nxt, OLT_ENTITY, EventKind.FRAME_START, f + 1)

    def _on_timer(self, ev) -> None:
        self._settle(ev.time)
        self.olt.ranging_timeout(ev.payload)

    def _on_temperature(self, ev) -> None:
        up = self.topology.set_temperature(ev.payload)
        self.link_timeline.append([ev.time, ev.payload, up])

    def _settle(self, horizon) -> None:
        """
        Account settled receptions.  Clean receptions are credited to the
        sending ONT directly, since a burst only ever answers that ONT's own
        grant; faults go through the OLT, which attributes them by grant.
        """
        olt = self.olt
        counts = self.metrics.onts
        OK, COLLISION = ReceptionKind.OK, ReceptionKind.COLLISION
        w0, w1 = self.window_start, self.window_end
        ok_slots = 0
        for burst, first, count, kind in self.receiver.settle(horizon):
            c = counts[burst.source]
            times = burst.enqueue_times
            if kind is OK and times is not None:
                # clean DATA train (or part of one): the hot path
                ok_slots += count
                n_cells = len(times)
                if first >= n_cells:
                    c.idle += count
                    continue
                data_stop = first + count if first + count < n_cells else n_cells
                n_data = data_stop - first
                c.idle += count - n_data
                arrival = burst.arrival_time
                if (not first and data_stop == n_cells and w0 is not None and w0 <= arrival
                        and arrival + (n_data - 1) * SLOT_TICKS < w1):
                    # a whole train inside the measurement window
                    launch = burst.launch_time
                    if times[-1] > launch:
                        raise ValueError(f"ONT {burst.source}: cell granted before it arrived")
                    lat = [launch + i * SLOT_TICKS - t for i, t in enumerate(times)]
                    c.delivered += n_data
                    c.window_delivered += n_data
                    c.latency.samples.extend(lat)
                    c.latency.sum_ticks += sum(lat)
                else:
                    self._deliver(burst, first, data_stop)
                continue
            if kind is OK:
                ok_slots += count
            else:
                self.reception_counts[kind.value] += count
            if burst.ranging:
                state = olt.ranging
                if kind is OK:
                    c.ploam += 1
                    if (state is not None and state.ont_id == burst.source
                            and state.grant_emission_time is not None):
                        olt.complete_ranging(burst.source, burst.arrival_time,
                                             state.grant_emission_time)
                else:
                    olt.on_upstream_reception(burst.slot, burst.frame_no, kind, "ploam")
                continue
            if times is not None:
                # a DATA train hit by a fault
                data_stop = min(first + count, len(times))
                n_data = data_stop - first if data_stop > first else 0
                n_idle = count - n_data
                slot = burst.slot + first
                if n_data:
                    olt.on_upstream_reception(slot, burst.frame_no, kind, "data", n_data)
                if n_idle:
                    olt.on_upstream_reception(slot + n_data, burst.frame_no, kind, "idle", n_idle)
                if kind is COLLISION:
                    c.collisions += count
                    c.collided += n_data
                    self._note_collision(burst)
                else:
                    c.phy_lost += n_data
            elif kind is OK:
                c.ploam += 1
            else:
                olt.on_upstream_reception(burst.slot, burst.frame_no, kind, burst.kind, 1)
                if kind is COLLISION:
                    c.collisions += 1
                    self._note_collision(burst)
        self.reception_counts["ok"] += ok_slots

    def _note_collision(self, burst) -> None:
        if self.first_collision_frame is None or burst.frame_no < self.first_collision_frame:
            self.first_collision_frame = burst.frame_no

    def _deliver(self, burst, lo: int, hi: int) -> None:
        """Record cells ``lo..hi-1`` of a DATA train, splitting at the window edges."""
        times = burst.enqueue_times[lo:hi] if lo or hi < len(burst.enqueue_times) \
            else burst.enqueue_times
        launch = burst.launch_time + lo * SLOT_TICKS
        n = len(times)
        arrival = burst.arrival_time + lo * SLOT_TICKS
        w0, w1 = self.window_start, self.window_end
        if w0 is not None and w0 <= arrival and arrival + (n - 1) * SLOT_TICKS < w1:
            # whole run inside the measurement window
            if times[-1] > launch:
                raise ValueError(f"ONT {burst.source}: cell granted before it arrived")
            c = self.metrics.onts[burst.source]
            lat = [launch + i * SLOT_TICKS - t for i, t in enumerate(times)]
            c.delivered += n
            c.window_delivered += n
            c.latency.samples.extend(lat)
            c.latency.sum_ticks += sum(lat)
            return
        record = self.metrics.record_deliveries
        if w0 is None:
            record(burst.source, times, launch, SLOT_TICKS, False)
            return
        # slot i lies in the window when w0 <= arrival + i*448 < w1
        a = min(n, max(0, -((arrival - w0) // SLOT_TICKS)))
        b = min(n, max(a, -((arrival - w1) // SLOT_TICKS)))
        if a:
            record(burst.source, times[:a], launch, SLOT_TICKS, False)
        if b > a:
            record(burst.source, times[a:b], launch + a * SLOT_TICKS, SLOT_TICKS, True)
        if n > b:
            record(burst.source, times[b:], launch + b * SLOT_TICKS, SLOT_TICKS, False)

    # WDM point-to-point channels

    def _link_state(self, node, temperature) -> bool:
        device = self.topology.device
        w = node.wdm
        if isinstance(device, Awg):
            ports = route_wavelength(device, 0, w.wavelength_nm, temperature,
                                     self.topology.plan)
            return w.power_ok and ports == {w.port}
        return w.power_ok

    def _carry_wdm(self) -> None:
        """
        Serve each WDM ONT's cells over its own channel: a FIFO pipe with a
        fixed per-cell serialization time.  Cells arriving while the link is
        down, or with the buffer full, are dropped.
        """
        p = self.scenario.plant
        service = max(1, round_half_up(exact(CELL_BITS * LINE_RATE_HZ) / exact(p.dwdm.rate_bps)))
        profile = [(seconds_to_ticks(t), temp) for t, temp in self.scenario.temperature_profile]
        for node in self.topology.wdm_nodes():
            c = self.metrics.onts[node.id]
            self._wdm_queued[node.id] = 0
            src = traffic_stream(self.scenario, node.id)
            if src is None:
                continue
            changes = [(tick, self._link_state(node, temp)) for tick, temp in profile]
            up = self._initial_link[node.id]
            arrivals = src.until(self.t_end)
            c.generated += len(arrivals)
            busy_until = 0
            in_system: deque = deque()
            ci = 0
            for a in arrivals:
                while ci < len(changes) and changes[ci][0] <= a:
                    up = changes[ci][1]
                    ci += 1
                if not up:
                    c.dropped += 1
                    continue
                while in_system and in_system[0] <= a:
                    in_system.popleft()
                if len(in_system) >= p.queue_capacity:
                    c.dropped += 1
                    continue
                start = max(a, busy_until)
                busy_until = start + service
                in_system.append(busy_until)
                if start < self.t_end:
                    self.metrics.record_delivery(node.id, a, start, True)
                else:
                    self._wdm_queued[node.id] += 1

    # run

    def run(self) -> RunResult:
        engine = self.engine
        engine.register(OLT_ENTITY, self._on_frame)
        engine.register(TIMER_ENTITY, self._on_timer)
        engine.register(PLANT_ENTITY, self._on_temperature)
        self._initial_link = {n.id: n.wdm.up for n in self.topology.wdm_nodes()}
        self.link_timeline.append([0, self.topology.temperature_c, self.topology.links_up()])
        for t, temp in self.scenario.temperature_profile:
            tick = seconds_to_ticks(t)
            if tick <= self.t_end:
                engine.at(tick, PLANT_ENTITY, EventKind.TEMPERATURE_STEP, temp)
        if self._tdm:
            engine.at(0, OLT_ENTITY, EventKind.FRAME_START, 0)
        engine.run_until(self.t_end)
        self._settle(None)
        for ont, _, _ in self._tdm:
            if ont.source is not None:
                # arrivals only wait in the queue until a grant drains it, so
                # pulling them just before service gives the same drop decisions
                ont.pull(self.t_end)
        self._carry_wdm()
        return RunResult(self._collect(), engine.trace_digest(), dict(engine.counts),
                         engine.dispatched, engine.now)

    def _collect(self) -> Metrics:
        queued = {}
        for ont, _, c in self._tdm:
            c.generated = ont.generated
            c.dropped = ont.dropped
            queued[ont.ont_id] = ont.backlog
        for node in self.topology.wdm_nodes():
            queued[node.id] = self._wdm_queued.get(node.id, 0)
        audit = self.metrics.audit_conservation(queued)
        tdm_window = self.window_frames * FRAME_TICKS
        onts = {}
        for ont_id, c in sorted(self.metrics.onts.items()):
            window = tdm_window if c.kind == "tdm" else self.t_end
            lat = c.latency
            onts[ont_id] = OntMetrics(
                ont_id=ont_id, kind=c.kind, generated=c.generated, delivered=c.delivered,
                idle=c.idle, dropped=c.dropped, collided=c.collided, phy_lost=c.phy_lost,
                queued=queued.get(ont_id, 0), collisions=c.collisions, ploam_cells=c.ploam,
                window_delivered=c.window_delivered,
                mean_latency_ticks=lat.mean(), p95_latency_ticks=lat.p95(),
                throughput_mbps=throughput_mbps(c.window_delivered, window))
        tdm_delivered = sum(m.window_delivered for m in onts.values() if m.kind == "tdm")
        slots = SLOTS_PER_FRAME * self.window_frames
        ranging = {}
        for ont_id, r in sorted(self.olt.records.items()):
            ranging[str(ont_id)] = {"measured_rtt": r.measured_rtt,
                                    "equalization_delay": r.equalization_delay,
                                    "retries": r.retries}
        plant = PlantMetrics(
            upstream_utilization=tdm_delivered / slots if slots else 0.0,
            video_receivers_count=self.topology.video_receivers(),
            wdm_links_up=self.topology.links_up(),
            wdm_link_timeline=self.link_timeline,
            window_start_tick=self.window_start or 0,
            window_ticks=tdm_window,
            window_frames=self.window_frames,
            frames_emitted=self.frames_emitted,
            data_start_frame=self.data_start_frame,
            first_collision_frame=self.first_collision_frame,
            collisions_total=sum(m.collisions for m in onts.values()),
            receptions={k: v for k, v in sorted(self.reception_counts.items()) if v},
            ranging=ranging,
        )
        return Metrics(onts, plant, audit)


def simulate(s: Scenario, **options) -> RunResult:
    return Simulation(s, **options).run()


def run(s: Scenario, **options) -> Metrics:
    """Run ``s`` to completion and return its metrics."""
    return Simulation(s, **options).run().metrics
