"""Per-ONT counters, latency samples and the cell conservation audit."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from .core import CELL_BITS, LINE_RATE_HZ

CSV_COLUMNS = (
    "ont_id", "delivered", "idle", "dropped", "collisions",
    "mean_latency_ticks", "p95_latency_ticks", "throughput_mbps",
)


class LatencySketch:
    """Exact latency sample set; p95 by nearest rank."""

    def __init__(self):
        self.samples: list[int] = []
        self.sum_ticks = 0

    @property
    def count(self) -> int:
        return len(self.samples)

    def add(self, ticks: int) -> None:
        if ticks < 0:
            raise ValueError(f"negative latency sample {ticks}")
        self.samples.append(ticks)
        self.sum_ticks += ticks

    def extend(self, ticks) -> None:
        for t in ticks:
            self.add(t)

    def mean(self) -> Optional[float]:
        return self.sum_ticks / len(self.samples) if self.samples else None

    def percentile(self, pct: int) -> Optional[int]:
        n = len(self.samples)
        if n == 0:
            return None
        rank = max(1, (pct * n + 99) // 100)   # ceil(pct/100 * n)
        return sorted(self.samples)[rank - 1]

    def p95(self) -> Optional[int]:
        return self.percentile(95)


@dataclass
class OntCounters:
    ont_id: int
    kind: str = "tdm"
    generated: int = 0
    delivered: int = 0
    idle: int = 0
    dropped: int = 0
    collided: int = 0          # data cells destroyed by overlap
    phy_lost: int = 0          # data cells lost to power or preamble faults
    ploam: int = 0
    collisions: int = 0        # bursts of this ONT involved in a collision
    window_delivered: int = 0
    latency: LatencySketch = field(default_factory=LatencySketch, repr=False)


@dataclass
class ConservationAudit:
    passed: bool
    residuals: dict


class MetricsCollector:
    def __init__(self):
        self.onts: dict[int, OntCounters] = {}

    def counters(self, ont_id: int, kind: str = "tdm") -> OntCounters:
        c = self.onts.get(ont_id)
        if c is None:
            c = self.onts[ont_id] = OntCounters(ont_id, kind)
        return c

    def record_delivery(self, ont_id: int, enqueue_time: int, grant_time: int,
                        in_window: bool = True) -> None:
        if grant_time < enqueue_time:
            raise ValueError(
                f"ONT {ont_id}: cell granted at {grant_time} before it arrived at {enqueue_time}")
        c = self.onts[ont_id]
        c.delivered += 1
        if in_window:
            c.window_delivered += 1
            c.latency.add(grant_time - enqueue_time)

    def record_deliveries(self, ont_id: int, enqueue_times, first_grant_time: int,
                          spacing: int, in_window: bool = True) -> None:
        """Bulk form of :meth:`record_delivery` for cells granted ``spacing`` ticks apart."""
        lat = [first_grant_time + i * spacing - t for i, t in enumerate(enqueue_times)]
        if not lat:
            return
        if min(lat) < 0:
            raise ValueError(f"ONT {ont_id}: cell granted before it arrived")
        c = self.onts[ont_id]
        c.delivered += len(lat)
        if in_window:
            c.window_delivered += len(lat)
            c.latency.samples.extend(lat)
            c.latency.sum_ticks += sum(lat)

    def audit_conservation(self, queued: dict) -> ConservationAudit:
        """generated = delivered + collided + phy_lost + queued + dropped, per ONT."""
        residuals = {}
        for ont_id, c in sorted(self.onts.items()):
            residuals[ont_id] = c.generated - (
                c.delivered + c.collided + c.phy_lost + queued.get(ont_id, 0) + c.dropped)
        return ConservationAudit(all(r == 0 for r in residuals.values()), residuals)


def throughput_mbps(cells: int, window_ticks: int) -> float:
    if window_ticks <= 0:
        return 0.0
    return cells * CELL_BITS * LINE_RATE_HZ / window_ticks / 1e6


@dataclass
class OntMetrics:
    ont_id: int
    kind: str
    generated: int
    delivered: int
    idle: int
    dropped: int
    collided: int
    phy_lost: int
    queued: int
    collisions: int
    ploam_cells: int
    window_delivered: int
    mean_latency_ticks: Optional[float]
    p95_latency_ticks: Optional[int]
    throughput_mbps: float


@dataclass
class PlantMetrics:
    upstream_utilization: float = 0.0
    video_receivers_count: int = 0
    wdm_links_up: int = 0
    wdm_link_timeline: list = field(default_factory=list)
    window_start_tick: int = 0
    window_ticks: int = 0
    window_frames: int = 0
    frames_emitted: int = 0
    data_start_frame: Optional[int] = None
    first_collision_frame: Optional[int] = None
    collisions_total: int = 0
    receptions: dict = field(default_factory=dict)
    ranging: dict = field(default_factory=dict)


@dataclass
class Metrics:
    onts: dict
    plant: PlantMetrics
    conservation: ConservationAudit

    def ont(self, ont_id: int) -> OntMetrics:
        return self.onts[ont_id]

    def to_dict(self) -> dict:
        return {
            "onts": [asdict(self.onts[k]) for k in sorted(self.onts)],
            "plant": asdict(self.plant),
            "conservation": {
                "passed": self.conservation.passed,
                "residuals": {str(k): v for k, v in self.conservation.residuals.items()},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_rows(self, kinds=("tdm", "wdm")) -> list[dict]:
        rows = []
        for k in sorted(self.onts):
            m = self.onts[k]
            if m.kind not in kinds:
                continue
            rows.append({
                "ont_id": m.ont_id,
                "delivered": m.delivered,
                "idle": m.idle,
                "dropped": m.dropped,
                "collisions": m.collisions,
                "mean_latency_ticks": "" if m.mean_latency_ticks is None
                else f"{m.mean_latency_ticks:.3f}",
                "p95_latency_ticks": "" if m.p95_latency_ticks is None else m.p95_latency_ticks,
                "throughput_mbps": f"{m.throughput_mbps:.6f}",
            })
        return rows

    def to_csv(self, kinds=("tdm", "wdm")) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.csv_rows(kinds))
        return buf.getvalue()
