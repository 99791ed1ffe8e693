"""
OLT/OSU side of the TDM MAC: admission, grant scheduling and ranging.

Grant ids: DATA ids 1..32 and PLOAM ids 33..64, lowest free first.  Each
frame carries 53 grants for the upstream frame that follows it; DATA grants
are split by weighted largest remainder, laid out in contiguous blocks in
ONT id order.  PLOAM polls only use slots left over after DATA grants.

Ranging is serial.  Announcing a ranging target opens a quiet window of
whole frames during which only the target's single PLOAM grant is issued,
in slot 0 of the last quiet frame, so the response cannot overlap aligned
traffic from any other ONT.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import FRAME_TICKS, SLOT_TICKS, SLOTS_PER_FRAME
from .frames import (UNASSIGNED, DownstreamFrame, Grant, GrantType, IDLE_MESSAGE,
                     MessageKind, PloamMessage, data_grant, ploam_grant)
from .phy import ReceptionKind, propagation_ticks

log = logging.getLogger(__name__)

MAX_ONTS = 32
DATA_IDS = range(1, 33)
PLOAM_IDS = range(33, 65)
DESIGN_REACH_M = 20_000
EQUALIZATION_TARGET = 2 * propagation_ticks(DESIGN_REACH_M)   # 31104
RESPONSE_OFFSET = SLOT_TICKS
DEFAULT_POLL_FRAMES = 10


class AdmissionError(ValueError):
    pass


class RangingError(RuntimeError):
    def __init__(self, ont_id, message):
        super().__init__(f"ONT {ont_id}: {message}")
        self.ont_id = ont_id


@dataclass
class OntRecord:
    ont_id: int
    data_grant_id: int
    ploam_grant_id: int
    ranged: bool = False
    measured_rtt: Optional[int] = None
    equalization_delay: int = 0
    weight: int = 1
    max_grants: Optional[int] = None
    retries: int = 0
    announced: bool = False      # set-equalization-delay already sent downstream

    @property
    def eligible(self) -> bool:
        return self.ranged and self.announced


@dataclass(frozen=True)
class ScheduleFrame:
    grants: tuple

    def __post_init__(self):
        if len(self.grants) != SLOTS_PER_FRAME:
            raise ValueError(f"schedule has {len(self.grants)} grants, expected 53")

    def data_counts(self) -> Counter:
        return Counter(g.grant_id for g in self.grants if g.grant_type is GrantType.DATA)


def largest_remainder(shares: list[tuple[int, int]], frame_no: int,
                      total: int = SLOTS_PER_FRAME) -> dict[int, int]:
    """
    Split ``total`` slots over ``(ont_id, weight)`` pairs.

    Each ONT gets floor(total*w/W); the leftover slots go to the largest
    remainders.  Equal remainders are ordered by ONT id, with the starting
    point rotated by ``frame_no`` so ties alternate from frame to frame.
    """
    if not shares:
        return {}
    shares = sorted(shares)
    wsum = sum(w for _, w in shares)
    n = len(shares)
    alloc = {}
    order = []
    for idx, (ont_id, w) in enumerate(shares):
        base, rem = divmod(total * w, wsum)
        alloc[ont_id] = base
        order.append((-rem, (idx - frame_no) % n, ont_id))
    leftover = total - sum(alloc.values())
    order.sort()
    for _, _, ont_id in order[:leftover]:
        alloc[ont_id] += 1
    return alloc


def build_schedule(records: Iterable[OntRecord], frame_no: int,
                   poll_interval: int = DEFAULT_POLL_FRAMES) -> ScheduleFrame:
    """Grants for the 53 upstream slots answering downstream frame ``frame_no``."""
    eligible = sorted((r for r in records if r.ranged), key=lambda r: r.ont_id)
    alloc = largest_remainder([(r.ont_id, r.weight) for r in eligible], frame_no)
    grants: list[Grant] = []
    for r in eligible:
        count = alloc[r.ont_id]
        if r.max_grants is not None:
            count = min(count, r.max_grants)
        grants.extend([data_grant(r.data_grant_id)] * count)
    if poll_interval and frame_no % poll_interval == 0:
        for r in eligible:
            if len(grants) >= SLOTS_PER_FRAME:
                break
            grants.append(ploam_grant(r.ploam_grant_id))
    grants.extend([UNASSIGNED] * (SLOTS_PER_FRAME - len(grants)))
    return ScheduleFrame(tuple(grants))


@dataclass
class RangingState:
    ont_id: int
    quiet_start: Optional[int] = None
    grant_frame: Optional[int] = None
    grant_emission_time: Optional[int] = None


class Olt:
    def __init__(self, equalization_target: int = EQUALIZATION_TARGET,
                 response_offset: int = RESPONSE_OFFSET,
                 poll_interval: int = DEFAULT_POLL_FRAMES,
                 ranging_window: Optional[int] = None,
                 max_ranging_retries: int = 3):
        self.equalization_target = equalization_target
        self.response_offset = response_offset
        self.poll_interval = poll_interval
        # RTT at design reach plus one frame of ONT processing
        self.ranging_window = (ranging_window if ranging_window is not None
                               else equalization_target + FRAME_TICKS)
        self.quiet_frames = -(-self.ranging_window // FRAME_TICKS)
        # Frames kept blank after the ranging grant: the latest reply ends
        # 2 slots + target after slot 0, and an ONT ignoring its delay could
        # land as early as slot 0 of the next upstream frame.
        self.tail_frames = -(-(2 * SLOT_TICKS + equalization_target) // FRAME_TICKS) - 1
        self.max_ranging_retries = max_ranging_retries
        self.records: dict[int, OntRecord] = {}
        self.messages: deque[PloamMessage] = deque()
        self.ranging: Optional[RangingState] = None
        self.accounting: dict[int, Counter] = {}
        self._schedules: dict[int, ScheduleFrame] = {}
        self._schedule_cache: dict = {}
        self._frame_cache: dict = {}
        self._version = 0
        self._by_grant_id: dict[int, int] = {}

    # admission

    def admit_ont(self, ont_id: int, weight: int = 1,
                  max_grants: Optional[int] = None) -> OntRecord:
        if ont_id in self.records:
            raise AdmissionError(f"ONT {ont_id} is already admitted")
        if len(self.records) >= MAX_ONTS:
            raise AdmissionError(f"plant is full ({MAX_ONTS} ONTs)")
        if weight < 1:
            raise AdmissionError(f"ONT {ont_id}: weight must be a positive integer")
        used_data = {r.data_grant_id for r in self.records.values()}
        used_ploam = {r.ploam_grant_id for r in self.records.values()}
        data_id = next(i for i in DATA_IDS if i not in used_data)
        ploam_id = next(i for i in PLOAM_IDS if i not in used_ploam)
        rec = OntRecord(ont_id, data_id, ploam_id, weight=weight, max_grants=max_grants)
        self.records[ont_id] = rec
        self._by_grant_id[data_id] = ont_id
        self._by_grant_id[ploam_id] = ont_id
        self.accounting[ont_id] = Counter()
        self.messages.append(PloamMessage.assign_grant_ids(ont_id, data_id, ploam_id))
        self._version += 1
        return rec

    # ranging

    def start_ranging(self, ont_id: int) -> None:
        """
        Queue the ranging announcement for ``ont_id``.

        The quiet window opens with the frame that carries the announcement.
        An already-ranged ONT may be ranged again; it loses its DATA grants
        until the new delay is sent.
        """
        if ont_id not in self.records:
            raise RangingError(ont_id, "not admitted")
        if self.ranging is not None:
            raise RangingError(ont_id, f"ranging of ONT {self.ranging.ont_id} in progress")
        rec = self.records[ont_id]
        rec.ranged = False
        rec.announced = False
        self._version += 1
        self.ranging = RangingState(ont_id)
        self.messages.append(PloamMessage.ranging_grant(ont_id))

    def complete_ranging(self, ont_id: int, arrival_time: int,
                         grant_emission_time: int) -> int:
        state = self.ranging
        if state is None or state.ont_id != ont_id:
            raise RangingError(ont_id, "no ranging in progress")
        rec = self.records[ont_id]
        rtt = arrival_time - grant_emission_time - self.response_offset
        delay = self.equalization_target - rtt
        self.ranging = None
        if delay < 0:
            raise RangingError(
                ont_id, f"round trip {rtt} exceeds the equalization target "
                        f"{self.equalization_target}; beyond design reach")
        rec.measured_rtt = rtt
        rec.equalization_delay = delay
        rec.ranged = True
        self.messages.append(PloamMessage.set_equalization_delay(ont_id, delay))
        self._version += 1
        return delay

    def ranging_timeout(self, ont_id: int) -> bool:
        """Abort an unanswered ranging attempt; True when it was still open."""
        state = self.ranging
        if state is None or state.ont_id != ont_id:
            return False
        self.ranging = None
        self.records[ont_id].retries += 1
        log.info("ranging of ONT %d timed out (retry %d)", ont_id,
                 self.records[ont_id].retries)
        return True

    def ranging_timer_deadline(self) -> Optional[int]:
        state = self.ranging
        if state is None or state.grant_emission_time is None:
            return None
        # latest response end at design reach, then one frame to settle
        return (state.grant_emission_time + self.response_offset
                + self.equalization_target + SLOT_TICKS + FRAME_TICKS + 1)

    # per-frame scheduling

    def in_quiet_window(self, frame_no: int) -> bool:
        state = self.ranging
        return (state is not None and state.quiet_start is not None
                and state.quiet_start <= frame_no <= state.grant_frame + self.tail_frames)

    def schedule_for(self, frame_no: int) -> ScheduleFrame:
        state = self.ranging
        if self.in_quiet_window(frame_no):
            grants = [UNASSIGNED] * SLOTS_PER_FRAME
            if frame_no == state.grant_frame:
                grants[0] = ploam_grant(self.records[state.ont_id].ploam_grant_id)
            return ScheduleFrame(tuple(grants))
        eligible = [r for r in self.records.values() if r.eligible]
        n = max(1, len(eligible))
        poll = bool(self.poll_interval) and frame_no % self.poll_interval == 0
        key = (self._version, frame_no % n, poll)
        sched = self._schedule_cache.get(key)
        if sched is None:
            if len(self._schedule_cache) > 256:
                self._schedule_cache.clear()
            # frame_no only matters modulo n for rotation and via the poll flag
            sched = build_schedule(eligible, frame_no, self.poll_interval)
            self._schedule_cache[key] = sched
        return sched

    def next_frame(self, frame_no: int, emission_time: int) -> DownstreamFrame:
        """Emit downstream frame ``frame_no`` starting at ``emission_time``."""
        msgs = []
        for _ in range(2):
            msgs.append(self.messages.popleft() if self.messages else IDLE_MESSAGE)
        for m in msgs:
            if m.kind is MessageKind.SET_EQUALIZATION_DELAY:
                rec = self.records.get(m.ont_id)
                if rec is not None and rec.ranged:
                    rec.announced = True
                    self._version += 1
            elif (m.kind is MessageKind.RANGING_GRANT and self.ranging is not None
                  and self.ranging.ont_id == m.ont_id and self.ranging.quiet_start is None):
                self.ranging.quiet_start = frame_no
                self.ranging.grant_frame = frame_no + self.quiet_frames - 1
        sched = self.schedule_for(frame_no)
        state = self.ranging
        if state is not None and state.grant_frame == frame_no:
            # slot 0 of the upstream frame that answers this downstream frame
            state.grant_emission_time = emission_time + FRAME_TICKS
        self._schedules[frame_no] = sched
        self._schedules.pop(frame_no - 8, None)
        if msgs[0] is IDLE_MESSAGE and msgs[1] is IDLE_MESSAGE:
            # steady state: identical schedules give identical frames
            hit = self._frame_cache.get(id(sched))
            if hit is not None and hit[0] is sched:
                return hit[1]
            frame = DownstreamFrame.from_grants(sched.grants, msgs)
            if len(self._frame_cache) > 256:
                self._frame_cache.clear()
            self._frame_cache[id(sched)] = (sched, frame)
            return frame
        return DownstreamFrame.from_grants(sched.grants, msgs)

    def schedule_of(self, frame_no: int) -> Optional[ScheduleFrame]:
        return self._schedules.get(frame_no)

    def granted_ont(self, grant: Grant) -> Optional[int]:
        if grant.grant_type is GrantType.UNASSIGNED:
            return None
        return self._by_grant_id.get(grant.grant_id)

    # accounting

    def on_upstream_reception(self, slot_index: int, frame_no: int, kind: ReceptionKind,
                              cell_kind: str = "data", count: int = 1) -> None:
        """Attribute the outcome of ``count`` slots from ``slot_index`` on to the granted ONT."""
        sched = self._schedules.get(frame_no)
        if sched is None:
            return
        ont = self.granted_ont(sched.grants[slot_index])
        if ont is None:
            if kind is not ReceptionKind.SILENCE:
                self.accounting.setdefault(None, Counter())["unsolicited"] += count
            return
        acct = self.accounting[ont]
        if kind is ReceptionKind.OK:
            acct[cell_kind] += count
        elif kind is ReceptionKind.COLLISION:
            acct["collision"] += count
        elif kind is ReceptionKind.SILENCE:
            acct["silence"] += count
        else:
            acct["power_fault"] += count
