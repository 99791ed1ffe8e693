"""
ONT side of the TDM MAC.

An ONT only ever transmits in answer to a grant carrying one of its own
GRANT_IDs.  A DATA grant draws the head-of-line cell, or an idle cell when
the queue is empty; a PLOAM grant draws a PLOAM cell.  Grants for other ids,
and UNASSIGNED grants, leave the ONT silent.

Grants in a downstream frame apply to the upstream frame that follows it:
slot ``k`` is launched at ``frame_start_local + FRAME_TICKS + 448*k +
equalization_delay``.  While being ranged the ONT ignores its equalization
delay and answers its PLOAM grant one slot time late.
"""

from __future__ import annotations

import logging
from typing import Optional

from .core import FRAME_TICKS, SLOT_TICKS
from .frames import (DownstreamFrame, IDLE_SLOT, MessageKind, PloamMessage,
                     UpstreamSlotPayload, data_grant, ploam_grant, synthetic_data_cell)
from .phy import UpstreamBurst

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 1024
_EMPTY: list = []       # shared, never mutated
_SYNTHETIC_DATA_SLOT = UpstreamSlotPayload.data(synthetic_data_cell(0, 0))


class Ont:
    """
    One TDM ONT.  Queued cells are kept as parallel lists of enqueue times
    and cell bytes (``None`` for synthetic traffic) with a moving head.
    """

    def __init__(self, ont_id: int, queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
                 response_offset: int = SLOT_TICKS, wavelength_nm: float = 1310.0,
                 launch_power_dbm: float = 2.0, source=None):
        self.ont_id = ont_id
        self.queue_capacity = queue_capacity
        self.response_offset = response_offset
        self.wavelength_nm = wavelength_nm
        self.launch_power_dbm = launch_power_dbm
        self._source = None
        self.pull_limit: Optional[int] = None   # never pull arrivals later than this
        self.data_grant_id: Optional[int] = None
        self.ploam_grant_id: Optional[int] = None
        self.equalization_delay = 0
        self.ranged = False
        self.ranging = False
        self.pending_ploam: Optional[PloamMessage] = None
        self.generated = 0
        self.dropped = 0
        self.malformed_messages = 0
        self.ignored_grants = 0
        self.ignore_equalization = False     # fault injection: never apply the delay
        self._times: list = []
        self._cells: Optional[list] = None     # created on the first real cell
        self._head = 0
        self._next_arrival = float("inf")
        self.source = source            # optional ArrivalStream pulled before service
        self._ploam_slot = UpstreamSlotPayload.ploam_response(ont_id)
        self._data_key = None
        self._ploam_key = None

    # PLOAM control

    def on_ploam_message(self, message: PloamMessage) -> None:
        kind = message.kind
        if kind in (MessageKind.IDLE, MessageKind.BROADCAST):
            return
        if message.ont_id != self.ont_id:
            return
        if kind is MessageKind.ASSIGN_GRANT_IDS:
            data_id, ploam_id = message.argument >> 8, message.argument & 0xFF
            if not data_id or not ploam_id or message.argument >> 16:
                self.malformed_messages += 1
                return
            self.data_grant_id, self.ploam_grant_id = data_id, ploam_id
            self._data_key = data_grant(data_id).to_byte()
            self._ploam_key = ploam_grant(ploam_id).to_byte()
        elif kind is MessageKind.RANGING_GRANT:
            self.ranging = True
        elif kind is MessageKind.SET_EQUALIZATION_DELAY:
            self.ranging = False
            self.ranged = True
            if not self.ignore_equalization:
                self.equalization_delay = message.argument
        else:
            self.malformed_messages += 1

    # traffic ingress

    @property
    def source(self):
        return self._source

    @source.setter
    def source(self, stream) -> None:
        self._source = stream
        self._next_arrival = -1 if stream is not None else float("inf")

    @property
    def backlog(self) -> int:
        return len(self._times) - self._head

    def queued_times(self) -> list:
        return self._times[self._head:]

    def enqueue_cell(self, cell: Optional[bytes], now: int) -> bool:
        if self.backlog >= self.queue_capacity:
            self.dropped += 1
            return False
        if cell is not None and self._cells is None:
            self._cells = [None] * len(self._times)
        self._times.append(now)
        if self._cells is not None:
            self._cells.append(cell)
        return True

    def enqueue_arrivals(self, times) -> int:
        """Bulk ingress of time-ordered synthetic arrivals; the newest overflow is dropped."""
        room = self.queue_capacity - self.backlog
        n = len(times)
        if n > room:
            self.dropped += n - room
            times = times[:room]
            n = room
        self._times.extend(times)
        if self._cells is not None:
            self._cells.extend([None] * n)
        return n

    def pull(self, until: int) -> None:
        """Enqueue arrivals from the attached source up to time ``until``."""
        if self.pull_limit is not None and until > self.pull_limit:
            until = self.pull_limit
        if until < self._next_arrival:
            return
        src = self._source
        arrivals = src.until(until)
        self._next_arrival = src.next_time
        if self.pull_limit is not None and self._next_arrival > self.pull_limit:
            self._next_arrival = float("inf")
        n = len(arrivals)
        if n:
            self.generated += n
            if (self._cells is None
                    and n <= self.queue_capacity - len(self._times) + self._head):
                self._times.extend(arrivals)
            else:
                self.enqueue_arrivals(arrivals)

    def _take(self, n: int):
        h = self._head
        times = self._times[h:h + n]
        cells = None if self._cells is None else self._cells[h:h + n]
        h += len(times)
        if h > 4096 and 2 * h > len(self._times):
            del self._times[:h]
            if self._cells is not None:
                del self._cells[:h]
            h = 0
        self._head = h
        return times, cells

    # grant response

    def wants(self, frame: DownstreamFrame) -> bool:
        """True when ``frame`` carries a message or a grant this ONT must act on."""
        if frame.active_messages:
            return True
        runs = frame.runs_by_grant
        return self._data_key in runs or self._ploam_key in runs

    def on_downstream_frame(self, frame: DownstreamFrame, frame_start_local: int) -> list:
        """
        Process the frame's PLOAM messages, then plan this ONT's bursts for
        the next upstream frame, one burst train per run of consecutive slots.
        """
        if frame.active_messages:
            for m in frame.active_messages:
                self.on_ploam_message(m)
        runs = frame.runs_by_grant
        if self._data_key is None:
            if runs:
                self.ignored_grants += 1
            return []
        data_runs = runs.get(self._data_key)
        ploam_runs = runs.get(self._ploam_key)
        if not data_runs and not ploam_runs:
            return []
        base = frame_start_local + FRAME_TICKS
        out = []
        if data_runs:
            if base >= self._next_arrival:
                self.pull(base)
            start = base + (0 if self.ranging else self.equalization_delay)
            for first, count in data_runs:
                if self._head == len(self._times):
                    times, cells = _EMPTY, None
                else:
                    times, cells = self._take(count)
                if not times:
                    payload = IDLE_SLOT
                elif cells is None or cells[0] is None:
                    payload = _SYNTHETIC_DATA_SLOT
                else:
                    payload = UpstreamSlotPayload.data(cells[0])
                out.append(UpstreamBurst(self.ont_id, start + first * SLOT_TICKS,
                                         self.wavelength_nm, self.launch_power_dbm, payload,
                                         0, 0.0, count, -1, first, "data", times, cells))
        if ploam_runs:
            ranging = self.ranging or not self.ranged
            start = base + (self.response_offset if ranging else self.equalization_delay)
            for first, count in ploam_runs:
                for k in range(first, first + count):
                    payload = self._ploam_slot
                    if self.pending_ploam is not None:
                        payload = UpstreamSlotPayload.ploam_response(self.ont_id,
                                                                     self.pending_ploam)
                        self.pending_ploam = None
                    out.append(UpstreamBurst(self.ont_id, start + k * SLOT_TICKS,
                                             self.wavelength_nm, self.launch_power_dbm,
                                             payload, slot=k, kind="ploam", ranging=ranging))
            if data_runs:
                out.sort(key=lambda b: b.slot)
        return out
