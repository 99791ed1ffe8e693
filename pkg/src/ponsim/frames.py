"""
Bit-exact codec for APON downstream frames, PLOAM cells and upstream slots.

Downstream frame (2968 bytes): 56 cells of 53 bytes.  Cells 0 and 28 are
PLOAM cells; the other 54 carry ATM payload or idle cells.

PLOAM cell layout (53 bytes)::

    0..4    ATM header, fixed PLOAM pattern 00 00 00 09 00
    5       position marker, 0x01 first / 0x02 second
    6..32   27 grant bytes (second cell: 26 grants, byte 32 reserved 0x00)
    33..44  12-byte message field
    45..52  reserved, zero

Grant byte: ``tt iiiiii`` with type 00 UNASSIGNED, 01 DATA, 10 PLOAM, and
the low six bits of the grant id.  PLOAM grant id 64 goes on the wire as
six zero bits; the type bits keep it distinct from the all-zero UNASSIGNED
byte.

Message field: byte 0 kind, byte 1 target ONT id, bytes 2..5 big-endian
32-bit argument, bytes 6..11 zero.

Upstream slot (56 bytes): 3 overhead bytes then one 53-byte ATM cell.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Union

from .core import (CELL_BYTES, CELLS_PER_FRAME, FRAME_BYTES, SLOT_BYTES,
                   SLOTS_PER_FRAME)

FIRST_PLOAM_INDEX = 0
SECOND_PLOAM_INDEX = 28
FIRST_PLOAM_GRANTS = 27
SECOND_PLOAM_GRANTS = 26
MESSAGE_BYTES = 12

PLOAM_HEADER = bytes([0x00, 0x00, 0x00, 0x09, 0x00])
IDLE_HEADER = bytes([0x00, 0x00, 0x00, 0x01, 0x52])
IDLE_CELL = IDLE_HEADER + bytes([0x6A] * (CELL_BYTES - 5))
DEFAULT_OVERHEAD = bytes([0xAA, 0xAA, 0x85])

_GRANTS_OFFSET = 6
_MESSAGE_OFFSET = _GRANTS_OFFSET + FIRST_PLOAM_GRANTS
_POSITION_MARK = {1: "first", 2: "second"}


class FrameError(ValueError):
    """Malformed wire data or a structure that violates frame invariants."""


class GrantType(enum.IntEnum):
    UNASSIGNED = 0b00
    DATA = 0b01
    PLOAM = 0b10


@dataclass(frozen=True)
class Grant:
    grant_type: GrantType
    grant_id: int = 0

    def __post_init__(self):
        if not isinstance(self.grant_type, GrantType):
            object.__setattr__(self, "grant_type", GrantType(self.grant_type))
        if self.grant_type is GrantType.UNASSIGNED and self.grant_id:
            object.__setattr__(self, "grant_id", 0)
        if not 0 <= self.grant_id <= 0xFF:
            raise FrameError(f"grant id {self.grant_id} is not 8-bit")

    def to_byte(self) -> int:
        if self.grant_type is GrantType.UNASSIGNED:
            return 0
        return (int(self.grant_type) << 6) | (self.grant_id & 0x3F)

    @classmethod
    def from_byte(cls, value: int) -> "Grant":
        code = value >> 6
        if code == 0b11:
            raise FrameError(f"grant byte {value:#04x} has undefined type 11")
        gtype = GrantType(code)
        gid = value & 0x3F
        if gtype is GrantType.PLOAM and gid == 0:
            gid = 64
        return make_grant(gtype, gid)


@lru_cache(maxsize=None)
def make_grant(grant_type: GrantType, grant_id: int = 0) -> Grant:
    return Grant(grant_type, grant_id)


UNASSIGNED = make_grant(GrantType.UNASSIGNED)


def data_grant(grant_id: int) -> Grant:
    return make_grant(GrantType.DATA, grant_id)


def ploam_grant(grant_id: int) -> Grant:
    return make_grant(GrantType.PLOAM, grant_id)


class MessageKind(enum.IntEnum):
    IDLE = 0
    BROADCAST = 1
    ASSIGN_GRANT_IDS = 2
    RANGING_GRANT = 3
    SET_EQUALIZATION_DELAY = 4


BROADCAST_ONT = 0xFF


@dataclass(frozen=True)
class PloamMessage:
    kind: MessageKind = MessageKind.IDLE
    ont_id: int = 0
    argument: int = 0

    @property
    def addressing(self):
        """``"idle"``, ``"broadcast"`` or ``("directed", ont_id)``."""
        if self.kind is MessageKind.IDLE:
            return "idle"
        if self.kind is MessageKind.BROADCAST or self.ont_id == BROADCAST_ONT:
            return "broadcast"
        return ("directed", self.ont_id)

    def encode(self) -> bytes:
        if not 0 <= self.ont_id <= 0xFF:
            raise FrameError(f"message target {self.ont_id} is not 8-bit")
        if not 0 <= self.argument <= 0xFFFFFFFF:
            raise FrameError(f"message argument {self.argument} is not 32-bit")
        return struct.pack(">BBI6x", int(self.kind), self.ont_id, self.argument)

    @classmethod
    def decode(cls, raw: bytes) -> "PloamMessage":
        if len(raw) != MESSAGE_BYTES:
            raise FrameError(f"message field is {len(raw)} bytes, expected 12")
        kind, ont_id, arg = struct.unpack(">BBI6x", raw)
        try:
            kind = MessageKind(kind)
        except ValueError:
            raise FrameError(f"unknown message kind {kind}") from None
        return cls(kind, ont_id, arg)

    @classmethod
    def assign_grant_ids(cls, ont_id: int, data_id: int, ploam_id: int):
        return cls(MessageKind.ASSIGN_GRANT_IDS, ont_id, (data_id << 8) | ploam_id)

    @classmethod
    def ranging_grant(cls, ont_id: int):
        return cls(MessageKind.RANGING_GRANT, ont_id, 0)

    @classmethod
    def set_equalization_delay(cls, ont_id: int, delay_ticks: int):
        return cls(MessageKind.SET_EQUALIZATION_DELAY, ont_id, delay_ticks)


IDLE_MESSAGE = PloamMessage()


@dataclass(frozen=True)
class PloamCell:
    position: str                      # "first" | "second"
    grants: tuple = ()
    message: PloamMessage = IDLE_MESSAGE

    @property
    def message_kind(self):
        return self.message.addressing

    def expected_grants(self) -> int:
        return FIRST_PLOAM_GRANTS if self.position == "first" else SECOND_PLOAM_GRANTS

    def validate(self) -> None:
        if self.position not in ("first", "second"):
            raise FrameError(f"PLOAM position {self.position!r}")
        if len(self.grants) != self.expected_grants():
            raise FrameError(
                f"{self.position} PLOAM carries {len(self.grants)} grants, "
                f"expected {self.expected_grants()}")

    def encode(self) -> bytes:
        self.validate()
        out = bytearray(CELL_BYTES)
        out[0:5] = PLOAM_HEADER
        out[5] = 1 if self.position == "first" else 2
        for i, g in enumerate(self.grants):
            out[_GRANTS_OFFSET + i] = g.to_byte()
        out[_MESSAGE_OFFSET:_MESSAGE_OFFSET + MESSAGE_BYTES] = self.message.encode()
        return bytes(out)

    @classmethod
    def decode(cls, raw: bytes, position: str | None = None) -> "PloamCell":
        if len(raw) != CELL_BYTES:
            raise FrameError(f"PLOAM cell is {len(raw)} bytes, expected 53")
        if raw[0:5] != PLOAM_HEADER:
            raise FrameError("cell at PLOAM position lacks the PLOAM header")
        mark = _POSITION_MARK.get(raw[5])
        if mark is None:
            raise FrameError(f"PLOAM position marker {raw[5]:#04x}")
        if position is not None and mark != position:
            raise FrameError(f"expected {position} PLOAM, found {mark}")
        n = FIRST_PLOAM_GRANTS if mark == "first" else SECOND_PLOAM_GRANTS
        grants = tuple(Grant.from_byte(b) for b in raw[_GRANTS_OFFSET:_GRANTS_OFFSET + n])
        message = PloamMessage.decode(raw[_MESSAGE_OFFSET:_MESSAGE_OFFSET + MESSAGE_BYTES])
        return cls(mark, grants, message)


Cell = Union[PloamCell, bytes]


@dataclass(frozen=True)
class DownstreamFrame:
    """56 cells; ``cells[0]`` and ``cells[28]`` must be the two PLOAM cells."""

    cells: tuple = field(default_factory=tuple)

    @classmethod
    def from_grants(cls, grants, messages=(IDLE_MESSAGE, IDLE_MESSAGE),
                    payload: Iterable[bytes] | None = None) -> "DownstreamFrame":
        """Build a frame from 53 per-slot grants and two PLOAM messages."""
        grants = tuple(grants)
        if len(grants) != SLOTS_PER_FRAME:
            raise FrameError(f"{len(grants)} grants, expected 53")
        first = PloamCell("first", grants[:FIRST_PLOAM_GRANTS], messages[0])
        second = PloamCell("second", grants[FIRST_PLOAM_GRANTS:], messages[1])
        body = list(payload) if payload is not None else [IDLE_CELL] * 54
        if len(body) != CELLS_PER_FRAME - 2:
            raise FrameError(f"{len(body)} payload cells, expected 54")
        cells = ((first,) + tuple(body[:SECOND_PLOAM_INDEX - 1]) + (second,)
                 + tuple(body[SECOND_PLOAM_INDEX - 1:]))
        return cls(cells)

    @property
    def first_ploam(self) -> PloamCell:
        return self.cells[FIRST_PLOAM_INDEX]

    @property
    def second_ploam(self) -> PloamCell:
        return self.cells[SECOND_PLOAM_INDEX]

    def grants(self) -> tuple:
        return self.first_ploam.grants + self.second_ploam.grants

    def messages(self) -> tuple:
        return (self.first_ploam.message, self.second_ploam.message)

    @cached_property
    def slots_by_grant(self) -> dict:
        """Map each granted (type, id) to the upstream slots it owns."""
        index: dict = {}
        for k, g in enumerate(self.grants()):
            if g.grant_type is not GrantType.UNASSIGNED:
                index.setdefault(g, []).append(k)
        return index

    @cached_property
    def runs_by_grant(self) -> dict:
        """Map each granted wire byte to its ``(first_slot, count)`` runs of consecutive slots."""
        index: dict = {}
        for g, slots in self.slots_by_grant.items():
            runs = []
            first = prev = slots[0]
            for k in slots[1:]:
                if k != prev + 1:
                    runs.append((first, prev - first + 1))
                    first = k
                prev = k
            runs.append((first, prev - first + 1))
            index[g.to_byte()] = tuple(runs)
        return index

    @cached_property
    def active_messages(self) -> tuple:
        """The frame's PLOAM messages other than idle ones."""
        return tuple(m for m in self.messages() if m.kind is not MessageKind.IDLE)

    def validate(self) -> None:
        if len(self.cells) != CELLS_PER_FRAME:
            raise FrameError(f"frame has {len(self.cells)} cells, expected 56")
        for i, cell in enumerate(self.cells):
            if i == FIRST_PLOAM_INDEX or i == SECOND_PLOAM_INDEX:
                want = "first" if i == FIRST_PLOAM_INDEX else "second"
                if not isinstance(cell, PloamCell) or cell.position != want:
                    raise FrameError(f"cell {i} must be the {want} PLOAM cell")
                cell.validate()
            elif isinstance(cell, PloamCell):
                raise FrameError(f"PLOAM cell at payload index {i}")
            elif len(cell) != CELL_BYTES:
                raise FrameError(f"cell {i} is {len(cell)} bytes, expected 53")


def grant_for_slot(frame: DownstreamFrame, slot_index: int) -> Grant:
    """Grant that governs upstream slot ``slot_index`` (0..52)."""
    if not 0 <= slot_index < SLOTS_PER_FRAME:
        raise IndexError(f"slot index {slot_index} outside 0..52")
    if slot_index < FIRST_PLOAM_GRANTS:
        return frame.first_ploam.grants[slot_index]
    return frame.second_ploam.grants[slot_index - FIRST_PLOAM_GRANTS]


def slot_grant_field(slot_index: int) -> tuple[str, int]:
    """(PLOAM position, grant field index) carrying ``slot_index``."""
    if not 0 <= slot_index < SLOTS_PER_FRAME:
        raise IndexError(f"slot index {slot_index} outside 0..52")
    if slot_index < FIRST_PLOAM_GRANTS:
        return ("first", slot_index)
    return ("second", slot_index - FIRST_PLOAM_GRANTS)


def encode_downstream_frame(frame: DownstreamFrame) -> bytes:
    frame.validate()
    parts = [c.encode() if isinstance(c, PloamCell) else bytes(c)
             for c in frame.cells]
    out = b"".join(parts)
    assert len(out) == FRAME_BYTES
    return out


def decode_downstream_frame(data: bytes) -> DownstreamFrame:
    if len(data) != FRAME_BYTES:
        raise FrameError(f"downstream frame is {len(data)} bytes, expected 2968")
    cells = []
    for i in range(CELLS_PER_FRAME):
        raw = bytes(data[i * CELL_BYTES:(i + 1) * CELL_BYTES])
        if i == FIRST_PLOAM_INDEX:
            cells.append(PloamCell.decode(raw, "first"))
        elif i == SECOND_PLOAM_INDEX:
            cells.append(PloamCell.decode(raw, "second"))
        else:
            cells.append(raw)
    return DownstreamFrame(tuple(cells))


# Upstream

class CellKind(enum.Enum):
    DATA = "data"
    IDLE = "idle"
    PLOAM = "ploam"


@dataclass(frozen=True)
class UpstreamSlotPayload:
    overhead: bytes = DEFAULT_OVERHEAD
    cell: bytes = IDLE_CELL

    @property
    def kind(self) -> CellKind:
        if self.cell[:5] == IDLE_HEADER:
            return CellKind.IDLE
        if self.cell[:5] == PLOAM_HEADER:
            return CellKind.PLOAM
        return CellKind.DATA

    @classmethod
    def idle(cls) -> "UpstreamSlotPayload":
        return IDLE_SLOT

    @classmethod
    def ploam_response(cls, ont_id: int, message: PloamMessage = IDLE_MESSAGE):
        body = PLOAM_HEADER + bytes([ont_id & 0xFF]) + message.encode()
        return cls(DEFAULT_OVERHEAD, body + bytes(CELL_BYTES - len(body)))

    @classmethod
    def data(cls, cell: bytes) -> "UpstreamSlotPayload":
        return cls(DEFAULT_OVERHEAD, cell)


IDLE_SLOT = UpstreamSlotPayload(DEFAULT_OVERHEAD, IDLE_CELL)


def synthetic_data_cell(ont_id: int, seq: int) -> bytes:
    """Placeholder user cell: VPI = ONT id, payload carries a sequence number."""
    header = bytes([0x00, ont_id & 0xFF, 0x00, 0x20, 0x00])
    return header + struct.pack(">Q", seq & 0xFFFFFFFFFFFFFFFF) + bytes(CELL_BYTES - 13)


def encode_upstream_slot(payload: UpstreamSlotPayload) -> bytes:
    if len(payload.overhead) != 3:
        raise FrameError(f"overhead is {len(payload.overhead)} bytes, expected 3")
    if len(payload.cell) != CELL_BYTES:
        raise FrameError(f"cell is {len(payload.cell)} bytes, expected 53")
    return bytes(payload.overhead) + bytes(payload.cell)


def decode_upstream_slot(data: bytes) -> UpstreamSlotPayload:
    if len(data) != SLOT_BYTES:
        raise FrameError(f"upstream slot is {len(data)} bytes, expected 56")
    return UpstreamSlotPayload(bytes(data[:3]), bytes(data[3:]))


# Hex dumps for golden vectors: "OOOOOOOO  xx xx ... xx", 16 bytes per line.

def to_hexdump(data: bytes) -> str:
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off:off + 16]
        lines.append(f"{off:08x}  " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines) + "\n"


def from_hexdump(text: str) -> bytes:
    out = bytearray()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        offset, _, rest = line.partition(" ")
        if int(offset, 16) != len(out):
            raise FrameError(f"hexdump line {lineno}: offset {offset} out of sequence")
        out.extend(bytes.fromhex(rest))
    return bytes(out)
