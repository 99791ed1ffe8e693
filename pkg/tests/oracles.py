"""
Reference calculations written independently of the package.

Nothing here imports ponsim.  Each oracle recomputes a value from first
principles (decimal arithmetic, brute force, or byte-by-byte assembly) so
the tests can compare the implementation against it.
"""

from __future__ import annotations

import math
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

LINE_RATE = Decimal(155_520_000)
SLOT_BYTES = 56
CELL_BYTES = 53
SLOTS = 53
CELLS = 56


def ticks(seconds: Decimal) -> int:
    return int((seconds * LINE_RATE).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def propagation_ticks(length_m, ns_per_m=5) -> int:
    """One-way fiber delay in line-rate bit periods, rounded half-up."""
    seconds = Decimal(str(length_m)) * Decimal(str(ns_per_m)) / Decimal(10) ** 9
    return ticks(seconds)


def frame_ticks() -> int:
    return SLOTS * SLOT_BYTES * 8


def frame_seconds() -> Fraction:
    return Fraction(frame_ticks(), 155_520_000)


def throughput_mbps(cells_per_frame: int) -> float:
    """Cell-level throughput when ``cells_per_frame`` 53-byte cells go up every frame."""
    return float(Fraction(cells_per_frame * CELL_BYTES * 8) / frame_seconds() / 10**6)


def largest_remainder(weights: dict, frame_no: int, total: int = SLOTS) -> dict:
    """
    Hamilton apportionment of ``total`` slots.  Ties between equal fractional
    remainders are broken by position in ascending id order, counted from
    ``frame_no mod n``.
    """
    if not weights:
        return {}
    ids = sorted(weights)
    n = len(ids)
    wsum = sum(weights.values())
    quota = {i: Fraction(total * weights[i], wsum) for i in ids}
    alloc = {i: math.floor(quota[i]) for i in ids}
    spare = total - sum(alloc.values())
    start = frame_no % n
    rotated = ids[start:] + ids[:start]
    tie_rank = {i: r for r, i in enumerate(rotated)}
    ranked = sorted(ids, key=lambda i: (-(quota[i] - alloc[i]), tie_rank[i]))
    for i in ranked[:spare]:
        alloc[i] += 1
    return alloc


def splitter_loss_db(ports: int, excess_db: float) -> float:
    return 10 * math.log10(ports) + excess_db


def awg_threshold_temperature(reference_c, coefficient_nm_per_c, spacing_nm, guard_nm):
    """Temperatures (low, high) at which |drift| reaches spacing/2 - guard, exactly."""
    margin = Fraction(str(spacing_nm)) / 2 - Fraction(str(guard_nm))
    step = margin / abs(Fraction(str(coefficient_nm_per_c)))
    ref = Fraction(str(reference_c))
    return ref - step, ref + step


# Byte-level frame assembly

GRANT_TYPE_BITS = {"unassigned": 0b00, "data": 0b01, "ploam": 0b10}
MESSAGE_KIND = {"idle": 0, "broadcast": 1, "assign": 2, "ranging": 3, "set_eq": 4}


def grant_byte(kind: str, grant_id: int = 0) -> int:
    if kind == "unassigned":
        return 0
    return (GRANT_TYPE_BITS[kind] << 6) | (grant_id & 0x3F)


def message_bytes(kind: str = "idle", ont_id: int = 0, argument: int = 0) -> bytes:
    out = bytearray(12)
    out[0] = MESSAGE_KIND[kind]
    out[1] = ont_id
    out[2:6] = argument.to_bytes(4, "big")
    return bytes(out)


def ploam_cell_bytes(position: int, grant_bytes, message: bytes) -> bytes:
    """Position 1 = first PLOAM (27 grants), 2 = second (26 grants)."""
    cell = bytearray(CELL_BYTES)
    cell[0:5] = b"\x00\x00\x00\x09\x00"
    cell[5] = position
    for i, g in enumerate(grant_bytes):
        cell[6 + i] = g
    cell[33:45] = message
    return bytes(cell)


IDLE_CELL = b"\x00\x00\x00\x01\x52" + b"\x6a" * 48


def downstream_frame_bytes(grant_bytes, messages=(None, None), payload=None) -> bytes:
    """Assemble a 2968-byte downstream frame from 53 grant bytes."""
    assert len(grant_bytes) == SLOTS
    m1 = messages[0] or message_bytes()
    m2 = messages[1] or message_bytes()
    body = list(payload) if payload is not None else [IDLE_CELL] * 54
    cells = [ploam_cell_bytes(1, grant_bytes[:27], m1)]
    cells += body[:27]
    cells.append(ploam_cell_bytes(2, grant_bytes[27:], m2))
    cells += body[27:]
    assert len(cells) == CELLS
    return b"".join(cells)


def upstream_slot_bytes(cell: bytes, overhead: bytes = b"\xaa\xaa\x85") -> bytes:
    return overhead + cell


def hexdump(data: bytes) -> str:
    lines = []
    for off in range(0, len(data), 16):
        chunk = data[off:off + 16]
        lines.append(f"{off:08x}  " + " ".join(f"{b:02x}" for b in chunk))
    return "\n".join(lines) + "\n"
