"""
Build one downstream frame for a two-ONT schedule and look at the bytes.

Run:  python demos/frame_anatomy.py
"""

from ponsim.frames import (DownstreamFrame, PloamMessage, encode_downstream_frame,
                           grant_for_slot, slot_grant_field, to_hexdump)
from ponsim.olt import OntRecord, build_schedule

records = [OntRecord(1, 1, 33, ranged=True, announced=True),
           OntRecord(2, 2, 34, ranged=True, announced=True)]

for frame_no in (0, 1):
    sched = build_schedule(records, frame_no, poll_interval=0)
    print(f"frame {frame_no}: ONT 1 gets {sched.data_counts()[1]} slots, "
          f"ONT 2 gets {sched.data_counts()[2]}")

sched = build_schedule(records, 0, poll_interval=0)
frame = DownstreamFrame.from_grants(
    sched.grants, (PloamMessage.set_equalization_delay(2, 15552), PloamMessage()))
raw = encode_downstream_frame(frame)
print(f"\nencoded frame: {len(raw)} bytes ({len(raw) * 8} bit-times)\n")

print("first PLOAM cell (header, position mark, 27 grants, message):")
print(to_hexdump(raw[:53]))

for slot in (0, 26, 27, 52):
    pos, idx = slot_grant_field(slot)
    g = grant_for_slot(frame, slot)
    print(f"upstream slot {slot:2d} <- {pos} PLOAM grant field {idx:2d}: "
          f"{g.grant_type.name} id {g.grant_id} (byte {g.to_byte():#04x})")
