from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ponsim.core import FRAME_BYTES, FRAME_TICKS, SLOTS_PER_FRAME
from ponsim.frames import (
    DEFAULT_OVERHEAD, IDLE_CELL, IDLE_MESSAGE, DownstreamFrame, FrameError, Grant,
    GrantType, MessageKind, PloamCell, PloamMessage, UNASSIGNED, UpstreamSlotPayload,
    CellKind, data_grant, decode_downstream_frame, decode_upstream_slot,
    encode_downstream_frame, encode_upstream_slot, from_hexdump, grant_for_slot,
    ploam_grant, slot_grant_field, synthetic_data_cell, to_hexdump,
)

VECTORS = Path(__file__).parent / "vectors"

grants = st.one_of(
    st.just(UNASSIGNED),
    st.integers(1, 32).map(data_grant),
    st.integers(33, 64).map(ploam_grant),
)
messages = st.builds(
    PloamMessage,
    st.sampled_from(list(MessageKind)),
    st.integers(0, 255),
    st.integers(0, 2**32 - 1),
)
cells = st.binary(min_size=53, max_size=53).filter(lambda c: c[:5] != b"\x00\x00\x00\x09\x00")
frames = st.builds(
    DownstreamFrame.from_grants,
    st.lists(grants, min_size=53, max_size=53),
    st.tuples(messages, messages),
    st.one_of(st.none(), st.lists(cells, min_size=54, max_size=54)),
)
slots = st.builds(UpstreamSlotPayload, st.binary(min_size=3, max_size=3),
                  st.binary(min_size=53, max_size=53))


def test_frame_sizes_are_exact():
    frame = DownstreamFrame.from_grants([UNASSIGNED] * 53)
    assert len(encode_downstream_frame(frame)) == 2968 == FRAME_BYTES
    assert len(encode_upstream_slot(UpstreamSlotPayload())) * SLOTS_PER_FRAME == 2968
    assert FRAME_TICKS == oracles.frame_ticks() == 23744


def test_grant_byte_matches_oracle():
    assert data_grant(5).to_byte() == oracles.grant_byte("data", 5) == 0x45
    assert ploam_grant(33).to_byte() == oracles.grant_byte("ploam", 33) == 0xA1
    assert UNASSIGNED.to_byte() == 0


def test_ploam_id_64_wraps_to_zero_on_the_wire():
    assert ploam_grant(64).to_byte() == 0x80
    assert Grant.from_byte(0x80) == ploam_grant(64)


def test_type_11_is_rejected():
    with pytest.raises(FrameError, match="type 11"):
        Grant.from_byte(0xC1)


def test_truncated_frame_is_rejected():
    raw = encode_downstream_frame(DownstreamFrame.from_grants([UNASSIGNED] * 53))
    with pytest.raises(FrameError, match="2967"):
        decode_downstream_frame(raw[:-1])


def test_missing_ploam_header_is_rejected():
    raw = bytearray(encode_downstream_frame(DownstreamFrame.from_grants([UNASSIGNED] * 53)))
    raw[28 * 53 + 3] = 0x01
    with pytest.raises(FrameError):
        decode_downstream_frame(bytes(raw))


def test_wrong_grant_count_is_rejected():
    with pytest.raises(FrameError):
        DownstreamFrame.from_grants([UNASSIGNED] * 52)
    with pytest.raises(FrameError):
        PloamCell("second", (UNASSIGNED,) * 27).encode()


def test_unknown_message_kind_is_rejected():
    with pytest.raises(FrameError, match="kind 9"):
        PloamMessage.decode(bytes([9]) + bytes(11))


def test_message_layout():
    msg = PloamMessage.set_equalization_delay(4, 0x01020304)
    assert msg.encode() == oracles.message_bytes("set_eq", 4, 0x01020304)
    assert PloamMessage(MessageKind.BROADCAST).addressing == "broadcast"
    assert msg.addressing == ("directed", 4)
    assert IDLE_MESSAGE.addressing == "idle"


def test_every_frame_exposes_53_grants():
    frame = DownstreamFrame.from_grants([data_grant(1)] * 53)
    assert len(frame.first_ploam.grants) == 27
    assert len(frame.second_ploam.grants) == 26
    assert len(frame.grants()) == 53


def test_slot_grant_field_boundaries():
    assert slot_grant_field(0) == ("first", 0)
    assert slot_grant_field(26) == ("first", 26)
    assert slot_grant_field(27) == ("second", 0)
    assert slot_grant_field(52) == ("second", 25)
    with pytest.raises(IndexError):
        slot_grant_field(53)


@settings(max_examples=200, deadline=None)
@given(st.lists(grants, min_size=53, max_size=53))
def test_grant_for_slot_is_a_bijection(gs):
    frame = DownstreamFrame.from_grants(gs)
    seen = set()
    for k in range(53):
        pos, idx = slot_grant_field(k)
        seen.add((pos, idx))
        cell = frame.first_ploam if pos == "first" else frame.second_ploam
        assert grant_for_slot(frame, k) == cell.grants[idx] == gs[k]
    assert len(seen) == 53


def test_runs_by_grant_merges_consecutive_slots():
    gs = [data_grant(1)] * 3 + [data_grant(2)] + [data_grant(1)] * 2 + [UNASSIGNED] * 47
    runs = DownstreamFrame.from_grants(gs).runs_by_grant
    assert runs[data_grant(1).to_byte()] == ((0, 3), (4, 2))
    assert runs[data_grant(2).to_byte()] == ((3, 1),)
    assert 0 not in runs


@settings(max_examples=300, deadline=None)
@given(frames)
def test_downstream_round_trip(frame):
    assert decode_downstream_frame(encode_downstream_frame(frame)) == frame


@settings(max_examples=300, deadline=None)
@given(slots)
def test_upstream_round_trip(slot):
    assert decode_upstream_slot(encode_upstream_slot(slot)) == slot


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=1, max_size=4000))
def test_hexdump_round_trip(data):
    assert from_hexdump(to_hexdump(data)) == data


def test_hexdump_rejects_gaps():
    with pytest.raises(FrameError, match="out of sequence"):
        from_hexdump("00000000  00 01\n00000010  02\n")


def test_upstream_cell_kinds():
    assert UpstreamSlotPayload.idle().kind is CellKind.IDLE
    assert UpstreamSlotPayload.ploam_response(3).kind is CellKind.PLOAM
    assert UpstreamSlotPayload.data(synthetic_data_cell(3, 1)).kind is CellKind.DATA
    assert UpstreamSlotPayload().overhead == DEFAULT_OVERHEAD
    assert UpstreamSlotPayload().cell == IDLE_CELL == oracles.IDLE_CELL


def _read(name):
    return from_hexdump((VECTORS / name).read_text())


def test_golden_idle_frame():
    frame = DownstreamFrame.from_grants([UNASSIGNED] * 53)
    assert encode_downstream_frame(frame) == _read("downstream_idle.hex")


def test_golden_two_ont_frame():
    gs = [data_grant(1) if k % 2 == 0 else data_grant(2) for k in range(53)]
    frame = DownstreamFrame.from_grants(
        gs, (PloamMessage.assign_grant_ids(2, 2, 34), IDLE_MESSAGE))
    raw = _read("downstream_two_onts.hex")
    assert encode_downstream_frame(frame) == raw
    assert decode_downstream_frame(raw) == frame


def test_golden_mixed_frame():
    gs = ([data_grant(1)] * 10 + [ploam_grant(33)] + [data_grant(32)] * 16
          + [UNASSIGNED] * 5 + [ploam_grant(64)] + [data_grant(5)] * 20)
    frame = DownstreamFrame.from_grants(
        gs, (PloamMessage.ranging_grant(3), PloamMessage.set_equalization_delay(1, 30326)))
    raw = _read("downstream_mixed.hex")
    assert encode_downstream_frame(frame) == raw
    decoded = decode_downstream_frame(raw)
    assert decoded == frame
    assert grant_for_slot(decoded, 32).grant_type is GrantType.PLOAM
    assert grant_for_slot(decoded, 32).grant_id == 64


def test_golden_upstream_slots():
    assert encode_upstream_slot(UpstreamSlotPayload.idle()) == _read("upstream_idle.hex")
    assert (encode_upstream_slot(UpstreamSlotPayload.ploam_response(7))
            == _read("upstream_ploam_response.hex"))
    assert (encode_upstream_slot(UpstreamSlotPayload.data(synthetic_data_cell(3, 258)))
            == _read("upstream_data.hex"))


def test_golden_files_agree_with_byte_oracle():
    """The stored vectors are exactly what the independent byte assembler produces."""
    assert _read("downstream_idle.hex") == oracles.downstream_frame_bytes([0] * 53)
    assert to_hexdump(_read("upstream_idle.hex")) == (VECTORS / "upstream_idle.hex").read_text()
