"""End-to-end decode of field-coded pictures (hand-assembled bitstream).

The stream holds one frame coded as two field pictures: an intra top field
and a P bottom field that predicts, with a zero vector, from the opposite
parity of its own frame, i.e. the just-decoded top field.
"""

import numpy as np

from m2vscope.decoder import decode_elementary_stream
from m2vscope.fixtures import BitWriter
from m2vscope.vlc import encode_dc_differential, encode_eob


def _sequence(w_bits, width, height):
    w_bits.start_code(0xB3)
    w_bits.write_bits(width, 12)
    w_bits.write_bits(height, 12)
    w_bits.write_bits(1, 4)
    w_bits.write_bits(3, 4)
    w_bits.write_bits(2500, 18)
    w_bits.write_bits(1, 1)
    w_bits.write_bits(20, 10)
    w_bits.write_bits(0, 1)
    w_bits.write_bits(0, 1)
    w_bits.write_bits(0, 1)
    w_bits.start_code(0xB5)
    w_bits.write_bits(0b0001, 4)
    w_bits.write_bits(0x48, 8)
    w_bits.write_bits(0, 1)           # interlaced sequence
    w_bits.write_bits(0b01, 2)
    w_bits.write_bits(0, 2)
    w_bits.write_bits(0, 2)
    w_bits.write_bits(0, 12)
    w_bits.write_bits(1, 1)
    w_bits.write_bits(0, 8)
    w_bits.write_bits(0, 1)
    w_bits.write_bits(0, 2)
    w_bits.write_bits(0, 5)


def _field_picture_headers(w, coding_type, structure, f_code=15):
    w.start_code(0x00)
    w.write_bits(0, 10)
    w.write_bits(coding_type, 3)
    w.write_bits(0xFFFF, 16)
    if coding_type == 2:
        w.write_bits(0, 1)
        w.write_bits(7, 3)
    w.write_bits(0, 1)
    w.start_code(0xB5)
    w.write_bits(0b1000, 4)
    for value in (f_code, f_code, 15, 15):
        w.write_bits(value, 4)
    w.write_bits(0, 2)                # intra_dc_precision 8
    w.write_bits(structure, 2)        # 1 = top field, 2 = bottom field
    w.write_bits(0, 1)
    w.write_bits(0, 1)                # frame_pred_frame_dct (0 in fields)
    w.write_bits(0, 1)
    w.write_bits(0, 1)
    w.write_bits(0, 1)
    w.write_bits(0, 1)
    w.write_bits(0, 1)
    w.write_bits(0, 1)
    w.write_bits(0, 1)                # progressive_frame = 0
    w.write_bits(0, 1)


def _intra_field_slice(w, mb_cols, luma):
    w.start_code(0x01)
    w.write_bits(8, 5)
    w.write_bits(0, 1)
    dc_pred = [128, 128, 128]
    for _ in range(mb_cols):
        w.write_code("1")             # increment 1
        w.write_code("1")             # intra
        for block in range(6):
            component = "luma" if block < 4 else "chroma"
            target = luma if block < 4 else 128
            index = 0 if block < 4 else block - 3
            w.write_code(encode_dc_differential(target - dc_pred[index],
                                                component))
            dc_pred[index] = target
            w.write_code(encode_eob("b14"))
    w.byte_align()


def _p_field_slice(w, mb_cols, field_select):
    w.start_code(0x01)
    w.write_bits(8, 5)
    w.write_bits(0, 1)
    for _ in range(mb_cols):
        w.write_code("1")             # increment 1
        w.write_code("001")           # MC, not coded
        w.write_bits(0b01, 2)         # field_motion_type: field prediction
        w.write_bits(field_select, 1)
        w.write_code("1")             # horizontal motion code 0
        w.write_code("1")             # vertical motion code 0
    w.byte_align()


def build_field_pair_stream(width=32, height=32, top_luma=80):
    w = BitWriter()
    _sequence(w, width, height)
    # top field: intra, flat top_luma
    _field_picture_headers(w, coding_type=1, structure=1)
    _intra_field_slice(w, width // 16, top_luma)
    # bottom field: P, zero vector, predicting from the opposite parity
    # (field_select 0 = top field of the same, in-progress frame)
    _field_picture_headers(w, coding_type=2, structure=2, f_code=1)
    _p_field_slice(w, width // 16, field_select=0)
    w.start_code(0xB7)
    return w.data()


def test_field_pair_assembles_one_frame():
    stream = build_field_pair_stream(top_luma=80)
    result = decode_elementary_stream(stream, tolerant=False)
    assert len(result.pictures) == 1
    frame = result.pictures[0]
    assert not frame.progressive
    # the bottom field copied the top field, so the whole frame is flat
    assert np.unique(frame.y_plane).tolist() == [80]
    assert np.unique(frame.cb_plane).tolist() == [128]


def test_field_pair_accounts_as_one_frame():
    stream = build_field_pair_stream()
    result = decode_elementary_stream(stream, tolerant=False)
    assert len(result.report.per_frame) == 1
    first_picture = stream.find(b"\x00\x00\x01\x00") * 8
    sequence_end = stream.rfind(b"\x00\x00\x01\xb7") * 8
    assert result.report.per_frame[0].bits == sequence_end - first_picture
