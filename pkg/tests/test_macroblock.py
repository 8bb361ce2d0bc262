import numpy as np
import pytest

from conftest import cursor_from_bits
from m2vscope.errors import CoefficientOverflow
from m2vscope.fixtures import BitWriter
from m2vscope.headers import PictureType
from m2vscope.macroblock import PredictorState, decode_block, decode_macroblock
from m2vscope.motion import MotionVector, PredictionMode
from m2vscope.vlc import encode_dc_differential, encode_eob, encode_run_level
from test_headers import (pack_picture, pack_picture_coding_extension,
                          pack_sequence_header, pack_slice_payload)
from m2vscope.headers import (parse_extensions, parse_picture_header,
                              parse_sequence_header, parse_slice_header)


def make_picture(coding_type=1, **ext_kwargs):
    pic = parse_picture_header(pack_picture(coding_type=coding_type))
    parse_extensions(pack_picture_coding_extension(**ext_kwargs), "picture",
                     pic=pic)
    return pic


def make_state(precision=8):
    state = PredictorState(intra_dc_precision=precision)
    state.reset_dc()
    return state


def test_intra_block_dc_delta_zero_keeps_predictor():
    pic = make_picture()
    state = make_state()
    bits = encode_dc_differential(0, "luma") + encode_eob("b14")
    block = decode_block(cursor_from_bits(bits, pad="1"), 0, True, pic, state)
    assert block.dc == 128
    assert block.run_levels == []


def test_intra_dc_predictor_chains_and_resets():
    pic = make_picture()
    state = make_state()
    bits = encode_dc_differential(-28, "luma") + encode_eob("b14")
    block = decode_block(cursor_from_bits(bits, pad="1"), 0, True, pic, state)
    assert block.dc == 100
    bits = encode_dc_differential(10, "luma") + encode_eob("b14")
    block = decode_block(cursor_from_bits(bits, pad="1"), 1, True, pic, state)
    assert block.dc == 110
    state.reset_dc()
    assert state.dc == [128, 128, 128]


def test_dc_predictor_reset_value_tracks_precision():
    state = make_state(precision=10)
    assert state.dc == [512, 512, 512]


def test_dc_replay_is_deterministic():
    pic = make_picture()
    deltas = [-28, 10, -5, 3]
    results = []
    for _ in range(2):
        state = make_state()
        values = []
        for delta in deltas:
            bits = encode_dc_differential(delta, "luma") + encode_eob("b14")
            values.append(decode_block(cursor_from_bits(bits, pad="1"),
                                       0, True, pic, state).dc)
        results.append(values)
    assert results[0] == results[1] == [100, 110, 105, 108]


def test_non_intra_block_run_levels():
    pic = make_picture(coding_type=2)
    state = make_state()
    bits = encode_run_level(2, 5, "b14", True) + encode_eob("b14")
    block = decode_block(cursor_from_bits(bits, pad="1"), 0, False, pic, state)
    assert [(rl.run, rl.level) for rl in block.run_levels] == [(2, 5)]


def test_coefficient_overflow_guard():
    pic = make_picture(coding_type=2)
    state = make_state()
    bits = (encode_run_level(40, 1, "b14", True)
            + encode_run_level(40, 1, "b14", False))
    with pytest.raises(CoefficientOverflow):
        decode_block(cursor_from_bits(bits, pad="1"), 0, False, pic, state)


def _slice_context(coding_type, seq=None, **ext_kwargs):
    seq = seq or parse_sequence_header(pack_sequence_header(width=64, height=48))
    pic = make_picture(coding_type=coding_type, **ext_kwargs)
    slc = parse_slice_header(pack_slice_payload(8), 0x01, pic)
    state = PredictorState(intra_dc_precision=pic.intra_dc_precision)
    from m2vscope.macroblock import start_slice
    start_slice(state, seq, slc)
    return seq, pic, slc, state


def _intra_mb_bits():
    w = ""
    w += "1"                       # increment 1
    w += "1"                       # mb type: intra
    for block in range(6):
        component = "luma" if block < 4 else "chroma"
        w += encode_dc_differential(0, component)
        w += encode_eob("b14")
    return w


def test_intra_macroblock_has_all_blocks():
    seq, pic, slc, state = _slice_context(1)
    recs = decode_macroblock(cursor_from_bits(_intra_mb_bits(), pad="0"),
                             seq, pic, slc, state)
    assert len(recs) == 1
    rec = recs[0]
    assert rec.mb_type.intra
    assert rec.coded_block_pattern == 0b111111
    assert all(b is not None for b in rec.blocks)


def test_p_skip_synthesis_counts_and_semantics():
    seq, pic, slc, state = _slice_context(2)
    bits = "1" + "001" + "11"           # MB0: MC not coded, zero vector
    bits += "0011" + "001" + "11"       # increment 4 -> 3 skipped, then coded
    cur = cursor_from_bits(bits, pad="0")
    recs = decode_macroblock(cur, seq, pic, slc, state)
    assert [r.address for r in recs] == [0]
    recs = decode_macroblock(cur, seq, pic, slc, state)
    assert [r.address for r in recs] == [1, 2, 3, 4]
    skipped = [r for r in recs if r.skipped]
    assert len(skipped) == 3
    for rec in skipped:
        assert rec.motion_mode is PredictionMode.FRAME
        assert rec.motion[0][0][0] == MotionVector(0, 0)
        assert rec.coded_block_pattern == 0


def test_b_skip_repeats_previous_prediction():
    seq, pic, slc, state = _slice_context(3)
    # MB0: forward+backward, both vectors zero ("10" = fb type)
    bits = "1" + "10" + "11" + "11"
    # MB2 after one skipped: increment 2 ("011"), fwd only ("0010"), zero mv
    bits += "011" + "0010" + "11"
    cur = cursor_from_bits(bits, pad="0")
    first = decode_macroblock(cur, seq, pic, slc, state)
    assert len(first) == 1 and set(first[0].motion) == {0, 1}
    second = decode_macroblock(cur, seq, pic, slc, state)
    assert [r.address for r in second] == [1, 2]
    skip = second[0]
    assert skip.skipped
    assert set(skip.motion) == {0, 1}       # repeats both directions
    assert skip.motion[0][0][0] == MotionVector(0, 0)


def test_quant_override_updates_state():
    seq, pic, slc, state = _slice_context(1)
    bits = "1" + "01" + "01010"          # intra+quant, scale code 10
    for block in range(6):
        component = "luma" if block < 4 else "chroma"
        bits += encode_dc_differential(0, component) + encode_eob("b14")
    recs = decode_macroblock(cursor_from_bits(bits, pad="0"),
                             seq, pic, slc, state)
    assert recs[0].quantiser_scale == 20
    assert state.quantiser_scale == 20


def test_field_dct_type_flag_read_when_enabled():
    seq, pic, slc, state = _slice_context(1, frame_pred=False)
    bits = "1" + "1" + "1"               # increment, intra, dct_type=1
    for block in range(6):
        component = "luma" if block < 4 else "chroma"
        bits += encode_dc_differential(0, component) + encode_eob("b14")
    recs = decode_macroblock(cursor_from_bits(bits, pad="0"),
                             seq, pic, slc, state)
    assert recs[0].dct_type_field
