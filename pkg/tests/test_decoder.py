import numpy as np
import pytest

import m2vscope.decoder as decoder_module
from m2vscope.decoder import decode_elementary_stream, select_reference
from m2vscope.errors import (DecodeError, MalformedStream, MissingReference,
                             UnsupportedStream)
from m2vscope.fixtures import (AverageB, BitWriter, CheckerboardIntra,
                               FixtureSpec, FlatIntra, MoveP, corrupt_slice,
                               generate)
from m2vscope.framestore import FramePicture, ReferencePair
from m2vscope.headers import PictureType
from test_headers import pack_picture
from m2vscope.headers import parse_picture_header


STATIC_SPEC = FixtureSpec(64, 48, [CheckerboardIntra(90, 170), MoveP((0, 0))])


def test_tolerant_conceals_corrupted_slice_and_matches_clean_decode():
    fixture = generate(STATIC_SPEC)
    corrupted = corrupt_slice(fixture.stream, picture_index=1, row=1)
    clean = decode_elementary_stream(fixture.stream, tolerant=False)
    result = decode_elementary_stream(corrupted, tolerant=True)
    assert result.report.concealed_slices == 1
    # zero-motion concealment of a static scene reproduces the clean pixels
    for got, want in zip(result.pictures, clean.pictures):
        assert np.array_equal(got.y_plane, want.y_plane)
        assert np.array_equal(got.cb_plane, want.cb_plane)


def test_conceal_select_mv_is_exercised(monkeypatch):
    fixture = generate(STATIC_SPEC)
    corrupted = corrupt_slice(fixture.stream, picture_index=1, row=1)
    calls = []
    original = decoder_module.conceal_select_mv

    def spy(candidates, make_prediction, **kwargs):
        calls.append((list(candidates), kwargs))
        return original(candidates, make_prediction, **kwargs)

    monkeypatch.setattr(decoder_module, "conceal_select_mv", spy)
    decode_elementary_stream(corrupted, tolerant=True)
    assert calls
    # edge pixels from the rows above and from the reference below are in play
    assert any(kw["top_row"] is not None for _, kw in calls)
    assert any(kw["bottom_row"] is not None for _, kw in calls)


def test_strict_mode_raises_on_corruption():
    fixture = generate(STATIC_SPEC)
    corrupted = corrupt_slice(fixture.stream, picture_index=1, row=1)
    with pytest.raises(DecodeError):
        decode_elementary_stream(corrupted, tolerant=False)


def test_accounting_survives_concealment():
    fixture = generate(STATIC_SPEC)
    corrupted = corrupt_slice(fixture.stream, picture_index=1, row=1)
    result = decode_elementary_stream(corrupted, tolerant=True)
    assert [s.bits for s in result.report.per_frame] == fixture.picture_bits


def test_max_frames_caps_decoding():
    spec = FixtureSpec(32, 32, [FlatIntra(80), FlatIntra(81), FlatIntra(82),
                                FlatIntra(83)])
    fixture = generate(spec)
    result = decode_elementary_stream(fixture.stream, max_frames=2)
    assert len(result.report.per_frame) == 2
    assert len(result.pictures) == 2


def test_truncated_stream_tolerant_vs_strict():
    fixture = generate(generate_spec_small())
    cut = fixture.stream[:len(fixture.stream) // 2]
    result = decode_elementary_stream(cut, tolerant=True)
    assert result.seq is not None
    with pytest.raises(DecodeError):
        decode_elementary_stream(cut, tolerant=False)


def generate_spec_small():
    return FixtureSpec(32, 32, [FlatIntra(90), FlatIntra(100)])


def test_stream_without_sequence_extension_rejected():
    fixture = generate(generate_spec_small())
    data = fixture.stream
    # drop the sequence extension (first 0x000001B5 unit, 10 bytes long)
    at = data.find(b"\x00\x00\x01\xb5")
    nxt = data.find(b"\x00\x00\x01", at + 4)
    stripped = data[:at] + data[nxt:]
    with pytest.raises(UnsupportedStream):
        decode_elementary_stream(stripped, tolerant=True)


def test_user_data_is_skipped():
    fixture = generate(generate_spec_small())
    data = fixture.stream
    at = data.find(b"\x00\x00\x01\x00")      # before the first picture
    user_data = b"\x00\x00\x01\xb2" + b"analyzer test payload"
    patched = data[:at] + user_data + data[at:]
    result = decode_elementary_stream(patched, tolerant=False)
    assert len(result.pictures) == 2


def test_no_start_codes_is_malformed():
    with pytest.raises(MalformedStream):
        decode_elementary_stream(b"\xff" * 100)


def test_b_without_references_is_dropped_with_warning():
    # Hand-build: sequence + B picture first (open GOP cut): decode order B
    spec = FixtureSpec(32, 32, [CheckerboardIntra(90, 170), MoveP((0, 0)),
                                AverageB()])
    fixture = generate(spec)
    data = fixture.stream
    # cut out everything between the sequence extension and the B picture:
    # find the third picture start code (the B)
    first_pic = data.find(b"\x00\x00\x01\x00")
    second_pic = data.find(b"\x00\x00\x01\x00", first_pic + 4)
    third_pic = data.find(b"\x00\x00\x01\x00", second_pic + 4)
    cut = data[:first_pic] + data[third_pic:]
    result = decode_elementary_stream(cut, tolerant=True)
    assert result.report.dropped_pictures == 1
    assert result.pictures == []


def test_geometry_change_mid_stream_rejected():
    fx_a = generate(FixtureSpec(32, 32, [FlatIntra(90)]))
    fx_b = generate(FixtureSpec(64, 48, [FlatIntra(90)]))
    end_a = fx_a.stream.rfind(b"\x00\x00\x01\xb7")
    combined = fx_a.stream[:end_a] + fx_b.stream
    with pytest.raises(UnsupportedStream):
        decode_elementary_stream(combined, tolerant=True)


def _ref_frame(label, fill):
    plane = np.full((32, 32), fill, dtype=np.uint8)
    return FramePicture(y_plane=plane, cb_plane=plane[:16, :16],
                        cr_plane=plane[:16, :16], temporal_reference=0,
                        coding_type=label)


def _pic_of_type(coding_type):
    return parse_picture_header(pack_picture(coding_type=coding_type))


def test_select_reference_p_forward():
    refs = ReferencePair(backward=_ref_frame(PictureType.I, 10))
    got = select_reference(_pic_of_type(2), 0, refs)
    assert got is refs.backward


def test_select_reference_b_directions():
    refs = ReferencePair(forward=_ref_frame(PictureType.I, 10),
                         backward=_ref_frame(PictureType.P, 20))
    pic = _pic_of_type(3)
    assert select_reference(pic, 0, refs) is refs.forward
    assert select_reference(pic, 1, refs) is refs.backward


def test_select_reference_missing_raises():
    with pytest.raises(MissingReference):
        select_reference(_pic_of_type(2), 0, ReferencePair())
    with pytest.raises(MissingReference):
        select_reference(_pic_of_type(3), 1, ReferencePair())


def test_select_reference_second_field_same_frame():
    refs = ReferencePair(backward=_ref_frame(PictureType.I, 10))
    current = _ref_frame(PictureType.P, 30)
    got = select_reference(_pic_of_type(2), 0, refs, second_field=True,
                           field_parity=1, field_select=0, current=current)
    assert got is current
    # same-parity select goes to the held reference instead
    got = select_reference(_pic_of_type(2), 0, refs, second_field=True,
                           field_parity=1, field_select=1, current=current)
    assert got is refs.backward
