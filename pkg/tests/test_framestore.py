import numpy as np
import pytest

from m2vscope.errors import GeometryMismatch
from m2vscope.framestore import (FramePicture, FrameStore, ReferencePair,
                                 write_field_or_frame)
from m2vscope.headers import PictureType


def picture(label_type, tref, index=0):
    plane = np.zeros((16, 16), dtype=np.uint8)
    return FramePicture(y_plane=plane, cb_plane=plane[:8, :8],
                        cr_plane=plane[:8, :8], temporal_reference=tref,
                        coding_type=label_type, decode_index=index)


def test_reorder_trace_i_p_b():
    store = FrameStore()
    i0 = picture(PictureType.I, 0, 0)
    p1 = picture(PictureType.P, 2, 1)
    b2 = picture(PictureType.B, 1, 2)
    emitted = []
    emitted += store.commit_picture(i0)
    assert emitted == []
    emitted += store.commit_picture(p1)
    assert emitted == [i0]
    emitted += store.commit_picture(b2)
    assert emitted == [i0, b2]
    emitted += store.flush()
    assert emitted == [i0, b2, p1]
    assert [p.label for p in emitted] == ["I0", "B1", "P2"]


def test_single_picture_emitted_only_at_flush():
    store = FrameStore()
    i0 = picture(PictureType.I, 0)
    assert store.commit_picture(i0) == []
    assert store.flush() == [i0]


def test_flush_is_idempotent():
    store = FrameStore()
    store.commit_picture(picture(PictureType.P, 0))
    assert len(store.flush()) == 1
    assert store.flush() == []


def test_every_picture_emitted_exactly_once():
    store = FrameStore()
    decode_order = [(PictureType.I, 0), (PictureType.P, 3),
                    (PictureType.B, 1), (PictureType.B, 2),
                    (PictureType.P, 6), (PictureType.B, 4),
                    (PictureType.B, 5)]
    pictures = [picture(t, tref, i) for i, (t, tref) in enumerate(decode_order)]
    emitted = []
    for p in pictures:
        emitted += store.commit_picture(p)
    emitted += store.flush()
    assert len(emitted) == len(pictures)
    assert {id(p) for p in emitted} == {id(p) for p in pictures}
    assert [p.temporal_reference for p in emitted] == sorted(
        p.temporal_reference for p in pictures)


def test_references_never_alias():
    store = FrameStore()
    for i in range(4):
        store.commit_picture(picture(PictureType.P, i, i))
        if store.refs.forward is not None:
            assert store.refs.forward is not store.refs.backward


def test_dropped_b_counter():
    store = FrameStore()
    store.drop_broken_b("B1")
    assert store.dropped_pictures == 1


def test_write_whole_frame():
    plane = np.zeros((4, 4), dtype=np.uint8)
    rows = np.arange(16, dtype=np.uint8).reshape(4, 4)
    write_field_or_frame(plane, "whole", rows)
    assert (plane == rows).all()


def test_write_fields_interleave():
    plane = np.zeros((4, 4), dtype=np.uint8)
    top = np.array([[1] * 4, [2] * 4], dtype=np.uint8)
    bottom = np.array([[3] * 4, [4] * 4], dtype=np.uint8)
    write_field_or_frame(plane, "top", top)
    write_field_or_frame(plane, "bottom", bottom)
    assert (plane[0] == 1).all() and (plane[2] == 2).all()
    assert (plane[1] == 3).all() and (plane[3] == 4).all()


def test_geometry_mismatch_rejected():
    plane = np.zeros((4, 4), dtype=np.uint8)
    with pytest.raises(GeometryMismatch):
        write_field_or_frame(plane, "whole", np.zeros((2, 4), dtype=np.uint8))
    with pytest.raises(GeometryMismatch):
        write_field_or_frame(plane, "top", np.zeros((3, 4), dtype=np.uint8))
