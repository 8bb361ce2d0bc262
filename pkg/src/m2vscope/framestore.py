"""Reference-frame lifecycle and decode-order to display-order management.

I and P pictures become reference frames: committing one releases the
previous backward reference for display and shifts it to the forward slot.
B pictures display immediately and never become references.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryMismatch
from .headers import PictureType

log = logging.getLogger(__name__)


@dataclass
class FramePicture:
    y_plane: np.ndarray
    cb_plane: np.ndarray
    cr_plane: np.ndarray
    temporal_reference: int
    coding_type: PictureType
    progressive: bool = True
    decode_index: int = 0
    concealed_slices: int = 0

    @classmethod
    def blank(cls, seq, temporal_reference: int, coding_type: PictureType,
              decode_index: int = 0, fill: int = 128) -> "FramePicture":
        h, w = 16 * seq.mb_height, 16 * seq.mb_width
        return cls(y_plane=np.full((h, w), fill, dtype=np.uint8),
                   cb_plane=np.full((h // 2, w // 2), fill, dtype=np.uint8),
                   cr_plane=np.full((h // 2, w // 2), fill, dtype=np.uint8),
                   temporal_reference=temporal_reference,
                   coding_type=coding_type, decode_index=decode_index)

    @property
    def planes(self):
        return self.y_plane, self.cb_plane, self.cr_plane

    @property
    def label(self) -> str:
        return f"{self.coding_type.name}{self.temporal_reference}"


@dataclass
class ReferencePair:
    forward: FramePicture | None = None
    backward: FramePicture | None = None


@dataclass
class FrameStore:
    """Single-owner state machine fed in decode order."""

    refs: ReferencePair = field(default_factory=ReferencePair)
    dropped_pictures: int = 0

    def commit_picture(self, picture: FramePicture) -> list[FramePicture]:
        """Accept a reconstructed picture; return any now display-ready ones."""
        if picture.coding_type is PictureType.B:
            return [picture]
        ready = []
        if self.refs.backward is not None:
            ready.append(self.refs.backward)
        self.refs.forward = self.refs.backward
        self.refs.backward = picture
        return ready

    def drop_broken_b(self, label: str) -> None:
        """Record a B picture dropped for missing references (open GOP)."""
        log.warning("dropping B picture %s: missing reference", label)
        self.dropped_pictures += 1

    def flush(self) -> list[FramePicture]:
        """Emit the held backward reference; the store is empty afterward."""
        ready = [] if self.refs.backward is None else [self.refs.backward]
        self.refs = ReferencePair()
        return ready


def write_field_or_frame(plane: np.ndarray, which: str, rows: np.ndarray) -> None:
    """Write pixel rows into a plane as a whole frame or as one field.

    Interlaced writes land the top field on even rows and the bottom field
    on odd rows.
    """
    rows = np.asarray(rows)
    if which == "whole":
        if rows.shape != plane.shape:
            raise GeometryMismatch(f"frame write {rows.shape} into {plane.shape}")
        plane[:] = rows
        return
    if which not in ("top", "bottom"):
        raise ValueError(f"unknown field {which!r}")
    target = plane[0::2] if which == "top" else plane[1::2]
    if rows.shape != target.shape:
        raise GeometryMismatch(f"{which} field write {rows.shape} "
                               f"into {target.shape}")
    target[:] = rows
