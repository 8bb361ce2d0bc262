"""Sequence, GOP, picture, and slice header decoding.

Parsers are pure functions of the cursor position: the caller positions a
cursor just past a start-code byte and receives a populated dataclass.
Only MPEG-2 main-profile-style streams are in scope; a stream without a
sequence extension, or with a chroma format other than 4:2:0, is rejected
as unsupported rather than half-decoded.
"""

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import tables
from .bitio import BitCursor
from .errors import MalformedHeader, UnsupportedStream

#: Start-code byte assignments (ISO/IEC 13818-2 clause 6.2).
PICTURE_START = 0x00
SLICE_START_FIRST = 0x01
SLICE_START_LAST = 0xAF
USER_DATA_START = 0xB2
SEQUENCE_HEADER = 0xB3
EXTENSION_START = 0xB5
SEQUENCE_END = 0xB7
GROUP_START = 0xB8

FRAME_RATES = {1: Fraction(24000, 1001), 2: Fraction(24), 3: Fraction(25),
               4: Fraction(30000, 1001), 5: Fraction(30), 6: Fraction(50),
               7: Fraction(60000, 1001), 8: Fraction(60)}

#: f_code value meaning "no motion vector in this direction".
F_CODE_UNUSED = 15


class PictureType(enum.IntEnum):
    I = 1
    P = 2
    B = 3


class PictureStructure(enum.IntEnum):
    TOP_FIELD = 1
    BOTTOM_FIELD = 2
    FRAME = 3


class ExtensionId(enum.IntEnum):
    SEQUENCE = 1
    SEQUENCE_DISPLAY = 2
    QUANT_MATRIX = 3
    COPYRIGHT = 4
    SEQUENCE_SCALABLE = 5
    PICTURE_DISPLAY = 7
    PICTURE_CODING = 8
    PICTURE_SPATIAL_SCALABLE = 9
    PICTURE_TEMPORAL_SCALABLE = 10


@dataclass
class SequenceInfo:
    horizontal_size: int
    vertical_size: int
    aspect_ratio_code: int
    frame_rate_code: int
    bit_rate_value: int          # units of 400 bit/s, extension included
    vbv_buffer_size_value: int   # units of 16 * 1024 bits, extension included
    constrained_flag: bool
    intra_quant_matrix: np.ndarray
    non_intra_quant_matrix: np.ndarray
    progressive_sequence: bool = True
    chroma_format: int = 1       # 4:2:0
    low_delay: bool = False
    has_sequence_extension: bool = False

    @property
    def bit_rate(self) -> int:
        """Bits per second."""
        return 400 * self.bit_rate_value

    @property
    def vbv_buffer_size(self) -> int:
        """Bits."""
        return 16 * 1024 * self.vbv_buffer_size_value

    @property
    def frame_rate(self) -> Fraction:
        return FRAME_RATES[self.frame_rate_code]

    @property
    def frame_period(self) -> Fraction:
        """Seconds per frame."""
        return 1 / self.frame_rate

    @property
    def mb_width(self) -> int:
        return (self.horizontal_size + 15) // 16

    @property
    def mb_height(self) -> int:
        return (self.vertical_size + 15) // 16

    @property
    def chroma_size(self) -> tuple[int, int]:
        """(width, height) of one chroma plane for 4:2:0."""
        return 8 * self.mb_width, 8 * self.mb_height


@dataclass
class GopInfo:
    hours: int
    minutes: int
    seconds: int
    pictures: int
    drop_frame: bool
    closed_gop: bool
    broken_link: bool


@dataclass
class PictureInfo:
    temporal_reference: int
    picture_coding_type: PictureType
    vbv_delay: int
    full_pel_forward: bool = False
    full_pel_backward: bool = False
    # f_codes[s][t]: s = 0 forward / 1 backward, t = 0 horizontal / 1 vertical
    f_codes: tuple = ((F_CODE_UNUSED, F_CODE_UNUSED),
                      (F_CODE_UNUSED, F_CODE_UNUSED))
    intra_dc_precision: int = 8
    picture_structure: PictureStructure = PictureStructure.FRAME
    top_field_first: bool = False
    frame_pred_frame_dct: bool = True
    concealment_motion_vectors: bool = False
    q_scale_type: bool = False
    intra_vlc_format: bool = False
    alternate_scan: bool = False
    repeat_first_field: bool = False
    progressive_frame: bool = True
    has_coding_extension: bool = False

    @property
    def label(self) -> str:
        return f"{self.picture_coding_type.name}{self.temporal_reference}"


@dataclass
class SliceInfo:
    vertical_position: int       # 1-based slice start-code value
    quantiser_scale_code: int
    quantiser_scale: int
    intra_slice: bool = False

    @property
    def row(self) -> int:
        """0-based macroblock row."""
        return self.vertical_position - 1


def quantiser_scale_from_code(code: int, q_scale_type: bool) -> int:
    if not 1 <= code <= 31:
        raise MalformedHeader(f"quantiser_scale_code {code} outside 1..31")
    if q_scale_type:
        return tables.nonlinear_quantiser_scale()[code]
    return 2 * code


def _read_quant_matrix(cursor: BitCursor) -> np.ndarray:
    """Matrices are downloaded in zigzag scan order, 8 bits per weight."""
    zigzag = tables.scan_order("zigzag")
    flat = np.zeros(64, dtype=np.int32)
    for serial in range(64):
        weight = cursor.read_bits(8)
        if weight == 0:
            raise MalformedHeader("quantiser matrix weight 0 is forbidden")
        flat[zigzag[serial]] = weight
    return flat.reshape(8, 8)


def _marker_bit(cursor: BitCursor) -> None:
    if cursor.read_bits(1) != 1:
        raise MalformedHeader("marker bit is 0")


def parse_sequence_header(cursor: BitCursor) -> SequenceInfo:
    """Parse the fields following start code 0xB3."""
    horizontal = cursor.read_bits(12)
    vertical = cursor.read_bits(12)
    if horizontal == 0 or vertical == 0:
        raise MalformedHeader("zero picture dimension")
    aspect = cursor.read_bits(4)
    if aspect == 0:
        raise MalformedHeader("aspect_ratio_information 0 is forbidden")
    frame_rate_code = cursor.read_bits(4)
    if frame_rate_code not in FRAME_RATES:
        raise MalformedHeader(f"frame_rate_code {frame_rate_code} is forbidden")
    bit_rate_value = cursor.read_bits(18)
    _marker_bit(cursor)
    vbv_value = cursor.read_bits(10)
    constrained = bool(cursor.read_bits(1))
    if cursor.read_bits(1):
        intra = _read_quant_matrix(cursor)
    else:
        intra = tables.default_intra_matrix().copy()
    if cursor.read_bits(1):
        non_intra = _read_quant_matrix(cursor)
    else:
        non_intra = tables.default_non_intra_matrix().copy()
    return SequenceInfo(horizontal_size=horizontal, vertical_size=vertical,
                        aspect_ratio_code=aspect, frame_rate_code=frame_rate_code,
                        bit_rate_value=bit_rate_value, vbv_buffer_size_value=vbv_value,
                        constrained_flag=constrained, intra_quant_matrix=intra,
                        non_intra_quant_matrix=non_intra)


def parse_gop_header(cursor: BitCursor) -> GopInfo:
    """Parse the fields following start code 0xB8."""
    drop_frame = bool(cursor.read_bits(1))
    hours = cursor.read_bits(5)
    minutes = cursor.read_bits(6)
    _marker_bit(cursor)
    seconds = cursor.read_bits(6)
    pictures = cursor.read_bits(6)
    closed = bool(cursor.read_bits(1))
    broken = bool(cursor.read_bits(1))
    if minutes > 59 or seconds > 59:
        raise MalformedHeader(f"time code {hours:02d}:{minutes:02d}:{seconds:02d} "
                              "outside range")
    return GopInfo(hours=hours, minutes=minutes, seconds=seconds,
                   pictures=pictures, drop_frame=drop_frame,
                   closed_gop=closed, broken_link=broken)


def parse_picture_header(cursor: BitCursor) -> PictureInfo:
    """Parse the fields following start code 0x00."""
    temporal_reference = cursor.read_bits(10)
    coding_type = cursor.read_bits(3)
    if coding_type not in (1, 2, 3):
        raise MalformedHeader(f"picture_coding_type {coding_type} not in {{I,P,B}}")
    vbv_delay = cursor.read_bits(16)
    pic = PictureInfo(temporal_reference=temporal_reference,
                      picture_coding_type=PictureType(coding_type),
                      vbv_delay=vbv_delay)
    if pic.picture_coding_type in (PictureType.P, PictureType.B):
        pic.full_pel_forward = bool(cursor.read_bits(1))
        cursor.read_bits(3)       # legacy forward f_code, unused in MPEG-2
    if pic.picture_coding_type is PictureType.B:
        pic.full_pel_backward = bool(cursor.read_bits(1))
        cursor.read_bits(3)       # legacy backward f_code
    while cursor.peek_bits(1) == 1:
        cursor.skip_bits(1)
        cursor.skip_bits(8)       # extra_information_picture
    cursor.skip_bits(1)           # terminating extra_bit_picture
    return pic


def parse_slice_header(cursor: BitCursor, start_code_byte: int,
                       pic: PictureInfo) -> SliceInfo:
    """Parse a slice header; start_code_byte gives the vertical position."""
    if not SLICE_START_FIRST <= start_code_byte <= SLICE_START_LAST:
        raise MalformedHeader(f"start code {start_code_byte:#04x} is not a slice")
    code = cursor.read_bits(5)
    if code == 0:
        raise MalformedHeader("quantiser_scale_code 0 is forbidden")
    scale = quantiser_scale_from_code(code, pic.q_scale_type)
    intra_slice = False
    if cursor.peek_bits(1) == 1:
        cursor.skip_bits(1)       # intra_slice_flag
        intra_slice = bool(cursor.read_bits(1))
        cursor.skip_bits(7)       # reserved_bits
        while cursor.peek_bits(1) == 1:
            cursor.skip_bits(1)
            cursor.skip_bits(8)   # extra_information_slice
    cursor.skip_bits(1)           # terminating extra_bit_slice
    return SliceInfo(vertical_position=start_code_byte,
                     quantiser_scale_code=code, quantiser_scale=scale,
                     intra_slice=intra_slice)


def _validate_f_code(value: int) -> int:
    if value != F_CODE_UNUSED and not 1 <= value <= 9:
        raise MalformedHeader(f"f_code {value} outside 1..9 / 15")
    return value


def parse_extensions(cursor: BitCursor, context: str,
                     seq: SequenceInfo | None = None,
                     pic: PictureInfo | None = None) -> ExtensionId | None:
    """Dispatch on the 4-bit extension identifier after start code 0xB5.

    `context` is "sequence" or "picture" and says which extensions are
    legal here.  Known extensions update `seq`/`pic` in place; harmless
    ones are left for the start-code scan to skip; scalability extensions
    are rejected.  Returns the identifier that was seen.
    """
    ext_id = cursor.read_bits(4)
    if ext_id == ExtensionId.SEQUENCE:
        if context != "sequence" or seq is None:
            raise MalformedHeader("sequence extension outside sequence context")
        cursor.read_bits(8)                    # profile_and_level_indication
        seq.progressive_sequence = bool(cursor.read_bits(1))
        seq.chroma_format = cursor.read_bits(2)
        if seq.chroma_format != 1:
            raise UnsupportedStream(f"chroma format code {seq.chroma_format} "
                                    "(only 4:2:0 is supported)")
        seq.horizontal_size |= cursor.read_bits(2) << 12
        seq.vertical_size |= cursor.read_bits(2) << 12
        seq.bit_rate_value |= cursor.read_bits(12) << 18
        _marker_bit(cursor)
        seq.vbv_buffer_size_value |= cursor.read_bits(8) << 10
        seq.low_delay = bool(cursor.read_bits(1))
        cursor.read_bits(2)                    # frame_rate_extension_n
        cursor.read_bits(5)                    # frame_rate_extension_d
        seq.has_sequence_extension = True
    elif ext_id == ExtensionId.PICTURE_CODING:
        if context != "picture" or pic is None:
            raise MalformedHeader("picture coding extension outside picture context")
        f_codes = tuple(tuple(_validate_f_code(cursor.read_bits(4))
                              for _ in range(2)) for _ in range(2))
        pic.f_codes = f_codes
        pic.intra_dc_precision = 8 + cursor.read_bits(2)
        structure = cursor.read_bits(2)
        if structure == 0:
            raise MalformedHeader("picture_structure 0 is reserved")
        pic.picture_structure = PictureStructure(structure)
        pic.top_field_first = bool(cursor.read_bits(1))
        pic.frame_pred_frame_dct = bool(cursor.read_bits(1))
        pic.concealment_motion_vectors = bool(cursor.read_bits(1))
        pic.q_scale_type = bool(cursor.read_bits(1))
        pic.intra_vlc_format = bool(cursor.read_bits(1))
        pic.alternate_scan = bool(cursor.read_bits(1))
        pic.repeat_first_field = bool(cursor.read_bits(1))
        cursor.read_bits(1)                    # chroma_420_type
        pic.progressive_frame = bool(cursor.read_bits(1))
        if cursor.read_bits(1):                # composite_display_flag
            cursor.skip_bits(20)
        pic.has_coding_extension = True
    elif ext_id == ExtensionId.QUANT_MATRIX:
        if seq is None:
            raise MalformedHeader("quantiser matrix extension before sequence header")
        if cursor.read_bits(1):
            seq.intra_quant_matrix = _read_quant_matrix(cursor)
        if cursor.read_bits(1):
            seq.non_intra_quant_matrix = _read_quant_matrix(cursor)
        # chroma matrices are meaningless for 4:2:0 but must be consumed
        for _ in range(2):
            if cursor.read_bits(1):
                _read_quant_matrix(cursor)
    elif ext_id in (ExtensionId.SEQUENCE_SCALABLE,
                    ExtensionId.PICTURE_SPATIAL_SCALABLE,
                    ExtensionId.PICTURE_TEMPORAL_SCALABLE):
        raise UnsupportedStream(f"scalability extension {ext_id}")
    # Display/copyright/unknown extensions carry nothing we need; the next
    # start-code scan skips their payload.
    try:
        return ExtensionId(ext_id)
    except ValueError:
        return None
