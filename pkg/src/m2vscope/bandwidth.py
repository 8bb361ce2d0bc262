"""Per-frame bandwidth accounting and VBV buffer modeling.

A picture's bandwidth is the coded bits between its accounting boundary
and the next one.  The boundary of a picture is its picture start code,
except that sequence and GOP headers in front of it belong to it too; the
very first picture is measured from its own start code, so the per-frame
sizes add up exactly to the span between the first picture start code and
the sequence end code.

VBV fullness is tracked in exact rational arithmetic so that equal-size
pictures at exactly bit_rate * frame_period keep the buffer constant to
the bit.
"""

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DecodeError
from .headers import SequenceInfo

#: vbv_delay value meaning "variable bit rate, no delay given".
VBV_DELAY_UNSET = 0xFFFF


class EmptyStream(DecodeError):
    """No pictures were decoded, so there is nothing to summarize."""


@dataclass
class FrameStats:
    frame_index: int
    frame_name: str                 # coding type + temporal reference
    coding_type: str
    bits: int
    decode_time: float              # seconds, frame_index * frame_period
    vbv_fullness_after: int
    quant_error_max: int            # coefficient-domain saturation correction
    clip_error_max: int             # pixel-domain saturation correction
    prev_decoded_size: int


@dataclass
class VbvState:
    fullness: Fraction | None = None    # None until the first picture
    underflow: bool = False
    overflow: bool = False


def update_vbv(state: VbvState, picture_bits: int, seq: SequenceInfo,
               vbv_delay: int | None = None) -> int:
    """Advance the VBV model by one picture; returns the new fullness in bits.

    The first call seeds fullness from the picture's vbv_delay (90 kHz
    units), or half the buffer when the delay is the variable-rate
    sentinel.  Underflow and overflow clamp and set flags instead of
    failing.
    """
    if seq.bit_rate <= 0:
        raise ValueError("VBV model needs a positive bit rate")
    if state.fullness is None:
        if vbv_delay is None or vbv_delay == VBV_DELAY_UNSET:
            state.fullness = Fraction(seq.vbv_buffer_size, 2)
        else:
            state.fullness = Fraction(seq.bit_rate * vbv_delay, 90000)
    state.fullness += seq.bit_rate * seq.frame_period - picture_bits
    if state.fullness < 0:
        state.fullness = Fraction(0)
        state.underflow = True
    elif state.fullness > seq.vbv_buffer_size:
        state.fullness = Fraction(seq.vbv_buffer_size)
        state.overflow = True
    return int(state.fullness)


@dataclass
class BandwidthReport:
    per_frame: list[FrameStats]
    cumulative_bits: list[int]
    min_bits: int
    max_bits: int
    avg_bits: Fraction
    frame_period: float
    bit_rate: int
    stream_label: str
    vbv_underflow: bool = False
    vbv_overflow: bool = False
    concealed_slices: int = 0
    dropped_pictures: int = 0

    @property
    def avg_bits_rounded(self) -> int:
        return int(self.avg_bits + Fraction(1, 2))


class BandwidthAccumulator:
    """Collects FrameStats in decode order; read-only after summarize()."""

    def __init__(self, seq: SequenceInfo, stream_label: str = ""):
        self.seq = seq
        self.stream_label = stream_label
        self.per_frame: list[FrameStats] = []
        self.vbv = VbvState()
        self._prev_bits = 0

    def account_picture(self, bit_start: int, bit_end: int, pic,
                        quant_error_max: int = 0,
                        clip_error_max: int = 0) -> FrameStats:
        """Close the accounting span [bit_start, bit_end) for one picture."""
        if bit_end <= bit_start:
            raise ValueError(f"empty picture span [{bit_start}, {bit_end})")
        bits = bit_end - bit_start
        index = len(self.per_frame)
        fullness = update_vbv(self.vbv, bits, self.seq, vbv_delay=pic.vbv_delay)
        stats = FrameStats(frame_index=index, frame_name=pic.label,
                           coding_type=pic.picture_coding_type.name,
                           bits=bits,
                           decode_time=index * float(self.seq.frame_period),
                           vbv_fullness_after=fullness,
                           quant_error_max=quant_error_max,
                           clip_error_max=clip_error_max,
                           prev_decoded_size=self._prev_bits)
        self._prev_bits = bits
        self.per_frame.append(stats)
        return stats

    def summarize(self, **flags) -> BandwidthReport:
        return summarize(self.per_frame, self.seq, self.stream_label, **flags)


def summarize(per_frame: list[FrameStats], seq: SequenceInfo,
              stream_label: str = "", **flags) -> BandwidthReport:
    """Aggregate per-frame sizes into min/max/avg and cumulative sums."""
    if not per_frame:
        raise EmptyStream("no pictures to summarize")
    sizes = [f.bits for f in per_frame]
    cumulative = []
    total = 0
    for s in sizes:
        total += s
        cumulative.append(total)
    return BandwidthReport(per_frame=per_frame, cumulative_bits=cumulative,
                           min_bits=min(sizes), max_bits=max(sizes),
                           avg_bits=Fraction(total, len(sizes)),
                           frame_period=float(seq.frame_period),
                           bit_rate=seq.bit_rate, stream_label=stream_label,
                           **flags)
