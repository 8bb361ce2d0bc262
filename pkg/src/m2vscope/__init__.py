"""MPEG-2 elementary stream decoder and per-frame bandwidth profiler."""

from .bandwidth import BandwidthReport, FrameStats
from .bitio import BitCursor
from .decoder import DecodeResult, decode_elementary_stream
from .errors import DecodeError, MalformedHeader, UnsupportedStream
from .fixtures import FixtureSpec, GeneratedFixture, generate
from .framestore import FramePicture, FrameStore
from .headers import GopInfo, PictureInfo, SequenceInfo, SliceInfo

__version__ = "0.1.0"

__all__ = [
    "BandwidthReport", "BitCursor", "DecodeError", "DecodeResult",
    "FixtureSpec", "FramePicture", "FrameStats", "FrameStore",
    "GeneratedFixture", "GopInfo", "MalformedHeader", "PictureInfo",
    "SequenceInfo", "SliceInfo", "UnsupportedStream",
    "decode_elementary_stream", "generate",
]
