"""Bit-granular reading of an MPEG-2 elementary stream.

All reads are MSB-first. A cursor never reads past the end of its data;
running out of bits raises EndOfStream instead of zero-filling, so a
truncated stream fails at the exact syntax element that needed the bits.
"""

from .errors import EndOfStream

START_CODE_PREFIX = b"\x00\x00\x01"

#: Sentinel returned by next_start_code() when the stream is exhausted.
END_OF_STREAM = -1


class BitCursor:
    """Position-tracked bit reader over an in-memory byte string.

    The whole stream is held in memory; the cursor is cheap, so several
    cursors over the same bytes can coexist (each is single-owner).
    """

    __slots__ = ("data", "bit_pos", "total_bits")

    def __init__(self, data: bytes, bit_pos: int = 0):
        self.data = data
        self.bit_pos = bit_pos
        self.total_bits = 8 * len(data)
        if not 0 <= bit_pos <= self.total_bits:
            raise ValueError(f"bit_pos {bit_pos} outside stream of {self.total_bits} bits")

    def bits_remaining(self) -> int:
        return self.total_bits - self.bit_pos

    def bits_consumed(self) -> int:
        """Current absolute bit offset from the start of the stream."""
        return self.bit_pos

    def byte_aligned(self) -> bool:
        return self.bit_pos % 8 == 0

    def peek_bits(self, n: int) -> int:
        """Return the next n bits (0 <= n <= 32) without consuming them."""
        if not 0 <= n <= 32:
            raise ValueError(f"peek width {n} outside 0..32")
        if self.bit_pos + n > self.total_bits:
            raise EndOfStream(f"peek of {n} bits at bit {self.bit_pos} "
                              f"passes end of {self.total_bits}-bit stream")
        if n == 0:
            return 0
        pos = self.bit_pos
        first = pos >> 3
        last = (pos + n - 1) >> 3
        chunk = int.from_bytes(self.data[first:last + 1], "big")
        tail = 8 * (last + 1) - (pos + n)
        return (chunk >> tail) & ((1 << n) - 1)

    def read_bits(self, n: int) -> int:
        """Consume and return the next n bits (0 <= n <= 32), MSB-first."""
        value = self.peek_bits(n)
        self.bit_pos += n
        return value

    def skip_bits(self, n: int) -> None:
        if self.bit_pos + n > self.total_bits:
            raise EndOfStream(f"skip of {n} bits at bit {self.bit_pos} "
                              f"passes end of {self.total_bits}-bit stream")
        self.bit_pos += n

    def align_to_byte(self) -> None:
        """Advance to the next byte boundary (no-op when already aligned)."""
        self.bit_pos = min((self.bit_pos + 7) & ~7, self.total_bits)

    def next_start_code(self) -> int:
        """Scan to the next 00 00 01 prefix and return its code byte.

        The scan starts at the byte containing the current position, so a
        cursor abandoned partway into a start code (slice error recovery)
        still finds it; payload bytes can never hold a prefix.  Consumes
        the 24-bit prefix and the start-code byte, leaving the cursor
        byte-aligned right after the code byte.  Returns END_OF_STREAM when
        no further prefix exists (the cursor is then parked at the end).
        """
        found = self.data.find(START_CODE_PREFIX, self.bit_pos >> 3)
        if found < 0 or found + 3 >= len(self.data):
            self.bit_pos = self.total_bits
            return END_OF_STREAM
        self.bit_pos = 8 * (found + 4)
        return self.data[found + 3]
