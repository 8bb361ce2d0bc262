"""Table-driven variable-length decoding of macroblock syntax and coefficients.

Tables are loaded from the text fixtures in :mod:`m2vscope.tables`, audited
for prefix-freeness, and compiled into peek-then-index lookup maps.  The
same tables drive the encode direction used by the fixture generator, so
every entry is exercised by an encode/decode round trip.
"""

from dataclasses import dataclass
from functools import cache

from . import tables
from .bitio import BitCursor
from .errors import EscapeLevelZero, InvalidCode


@dataclass(frozen=True)
class RunLevel:
    """One decoded coefficient event: skip `run` zeros, then `level`."""

    run: int = 0
    level: int = 0
    is_eob: bool = False
    is_escape: bool = False


@dataclass(frozen=True)
class MacroblockType:
    quant: bool = False
    motion_forward: bool = False
    motion_backward: bool = False
    pattern: bool = False
    intra: bool = False

    @classmethod
    def from_flags(cls, flags: str) -> "MacroblockType":
        unknown = set(flags) - set("qfbpi")
        if unknown:
            raise ValueError(f"unknown macroblock type flags {unknown}")
        return cls(quant="q" in flags, motion_forward="f" in flags,
                   motion_backward="b" in flags, pattern="p" in flags,
                   intra="i" in flags)


class VlcTable:
    """A prefix-free code table compiled for O(#lengths) decoding.

    `entries` keeps the auditable (bitstring, symbol) list; `_by_length`
    maps code length -> {code value -> symbol}.  When one symbol has several
    codes the shortest is used for encoding.
    """

    def __init__(self, name: str, entries: list[tuple[str, object]]):
        self.name = name
        self.entries = entries
        self.max_code_length = max(len(bits) for bits, _ in entries)
        if self.max_code_length > 17:
            raise ValueError(f"{name}: code longer than 17 bits")
        self._by_length: dict[int, dict[int, object]] = {}
        self._encode: dict[object, str] = {}
        seen: dict[str, object] = {}
        for bits, symbol in entries:
            if bits in seen:
                raise ValueError(f"{name}: duplicate code {bits}")
            seen[bits] = symbol
            self._by_length.setdefault(len(bits), {})[int(bits, 2)] = symbol
            held = self._encode.get(symbol)
            if held is None or len(bits) < len(held):
                self._encode[symbol] = bits
        for bits in seen:
            for other in seen:
                if other is not bits and other.startswith(bits):
                    raise ValueError(f"{name}: {bits} is a prefix of {other}")
        self._lengths = sorted(self._by_length)

    def decode(self, cursor: BitCursor) -> object:
        avail = min(self.max_code_length, cursor.bits_remaining())
        window = cursor.peek_bits(avail)
        for length in self._lengths:
            if length > avail:
                break
            symbol = self._by_length[length].get(window >> (avail - length))
            if symbol is not None:
                cursor.skip_bits(length)
                return symbol
        raise InvalidCode(f"no {self.name} code matches at bit {cursor.bit_pos}")

    def encode_bits(self, symbol: object) -> str:
        try:
            return self._encode[symbol]
        except KeyError:
            raise ValueError(f"{self.name}: no code for symbol {symbol!r}") from None

    def symbols(self):
        return list(self._encode)


def _load(name: str, filename: str, parse_args) -> VlcTable:
    return VlcTable(name, [(bits, parse_args(args))
                           for bits, args in tables.vlc_entries(filename)])


@cache
def macroblock_address_table() -> VlcTable:
    return _load("macroblock_address_increment", "b01_macroblock_address.txt",
                 lambda a: a[0] if a[0] == "ESCAPE" else int(a[0]))


@cache
def macroblock_type_table(picture_coding_type: int) -> VlcTable:
    filename = {1: "b02_mb_type_i.txt", 2: "b03_mb_type_p.txt",
                3: "b04_mb_type_b.txt"}[picture_coding_type]
    return _load(f"macroblock_type_{'ipb'[picture_coding_type - 1]}", filename,
                 lambda a: MacroblockType.from_flags(a[0]))


@cache
def coded_block_pattern_table() -> VlcTable:
    return _load("coded_block_pattern", "b09_coded_block_pattern.txt",
                 lambda a: int(a[0]))


@cache
def motion_code_table() -> VlcTable:
    return _load("motion_code", "b10_motion_code.txt", lambda a: int(a[0]))


@cache
def dc_size_table(component: str) -> VlcTable:
    if component == "luma":
        return _load("dct_dc_size_luminance", "b12_dc_size_luma.txt",
                     lambda a: int(a[0]))
    return _load("dct_dc_size_chrominance", "b13_dc_size_chroma.txt",
                 lambda a: int(a[0]))


def _parse_run_level(args: tuple[str, ...]):
    if args[0] in ("EOB", "ESCAPE"):
        return args[0]
    return (int(args[0]), int(args[1]))


@cache
def coefficient_table(name: str) -> VlcTable:
    """name is 'b14' (table zero) or 'b15' (table one, intra_vlc_format)."""
    filename = {"b14": "b14_dct_coefficients.txt",
                "b15": "b15_dct_coefficients.txt"}[name]
    return _load(f"dct_coefficients_{name}", filename, _parse_run_level)


def all_tables() -> list[VlcTable]:
    return [macroblock_address_table(), macroblock_type_table(1),
            macroblock_type_table(2), macroblock_type_table(3),
            coded_block_pattern_table(), motion_code_table(),
            dc_size_table("luma"), dc_size_table("chroma"),
            coefficient_table("b14"), coefficient_table("b15")]


def decode_symbol(cursor: BitCursor, table: VlcTable) -> object:
    return table.decode(cursor)


def decode_dc_differential(cursor: BitCursor, component: str) -> int:
    """Read dct_dc_size and the differential bits; return the signed delta.

    Magnitude bits with a 0 MSB mean a negative delta: delta = bits - (2^size - 1).
    """
    size = dc_size_table(component).decode(cursor)
    if size == 0:
        return 0
    bits = cursor.read_bits(size)
    if bits >> (size - 1):
        return bits
    return bits - ((1 << size) - 1)


def encode_dc_differential(delta: int, component: str) -> str:
    if delta == 0:
        return dc_size_table(component).encode_bits(0)
    size = abs(delta).bit_length()
    prefix = dc_size_table(component).encode_bits(size)
    bits = delta if delta > 0 else delta + ((1 << size) - 1)
    return prefix + format(bits, f"0{size}b")


def decode_run_level(cursor: BitCursor, table_name: str,
                     first_coefficient: bool) -> RunLevel:
    """Decode one coefficient event from table zero (b14) or one (b15).

    In table zero the first coefficient of a block cannot be EOB, so the
    single bit "1" plus a sign means run 0, level 1 there.
    """
    if table_name == "b14" and first_coefficient and cursor.peek_bits(1) == 1:
        cursor.skip_bits(1)
        sign = cursor.read_bits(1)
        return RunLevel(run=0, level=-1 if sign else 1)
    symbol = coefficient_table(table_name).decode(cursor)
    if symbol == "EOB":
        return RunLevel(is_eob=True)
    if symbol == "ESCAPE":
        run = cursor.read_bits(6)
        raw = cursor.read_bits(12)
        if raw in (0, 2048):
            raise EscapeLevelZero(f"escape level bits {raw:012b} are forbidden")
        level = raw - 4096 if raw >= 2048 else raw
        return RunLevel(run=run, level=level, is_escape=True)
    run, magnitude = symbol
    sign = cursor.read_bits(1)
    return RunLevel(run=run, level=-magnitude if sign else magnitude)


def encode_run_level(run: int, level: int, table_name: str,
                     first_coefficient: bool) -> str:
    """Emit the bits for one coefficient, escaping when no code exists."""
    if level == 0:
        raise ValueError("cannot encode level 0")
    table = coefficient_table(table_name)
    magnitude = abs(level)
    sign = "1" if level < 0 else "0"
    if table_name == "b14" and first_coefficient and (run, magnitude) == (0, 1):
        return "1" + sign
    try:
        return table.encode_bits((run, magnitude)) + sign
    except ValueError:
        if not -2047 <= level <= 2047:
            raise ValueError(f"level {level} outside escape range") from None
        return (table.encode_bits("ESCAPE") + format(run, "06b")
                + format(level & 0xFFF, "012b"))


def encode_eob(table_name: str) -> str:
    return coefficient_table(table_name).encode_bits("EOB")
