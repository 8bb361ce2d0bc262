"""Deterministic generator of tiny legal MPEG-2 elementary streams.

The generator is the encoder-side oracle for golden tests: it emits a
syntactically legal stream for a declarative FixtureSpec and, alongside,
computes the exactly expected decoded planes using direct double-precision
evaluation of the reconstruction math (independent of the decoder's
separable integer pipeline).  It writes only the syntax subset the decoder
supports; it is not a product encoder.
"""

from dataclasses import dataclass

import numpy as np

from . import tables
from .errors import FixtureSpecError
from .motion import encode_motion_component
from .vlc import (MacroblockType, encode_dc_differential, encode_eob,
                  encode_run_level, macroblock_address_table,
                  macroblock_type_table)

# ---------------------------------------------------------------- bit writer


class BitWriter:
    """MSB-first bit emitter; the mirror of BitCursor."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nbits = 0

    @property
    def bit_length(self) -> int:
        return 8 * len(self._bytes) + self._nbits

    def write_bits(self, value: int, n: int) -> None:
        if value < 0 or value >= 1 << n:
            raise ValueError(f"value {value} does not fit in {n} bits")
        for shift in range(n - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._bytes.append(self._acc)
                self._acc = 0
                self._nbits = 0

    def write_code(self, bits: str) -> None:
        for b in bits:
            self.write_bits(int(b), 1)

    def byte_align(self) -> None:
        while self._nbits:
            self.write_bits(0, 1)

    def start_code(self, code: int) -> None:
        self.byte_align()
        self._bytes += bytes((0, 0, 1, code))

    def pad_bytes(self, n: int) -> None:
        self.byte_align()
        self._bytes += bytes(n)

    def data(self) -> bytes:
        if self._nbits:
            raise ValueError("unaligned bit writer")
        return bytes(self._bytes)


# ---------------------------------------------------------------- recipes


@dataclass(frozen=True)
class FlatIntra:
    """Every macroblock flat: the values are the quantized DC levels, which
    at DC precision 8 equal the reconstructed pixel values."""
    luma: int = 128
    cb: int = 128
    cr: int = 128


@dataclass(frozen=True)
class CheckerboardIntra:
    """Alternate flat luma values per macroblock (exercises DC deltas)."""
    luma_a: int = 90
    luma_b: int = 170
    cb: int = 128
    cr: int = 128


@dataclass(frozen=True)
class AcBasisIntra:
    """Flat DC plus one AC basis coefficient on every luma block."""
    dc: int = 128
    u: int = 1            # horizontal frequency (column of F)
    v: int = 0            # vertical frequency (row of F)
    level: int = 12
    cb: int = 128
    cr: int = 128


@dataclass(frozen=True)
class AcListIntra:
    """Luma block k carries run/level list entries[k % len(entries)].

    Used to exercise every coefficient-table entry against real decoders.
    """
    entries: tuple = ()
    dc: int = 128
    cb: int = 128
    cr: int = 128


@dataclass(frozen=True)
class MoveP:
    """P picture: every macroblock forward-predicted with one vector
    (half-sample units); macroblocks whose fetch would leave the picture
    fall back to the zero vector.  No residual."""
    mv: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class SkipMiddleP:
    """P picture of a static scene: first and last macroblock of each row
    coded with zero vectors, everything between skipped."""


@dataclass(frozen=True)
class AverageB:
    """B picture: every macroblock bidirectionally predicted."""
    mv_forward: tuple[int, int] = (0, 0)
    mv_backward: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class FieldPredP:
    """P picture in a frame, field prediction per macroblock: vertical
    vector components are in field-line half-samples."""
    top: tuple[tuple[int, int], int] = ((0, 0), 0)      # (mv, field_select)
    bottom: tuple[tuple[int, int], int] = ((0, 0), 1)


INTRA_RECIPES = (FlatIntra, CheckerboardIntra, AcBasisIntra, AcListIntra)


def recipe_kind(recipe) -> str:
    if isinstance(recipe, INTRA_RECIPES):
        return "I"
    if isinstance(recipe, (MoveP, SkipMiddleP, FieldPredP)):
        return "P"
    if isinstance(recipe, AverageB):
        return "B"
    raise FixtureSpecError(f"unknown recipe {recipe!r}")


# ---------------------------------------------------------------- spec


@dataclass
class FixtureSpec:
    width: int
    height: int
    pictures: list                      # recipes in decode order
    frame_rate_code: int = 3
    bit_rate: int = 1_000_000           # bits/second, multiple of 400
    vbv_buffer_size: int = 20 * 16384   # bits, multiple of 16384
    quantiser_scale_code: int = 8
    q_scale_type: bool = False
    intra_vlc_format: bool = False
    alternate_scan: bool = False
    intra_dc_precision: int = 8
    progressive: bool = True
    flat_quant_matrices: bool = False   # download flat-16 matrices
    vbv_delays: list | None = None      # per picture; None -> 0xFFFF sentinel
    pad_to_bits: list | None = None     # per picture target span, bits
    gop_before: tuple = (0,)            # GOP header before these decode indices

    def validate(self) -> None:
        if self.width % 16 or self.height % 16:
            raise FixtureSpecError("dimensions must be multiples of 16")
        if not self.pictures:
            raise FixtureSpecError("fixture needs at least one picture")
        if recipe_kind(self.pictures[0]) != "I":
            raise FixtureSpecError("first picture must be intra")
        refs = 0
        for recipe in self.pictures:
            kind = recipe_kind(recipe)
            if kind == "P" and refs < 1:
                raise FixtureSpecError("P picture before any reference")
            if kind == "B" and refs < 2:
                raise FixtureSpecError("B picture before two references")
            if kind in "IP":
                refs += 1
        if self.bit_rate % 400:
            raise FixtureSpecError("bit_rate must be a multiple of 400")
        if self.vbv_buffer_size % 16384:
            raise FixtureSpecError("vbv_buffer_size must be a multiple of 16K")
        if not self.progressive and self.height % 32:
            raise FixtureSpecError("interlaced fixtures need height % 32 == 0")


@dataclass
class ExpectedPicture:
    label: str
    coding_type: str
    temporal_reference: int
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray
    exact: bool                         # bit-exact vs within the IDCT bound


@dataclass
class GeneratedFixture:
    stream: bytes
    spec: FixtureSpec
    expected_display: list[ExpectedPicture]
    picture_bits: list[int]             # decode order, boundary-rule spans
    decode_labels: list[str]

    @property
    def total_picture_bits(self) -> int:
        return sum(self.picture_bits)


# ------------------------------------------------------- expected-plane math

_IDCT_BASIS = np.cos((2 * np.arange(8)[None, :] + 1)
                     * np.arange(8)[:, None] * np.pi / 16)
_IDCT_C = np.full(8, 1.0)
_IDCT_C[0] = np.sqrt(2) / 2


def direct_idct(coeffs: np.ndarray) -> np.ndarray:
    """Non-separable direct evaluation of the 8x8 IDCT in float64."""
    out = np.zeros((8, 8))
    for i in range(8):
        for j in range(8):
            total = 0.0
            for v in range(8):
                for u in range(8):
                    total += (_IDCT_C[u] * _IDCT_C[v] / 4.0 * coeffs[v, u]
                              * _IDCT_BASIS[v, i] * _IDCT_BASIS[u, j])
            out[i, j] = total
    return out


def _dequant_intra(qf: np.ndarray, w: np.ndarray, q_s: int,
                   precision: int) -> np.ndarray:
    raw = 2 * qf.astype(np.int64) * w * q_s
    f = np.sign(raw) * (np.abs(raw) // 32)
    f[0, 0] = qf[0, 0] << (11 - precision)
    f = np.clip(f, -2048, 2047)
    if int(f.sum()) % 2 == 0:
        f[7, 7] ^= 1
    return f


def _expected_intra_block(qf: np.ndarray, w: np.ndarray, q_s: int,
                          precision: int) -> np.ndarray:
    f = _dequant_intra(qf, w, q_s, precision)
    spatial = np.clip(np.rint(direct_idct(f)), -256, 255)
    return np.clip(spatial, 0, 255).astype(np.uint8)


def _mc_fetch(plane: np.ndarray, y: int, x: int, h: int, w: int,
              mv: tuple[int, int]) -> np.ndarray:
    """Reference-side replay of half-sample prediction (round half up)."""
    dh, dv = mv
    ix, fx = dh >> 1, dh & 1
    iy, fy = dv >> 1, dv & 1
    top, left = y + iy, x + ix
    p = plane.astype(np.int32)
    a = p[top:top + h, left:left + w]
    if not fx and not fy:
        return a
    if fx and not fy:
        return (a + p[top:top + h, left + 1:left + 1 + w] + 1) >> 1
    if fy and not fx:
        return (a + p[top + 1:top + 1 + h, left:left + w] + 1) >> 1
    return (a + p[top:top + h, left + 1:left + 1 + w]
            + p[top + 1:top + 1 + h, left:left + w]
            + p[top + 1:top + 1 + h, left + 1:left + 1 + w] + 2) >> 2


def _mc_in_bounds(shape, y, x, h, w, mv) -> bool:
    dh, dv = mv
    ix, fx = dh >> 1, dh & 1
    iy, fy = dv >> 1, dv & 1
    return (y + iy >= 0 and x + ix >= 0
            and y + iy + h + fy <= shape[0] and x + ix + w + fx <= shape[1])


def _chroma_mv(mv: tuple[int, int]) -> tuple[int, int]:
    def half(v):
        return v // 2 if v >= 0 else -((-v) // 2)
    return half(mv[0]), half(mv[1])


# ---------------------------------------------------------------- generator


class _FixtureEncoder:
    def __init__(self, spec: FixtureSpec):
        spec.validate()
        self.spec = spec
        self.w = BitWriter()
        self.mb_w = spec.width // 16
        self.mb_h = spec.height // 16
        if spec.flat_quant_matrices:
            self.intra_matrix = np.full((8, 8), 16, dtype=np.int64)
        else:
            self.intra_matrix = tables.default_intra_matrix().astype(np.int64)
        self.q_s = self._quantiser_scale(spec.quantiser_scale_code)
        self.scan = tables.scan_order(
            "alternate" if spec.alternate_scan else "zigzag")
        self.coeff_table = "b15" if spec.intra_vlc_format else "b14"

    def _quantiser_scale(self, code: int) -> int:
        if self.spec.q_scale_type:
            return tables.nonlinear_quantiser_scale()[code]
        return 2 * code

    # -------------------------------------------------------------- headers

    def _sequence_header(self) -> None:
        spec = self.spec
        w = self.w
        w.start_code(0xB3)
        w.write_bits(spec.width, 12)
        w.write_bits(spec.height, 12)
        w.write_bits(1, 4)                       # square samples
        w.write_bits(spec.frame_rate_code, 4)
        w.write_bits(spec.bit_rate // 400, 18)
        w.write_bits(1, 1)                       # marker
        w.write_bits(spec.vbv_buffer_size // 16384, 10)
        w.write_bits(0, 1)                       # constrained_parameters_flag
        for load in (spec.flat_quant_matrices, spec.flat_quant_matrices):
            w.write_bits(int(load), 1)
            if load:
                flat = np.full(64, 16, dtype=np.int64)
                for serial in range(64):
                    w.write_bits(int(flat[serial]), 8)
        w.start_code(0xB5)
        w.write_bits(0b0001, 4)                  # sequence extension
        w.write_bits(0x48, 8)                    # main profile @ main level
        w.write_bits(int(spec.progressive), 1)
        w.write_bits(0b01, 2)                    # 4:2:0
        w.write_bits(0, 2)                       # horizontal_size_extension
        w.write_bits(0, 2)                       # vertical_size_extension
        w.write_bits(0, 12)                      # bit_rate_extension
        w.write_bits(1, 1)                       # marker
        w.write_bits(0, 8)                       # vbv_buffer_size_extension
        w.write_bits(0, 1)                       # low_delay
        w.write_bits(0, 2)
        w.write_bits(0, 5)

    def _gop_header(self) -> None:
        w = self.w
        w.start_code(0xB8)
        w.write_bits(0, 1)                       # drop_frame_flag
        w.write_bits(0, 5)                       # hours
        w.write_bits(0, 6)                       # minutes
        w.write_bits(1, 1)                       # marker
        w.write_bits(0, 6)                       # seconds
        w.write_bits(0, 6)                       # pictures
        w.write_bits(1, 1)                       # closed_gop
        w.write_bits(0, 1)                       # broken_link

    def _picture_headers(self, kind: str, tref: int, vbv_delay: int,
                         f_codes, frame_pred: bool,
                         progressive_frame: bool) -> None:
        w = self.w
        w.start_code(0x00)
        w.write_bits(tref, 10)
        w.write_bits({"I": 1, "P": 2, "B": 3}[kind], 3)
        w.write_bits(vbv_delay, 16)
        if kind in "PB":
            w.write_bits(0, 1)                   # full_pel_forward (MPEG-2: 0)
            w.write_bits(7, 3)                   # legacy forward f_code
        if kind == "B":
            w.write_bits(0, 1)
            w.write_bits(7, 3)
        w.write_bits(0, 1)                       # extra_bit_picture
        w.start_code(0xB5)
        w.write_bits(0b1000, 4)                  # picture coding extension
        for s in range(2):
            for t in range(2):
                w.write_bits(f_codes[s][t], 4)
        w.write_bits(self.spec.intra_dc_precision - 8, 2)
        w.write_bits(0b11, 2)                    # frame picture
        w.write_bits(0, 1)                       # top_field_first
        w.write_bits(int(frame_pred), 1)
        w.write_bits(0, 1)                       # concealment_motion_vectors
        w.write_bits(int(self.spec.q_scale_type), 1)
        w.write_bits(int(self.spec.intra_vlc_format), 1)
        w.write_bits(int(self.spec.alternate_scan), 1)
        w.write_bits(0, 1)                       # repeat_first_field
        w.write_bits(int(progressive_frame), 1)  # chroma_420_type
        w.write_bits(int(progressive_frame), 1)  # progressive_frame
        w.write_bits(0, 1)                       # composite_display_flag

    def _slice_header(self, row: int) -> None:
        self.w.start_code(row + 1)
        self.w.write_bits(self.spec.quantiser_scale_code, 5)
        self.w.write_bits(0, 1)                  # extra_bit_slice

    # ------------------------------------------------------------ intra MBs

    def _intra_block_qf(self, recipe, mb_index: int, block: int):
        """Return (dc_level, [(run, level), ...]) for one block."""
        if isinstance(recipe, FlatIntra):
            dc = (recipe.luma, recipe.luma, recipe.luma, recipe.luma,
                  recipe.cb, recipe.cr)[block]
            return dc, []
        if isinstance(recipe, CheckerboardIntra):
            luma = recipe.luma_a if mb_index % 2 == 0 else recipe.luma_b
            dc = (luma, luma, luma, luma, recipe.cb, recipe.cr)[block]
            return dc, []
        if isinstance(recipe, AcBasisIntra):
            if block >= 4:
                return (recipe.cb, recipe.cr)[block - 4], []
            serial = int(np.nonzero(self.scan == recipe.v * 8 + recipe.u)[0][0])
            if serial == 0:
                raise FixtureSpecError("AC basis cannot sit on the DC cell")
            return recipe.dc, [(serial - 1, recipe.level)]
        if isinstance(recipe, AcListIntra):
            if block >= 4:
                return (recipe.cb, recipe.cr)[block - 4], []
            entries = recipe.entries[(4 * mb_index + block) % len(recipe.entries)]
            return recipe.dc, list(entries)
        raise FixtureSpecError(f"not an intra recipe: {recipe!r}")

    def _encode_intra_picture(self, recipe) -> None:
        spec = self.spec
        for row in range(self.mb_h):
            self._slice_header(row)
            dc_pred = [1 << (spec.intra_dc_precision - 1)] * 3
            for col in range(self.mb_w):
                mb_index = row * self.mb_w + col
                self.w.write_code(macroblock_address_table().encode_bits(1))
                self.w.write_code(macroblock_type_table(1).encode_bits(
                    _mb_type(1, intra=True)))
                for block in range(6):
                    dc, runs = self._intra_block_qf(recipe, mb_index, block)
                    comp = 0 if block < 4 else block - 3
                    component = "luma" if block < 4 else "chroma"
                    self.w.write_code(encode_dc_differential(
                        dc - dc_pred[comp], component))
                    dc_pred[comp] = dc
                    first = False            # intra AC never uses the 1-bit code
                    for run, level in runs:
                        self.w.write_code(encode_run_level(
                            run, level, self.coeff_table, first))
                    self.w.write_code(encode_eob(self.coeff_table))

    def _expected_intra(self, recipe):
        spec = self.spec
        y = np.zeros((self.mb_h * 16, self.mb_w * 16), dtype=np.uint8)
        cb = np.zeros((self.mb_h * 8, self.mb_w * 8), dtype=np.uint8)
        cr = np.zeros_like(cb)
        exact = isinstance(recipe, (FlatIntra, CheckerboardIntra))
        for row in range(self.mb_h):
            for col in range(self.mb_w):
                mb_index = row * self.mb_w + col
                for block in range(6):
                    dc, runs = self._intra_block_qf(recipe, mb_index, block)
                    qf = np.zeros((8, 8), dtype=np.int64)
                    qf[0, 0] = dc
                    serial = 1
                    for run, level in runs:
                        serial += run
                        qf.flat[self.scan[serial]] = level
                        serial += 1
                    pixels = _expected_intra_block(
                        qf, self.intra_matrix, self.q_s,
                        spec.intra_dc_precision)
                    if block < 4:
                        r, c = divmod(block, 2)
                        y[16 * row + 8 * r:16 * row + 8 * r + 8,
                          16 * col + 8 * c:16 * col + 8 * c + 8] = pixels
                    elif block == 4:
                        cb[8 * row:8 * row + 8, 8 * col:8 * col + 8] = pixels
                    else:
                        cr[8 * row:8 * row + 8, 8 * col:8 * col + 8] = pixels
        return y, cb, cr, exact

    # ------------------------------------------------------------ inter MBs

    def _write_motion_vector(self, pmv, r, s, mv, f_codes, *,
                             field_in_frame=False) -> None:
        """Write motion_vector(r, s) mirroring the decoder's predictor rules."""
        fh, fv = f_codes[s]
        self.w.write_code(encode_motion_component(fh, pmv[r][s][0], mv[0]))
        if field_in_frame:
            self.w.write_code(encode_motion_component(fv, pmv[r][s][1] >> 1,
                                                      mv[1]))
            pmv[r][s] = [mv[0], 2 * mv[1]]
        else:
            self.w.write_code(encode_motion_component(fv, pmv[r][s][1], mv[1]))
            pmv[r][s] = [mv[0], mv[1]]

    def _encode_move_p(self, recipe: MoveP, f_codes) -> None:
        shape = (self.mb_h * 16, self.mb_w * 16)
        for row in range(self.mb_h):
            self._slice_header(row)
            pmv = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
            for col in range(self.mb_w):
                mv = recipe.mv if _mc_in_bounds(shape, 16 * row, 16 * col,
                                                16, 16, recipe.mv) else (0, 0)
                self.w.write_code(macroblock_address_table().encode_bits(1))
                self.w.write_code(macroblock_type_table(2).encode_bits(
                    _mb_type(2, motion_forward=True)))
                self._write_motion_vector(pmv, 0, 0, mv, f_codes)
                pmv[1][0] = list(pmv[0][0])

    def _encode_skip_middle_p(self, f_codes) -> None:
        for row in range(self.mb_h):
            self._slice_header(row)
            pmv = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
            self.w.write_code(macroblock_address_table().encode_bits(1))
            self.w.write_code(macroblock_type_table(2).encode_bits(
                _mb_type(2, motion_forward=True)))
            self._write_motion_vector(pmv, 0, 0, (0, 0), f_codes)
            if self.mb_w > 1:
                increment = self.mb_w - 1
                table = macroblock_address_table()
                while increment > 33:
                    self.w.write_code(table.encode_bits("ESCAPE"))
                    increment -= 33
                self.w.write_code(table.encode_bits(increment))
                self.w.write_code(macroblock_type_table(2).encode_bits(
                    _mb_type(2, motion_forward=True)))
                self._write_motion_vector(pmv, 0, 0, (0, 0), f_codes)

    def _encode_average_b(self, recipe: AverageB, f_codes) -> None:
        shape = (self.mb_h * 16, self.mb_w * 16)
        for row in range(self.mb_h):
            self._slice_header(row)
            pmv = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
            for col in range(self.mb_w):
                ok = (_mc_in_bounds(shape, 16 * row, 16 * col, 16, 16,
                                    recipe.mv_forward)
                      and _mc_in_bounds(shape, 16 * row, 16 * col, 16, 16,
                                        recipe.mv_backward))
                mvf = recipe.mv_forward if ok else (0, 0)
                mvb = recipe.mv_backward if ok else (0, 0)
                self.w.write_code(macroblock_address_table().encode_bits(1))
                self.w.write_code(macroblock_type_table(3).encode_bits(
                    _mb_type(3, motion_forward=True, motion_backward=True)))
                self._write_motion_vector(pmv, 0, 0, mvf, f_codes)
                pmv[1][0] = list(pmv[0][0])
                self._write_motion_vector(pmv, 0, 1, mvb, f_codes)
                pmv[1][1] = list(pmv[0][1])

    def _field_mb_vectors(self, recipe: FieldPredP, row: int, col: int):
        """Per-macroblock vectors, zeroed where the fetch would go outside."""
        field_shape = (self.mb_h * 8, self.mb_w * 16)
        ok = all(_mc_in_bounds(field_shape, 8 * row, 16 * col, 8, 16, mv)
                 for mv, _ in (recipe.top, recipe.bottom))
        if ok:
            return (recipe.top, recipe.bottom)
        return (((0, 0), recipe.top[1]), ((0, 0), recipe.bottom[1]))

    def _encode_field_pred_p(self, recipe: FieldPredP, f_codes) -> None:
        for row in range(self.mb_h):
            self._slice_header(row)
            pmv = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
            for col in range(self.mb_w):
                self.w.write_code(macroblock_address_table().encode_bits(1))
                self.w.write_code(macroblock_type_table(2).encode_bits(
                    _mb_type(2, motion_forward=True)))
                self.w.write_bits(0b01, 2)       # field prediction in frame
                for r, (mv, fsel) in enumerate(
                        self._field_mb_vectors(recipe, row, col)):
                    self.w.write_bits(fsel, 1)
                    self._write_motion_vector(pmv, r, 0, mv, f_codes,
                                              field_in_frame=True)

    # --------------------------------------------------- expected inter math

    def _expected_move_p(self, recipe: MoveP, ref):
        ry, rcb, rcr = ref
        y, cb, cr = ry.copy(), rcb.copy(), rcr.copy()
        cmv = _chroma_mv(recipe.mv)
        for row in range(self.mb_h):
            for col in range(self.mb_w):
                if not _mc_in_bounds(ry.shape, 16 * row, 16 * col, 16, 16,
                                     recipe.mv):
                    continue
                y[16 * row:16 * row + 16, 16 * col:16 * col + 16] = \
                    _mc_fetch(ry, 16 * row, 16 * col, 16, 16, recipe.mv)
                cb[8 * row:8 * row + 8, 8 * col:8 * col + 8] = \
                    _mc_fetch(rcb, 8 * row, 8 * col, 8, 8, cmv)
                cr[8 * row:8 * row + 8, 8 * col:8 * col + 8] = \
                    _mc_fetch(rcr, 8 * row, 8 * col, 8, 8, cmv)
        return (y.astype(np.uint8), cb.astype(np.uint8), cr.astype(np.uint8),
                True)

    def _expected_average_b(self, recipe: AverageB, fwd, bwd):
        out = []
        shape = fwd[0].shape
        for plane_index in range(3):
            f_plane = fwd[plane_index]
            b_plane = bwd[plane_index]
            scale = 1 if plane_index == 0 else 2
            mvf = recipe.mv_forward if plane_index == 0 \
                else _chroma_mv(recipe.mv_forward)
            mvb = recipe.mv_backward if plane_index == 0 \
                else _chroma_mv(recipe.mv_backward)
            size = 16 // scale
            plane = np.zeros_like(f_plane)
            for row in range(self.mb_h):
                for col in range(self.mb_w):
                    ok = (_mc_in_bounds(shape, 16 * row, 16 * col, 16, 16,
                                        recipe.mv_forward)
                          and _mc_in_bounds(shape, 16 * row, 16 * col, 16, 16,
                                            recipe.mv_backward))
                    uf = mvf if ok else (0, 0)
                    ub = mvb if ok else (0, 0)
                    y0, x0 = size * row, size * col
                    f = _mc_fetch(f_plane, y0, x0, size, size, uf)
                    b = _mc_fetch(b_plane, y0, x0, size, size, ub)
                    plane[y0:y0 + size, x0:x0 + size] = (f + b + 1) >> 1
            out.append(plane.astype(np.uint8))
        return out[0], out[1], out[2], True

    def _expected_field_pred_p(self, recipe: FieldPredP, ref):
        ry, rcb, rcr = ref
        y, cb, cr = ry.copy(), rcb.copy(), rcr.copy()
        for row in range(self.mb_h):
            for col in range(self.mb_w):
                for parity, (mv, fsel) in enumerate(
                        self._field_mb_vectors(recipe, row, col)):
                    cmv = _chroma_mv(mv)
                    y[parity::2][8 * row:8 * row + 8, 16 * col:16 * col + 16] = \
                        _mc_fetch(ry[fsel::2], 8 * row, 16 * col, 8, 16, mv)
                    cb[parity::2][4 * row:4 * row + 4, 8 * col:8 * col + 8] = \
                        _mc_fetch(rcb[fsel::2], 4 * row, 8 * col, 4, 8, cmv)
                    cr[parity::2][4 * row:4 * row + 4, 8 * col:8 * col + 8] = \
                        _mc_fetch(rcr[fsel::2], 4 * row, 8 * col, 4, 8, cmv)
        return (y.astype(np.uint8), cb.astype(np.uint8), cr.astype(np.uint8),
                True)

    # -------------------------------------------------------------- driver

    def generate(self) -> GeneratedFixture:
        spec = self.spec
        kinds = [recipe_kind(r) for r in spec.pictures]
        trefs = _temporal_references(kinds)
        self._sequence_header()
        span_starts = []
        refs: list[tuple] = []          # forward, backward expected planes
        expected_in_decode = []
        exactness = []
        for index, recipe in enumerate(spec.pictures):
            kind = kinds[index]
            self.w.byte_align()
            gop_offset = None
            if index in spec.gop_before:
                gop_offset = self.w.bit_length
                self._gop_header()
                self.w.byte_align()
            # The first picture's span begins at its own start code; later
            # pictures absorb any GOP header written in front of them.
            if index == 0 or gop_offset is None:
                span_starts.append(self.w.bit_length)
            else:
                span_starts.append(gop_offset)
            vbv_delay = 0xFFFF if spec.vbv_delays is None \
                else spec.vbv_delays[index]
            f_codes = _pick_f_codes(kind, recipe)
            frame_pred = not isinstance(recipe, FieldPredP)
            progressive_frame = spec.progressive
            self._picture_headers(kind, trefs[index], vbv_delay, f_codes,
                                  frame_pred, progressive_frame)
            if kind == "I":
                self._encode_intra_picture(recipe)
                y, cb, cr, exact = self._expected_intra(recipe)
            elif isinstance(recipe, MoveP):
                self._encode_move_p(recipe, f_codes)
                y, cb, cr, exact = self._expected_move_p(recipe, refs[-1])
            elif isinstance(recipe, SkipMiddleP):
                self._encode_skip_middle_p(f_codes)
                y, cb, cr, exact = self._expected_move_p(MoveP((0, 0)),
                                                         refs[-1])
            elif isinstance(recipe, FieldPredP):
                self._encode_field_pred_p(recipe, f_codes)
                y, cb, cr, exact = self._expected_field_pred_p(recipe,
                                                               refs[-1])
            else:
                self._encode_average_b(recipe, f_codes)
                y, cb, cr, exact = self._expected_average_b(
                    recipe, refs[-2], refs[-1])
            if kind in "IP":
                refs.append((y, cb, cr))
                refs = refs[-2:]
            expected_in_decode.append((y, cb, cr))
            exactness.append(exact)
            self.w.byte_align()
            if spec.pad_to_bits is not None:
                target = spec.pad_to_bits[index]
                used = self.w.bit_length - span_starts[-1]
                if target < used or (target - used) % 8:
                    raise FixtureSpecError(
                        f"picture {index} needs {used} bits, cannot pad to "
                        f"{target}")
                self.w.pad_bytes((target - used) // 8)
        self.w.byte_align()
        end_offset = self.w.bit_length
        self.w.start_code(0xB7)
        stream = self.w.data()

        picture_bits = []
        for index in range(len(spec.pictures)):
            end = span_starts[index + 1] if index + 1 < len(span_starts) \
                else end_offset
            picture_bits.append(end - span_starts[index])

        display = sorted(range(len(spec.pictures)), key=lambda i: trefs[i])
        expected_display = [
            ExpectedPicture(label=f"{kinds[i]}{trefs[i]}",
                            coding_type=kinds[i], temporal_reference=trefs[i],
                            y=expected_in_decode[i][0],
                            cb=expected_in_decode[i][1],
                            cr=expected_in_decode[i][2], exact=exactness[i])
            for i in display]
        labels = [f"{kinds[i]}{trefs[i]}" for i in range(len(kinds))]
        return GeneratedFixture(stream=stream, spec=spec,
                                expected_display=expected_display,
                                picture_bits=picture_bits,
                                decode_labels=labels)


def _mb_type(picture_coding_type: int, **flags) -> MacroblockType:
    return MacroblockType(**flags)


def _pick_f_codes(kind: str, recipe):
    unused = ((15, 15), (15, 15))
    if kind == "I":
        return unused

    def f_for(mv: tuple[int, int]) -> tuple[int, int]:
        out = []
        for component in mv:
            f = 1
            while abs(component) >= 16 << (f - 1):
                f += 1
            out.append(f)
        return max(out[0], 1), max(out[1], 1)

    if isinstance(recipe, MoveP):
        return (f_for(recipe.mv), (15, 15))
    if isinstance(recipe, SkipMiddleP):
        return ((1, 1), (15, 15))
    if isinstance(recipe, FieldPredP):
        fa = f_for(recipe.top[0])
        fb = f_for(recipe.bottom[0])
        return ((max(fa[0], fb[0]), max(fa[1], fb[1])), (15, 15))
    if isinstance(recipe, AverageB):
        return (f_for(recipe.mv_forward), f_for(recipe.mv_backward))
    raise FixtureSpecError(f"no f_codes for {recipe!r}")


def _temporal_references(kinds: list[str]) -> list[int]:
    """Display position of each decode-order picture (single GOP)."""
    n = len(kinds)
    display = [0] * n
    slot = 0
    held = None                      # reference waiting for its display slot
    for i, kind in enumerate(kinds):
        if kind == "B":
            display[i] = slot
            slot += 1
        else:
            if held is not None:
                display[held] = slot
                slot += 1
            held = i
    if held is not None:
        display[held] = slot
    return display


def generate(spec: FixtureSpec) -> GeneratedFixture:
    """Emit the stream and expected decode for a fixture spec."""
    return _FixtureEncoder(spec).generate()


# ----------------------------------------------------------- declarative specs

_RECIPE_PARSERS = {
    "flat": lambda a: FlatIntra(*map(int, a)),
    "checkerboard": lambda a: CheckerboardIntra(*map(int, a)),
    "ac_basis": lambda a: AcBasisIntra(dc=int(a[0]), u=int(a[1]),
                                       v=int(a[2]), level=int(a[3])),
    "move_p": lambda a: MoveP(mv=(int(a[0]), int(a[1]))),
    "skip_middle_p": lambda a: SkipMiddleP(),
    "average_b": lambda a: AverageB(
        mv_forward=(int(a[0]), int(a[1])) if a else (0, 0),
        mv_backward=(int(a[2]), int(a[3])) if len(a) > 2 else (0, 0)),
    "field_pred_p": lambda a: FieldPredP(
        top=((int(a[0]), int(a[1])), int(a[2])),
        bottom=((int(a[3]), int(a[4])), int(a[5]))),
}

_FLAG_FIELDS = {"q_scale_type", "intra_vlc_format", "alternate_scan",
                "progressive", "flat_quant_matrices"}
_INT_FIELDS = {"width", "height", "frame_rate_code", "bit_rate",
               "vbv_buffer_size", "quantiser_scale_code",
               "intra_dc_precision"}


def load_spec(text: str) -> FixtureSpec:
    """Parse the declarative one-directive-per-line fixture format.

    Lines are `<field> <value>` for the FixtureSpec scalars,
    `picture <recipe> <args...>` for each decode-order picture, and
    `pad_to_bits <n> <n> ...` for padding targets; `#` starts a comment.
    """
    fields: dict = {"pictures": []}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key == "picture":
            recipe, *recipe_args = args
            try:
                fields["pictures"].append(_RECIPE_PARSERS[recipe](recipe_args))
            except KeyError:
                raise FixtureSpecError(f"unknown recipe {recipe!r}") from None
        elif key == "pad_to_bits":
            fields["pad_to_bits"] = [int(v) for v in args]
        elif key in _INT_FIELDS:
            fields[key] = int(args[0])
        elif key in _FLAG_FIELDS:
            fields[key] = args[0].lower() in ("1", "true", "yes")
        else:
            raise FixtureSpecError(f"unknown fixture directive {key!r}")
    spec = FixtureSpec(**fields)
    spec.validate()
    return spec


# ------------------------------------------------------------- corruption


def locate_slice(stream: bytes, picture_index: int, row: int) -> int:
    """Byte offset just past the start code of a given picture's slice."""
    seen_pictures = -1
    pos = 0
    while True:
        found = stream.find(b"\x00\x00\x01", pos)
        if found < 0 or found + 3 >= len(stream):
            raise ValueError("slice not found")
        code = stream[found + 3]
        if code == 0x00:
            seen_pictures += 1
        elif 0x01 <= code <= 0xAF and seen_pictures == picture_index \
                and code == row + 1:
            return found + 4
        pos = found + 4


def corrupt_slice(stream: bytes, picture_index: int, row: int,
                  offset: int = 2) -> bytes:
    """Zero out one slice's payload from `offset` bytes in to its end.

    Zero bytes can neither form nor destroy a start code, so the damage
    stays inside the chosen slice.  Mid-macroblock, the zero run matches no
    variable-length code, which abandons the slice at the first damaged
    macroblock and sends the remainder of its row through concealment.
    """
    start = locate_slice(stream, picture_index, row)
    end = stream.find(b"\x00\x00\x01", start)
    if end < 0:
        end = len(stream)
    if start + offset >= end:
        raise ValueError("slice too small to corrupt at that offset")
    out = bytearray(stream)
    for i in range(start + offset, end):
        out[i] = 0x00
    return bytes(out)
