"""Full decode pipeline: start-code loop, picture assembly, concealment.

The decoder walks start codes, reconstructs pictures macroblock by
macroblock, hands them to the frame store for display ordering, and feeds
the bandwidth accumulator with each picture's coded-bit span.

Error handling has two modes.  In strict mode the first stream error
raises.  In tolerant mode an error inside a slice abandons that slice:
its remaining macroblocks are concealed by choosing, per macroblock, the
candidate motion vector whose forward-reference prediction best continues
the surrounding pixels.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import headers, tables
from .bandwidth import BandwidthAccumulator, BandwidthReport
from .bitio import END_OF_STREAM, BitCursor
from .errors import (CoefficientOverflow, EndOfStream, EscapeLevelZero,
                     InvalidCode, MalformedStream, MissingReference,
                     UnsupportedStream)
from .framestore import FramePicture, FrameStore, ReferencePair
from .headers import PictureInfo, PictureStructure, PictureType, SequenceInfo
from .macroblock import (MacroblockRec, PredictorState, decode_macroblock,
                         start_slice, synthesize_skipped)
from .motion import (MotionVector, PredictionMode, PredictionRequest,
                     chroma_vector, conceal_select_mv, fetch_block, predict)
from .transform import ClipMeter, dequantize_block, idct_8x8, reconstruct_block

log = logging.getLogger(__name__)

#: Errors that abandon a slice instead of the whole stream (tolerant mode).
SLICE_ERRORS = (InvalidCode, CoefficientOverflow, EscapeLevelZero,
                MalformedStream, MissingReference, EndOfStream)


def select_reference(pic: PictureInfo, direction: int, refs: ReferencePair,
                     *, second_field: bool = False,
                     field_parity: int | None = None,
                     field_select: int | None = None,
                     current: FramePicture | None = None) -> FramePicture:
    """Choose the reference picture for one prediction direction.

    A B picture's forward reference is the older held reference and its
    backward reference the newer one.  A P picture forward-predicts from
    the newest completed reference (the picture that will be display-past
    relative to it), except that the second field of a reference field
    pair predicting from the opposite parity reads the just-decoded first
    field of its own frame.
    """
    if pic.picture_coding_type is PictureType.B:
        ref = refs.backward if direction == 1 else refs.forward
        if ref is None:
            raise MissingReference(
                f"no {'backward' if direction else 'forward'} reference")
        return ref
    if (second_field and field_select is not None and field_parity is not None
            and field_select != field_parity):
        if current is None:
            raise MissingReference("no first field to predict from")
        return current
    if refs.backward is None:
        raise MissingReference("no forward reference")
    return refs.backward


def _field_views(picture: FramePicture, parity: int):
    return (picture.y_plane[parity::2], picture.cb_plane[parity::2],
            picture.cr_plane[parity::2])


@dataclass
class PictureContext:
    pic: PictureInfo
    span_start: int
    frame: FramePicture | None = None
    field_parity: int | None = None      # parity being decoded, field pictures
    second_field: bool = False
    meter: ClipMeter = field(default_factory=ClipMeter)
    concealed_slices: int = 0
    dropped: bool = False
    assembled_macroblocks: int = 0
    mv_map: dict = field(default_factory=dict)
    last_forward_mv: MotionVector | None = None

    @property
    def is_field(self) -> bool:
        return self.field_parity is not None


@dataclass
class DecodeResult:
    pictures: list[FramePicture]         # display order
    report: BandwidthReport | None
    seq: SequenceInfo | None


class StreamDecoder:
    """Decodes one elementary stream; single-owner, decode-order driven."""

    def __init__(self, data: bytes, *, tolerant: bool = True,
                 max_frames: int | None = None, stream_label: str = ""):
        self.cursor = BitCursor(data)
        self.tolerant = tolerant
        self.max_frames = max_frames
        self.stream_label = stream_label
        self.seq: SequenceInfo | None = None
        self.gop = None
        self.store = FrameStore()
        self.acc: BandwidthAccumulator | None = None
        self.pictures: list[FramePicture] = []
        self.decoded_frames = 0
        self.ctx: PictureContext | None = None
        self._pending_span: int | None = None
        self._need_sequence_extension = False
        self._ext_context: str | None = None
        self._saw_sequence_end = False
        self._pending_field: tuple[FramePicture, int] | None = None
        self._first_field_span = 0
        self._first_field_concealed = 0

    # ------------------------------------------------------------ geometry

    def _mb_rows(self) -> int:
        rows = self.seq.mb_height
        return rows // 2 if self.ctx is not None and self.ctx.is_field else rows

    def _target_planes(self):
        ctx = self.ctx
        if ctx.is_field:
            return _field_views(ctx.frame, ctx.field_parity)
        return ctx.frame.planes

    # ------------------------------------------------------------ driver

    def run(self) -> DecodeResult:
        while True:
            try:
                if not self._step():
                    break
            except EndOfStream:
                if not self.tolerant:
                    raise MalformedStream("stream truncated inside a header")
                log.warning("stream truncated inside a header")
                self._close_picture(self.cursor.total_bits)
                break
        self.pictures.extend(self.store.flush())
        return self._result()

    def _step(self) -> bool:
        """Process one start-code unit; False ends the stream."""
        code = self.cursor.next_start_code()
        if code == END_OF_STREAM:
            # Real-world elementary streams often omit the sequence end
            # code; ending at a start-code boundary is fine in both modes.
            if self.seq is None:
                raise MalformedStream("no sequence header in stream")
            self._close_picture(self.cursor.total_bits)
            return False
        prefix_offset = self.cursor.bits_consumed() - 32
        if self._need_sequence_extension and code != headers.EXTENSION_START:
            raise UnsupportedStream(
                "sequence header without sequence extension (MPEG-1 stream?)")
        if code == headers.SEQUENCE_HEADER:
            self._close_picture(prefix_offset)
            self._note_boundary(prefix_offset)
            self._on_sequence_header()
        elif code == headers.EXTENSION_START:
            self._on_extension()
        elif code == headers.GROUP_START:
            self._close_picture(prefix_offset)
            self._note_boundary(prefix_offset)
            self.gop = headers.parse_gop_header(self.cursor)
        elif code == headers.PICTURE_START:
            self._close_picture(prefix_offset)
            if self.max_frames is not None \
                    and self.decoded_frames >= self.max_frames:
                return False
            self._on_picture_header(prefix_offset)
        elif headers.SLICE_START_FIRST <= code <= headers.SLICE_START_LAST:
            self._on_slice(code)
        elif code == headers.SEQUENCE_END:
            self._close_picture(prefix_offset)
            self._saw_sequence_end = True
            return False
        elif code == headers.USER_DATA_START:
            self._ext_context = None       # payload skipped by the scan
        else:
            log.debug("ignoring start code %#04x", code)
        return True

    def _result(self) -> DecodeResult:
        report = None
        if self.acc is not None and self.acc.per_frame:
            report = self.acc.summarize(
                vbv_underflow=self.acc.vbv.underflow,
                vbv_overflow=self.acc.vbv.overflow,
                concealed_slices=sum(p.concealed_slices for p in self.pictures),
                dropped_pictures=self.store.dropped_pictures)
        return DecodeResult(pictures=self.pictures, report=report, seq=self.seq)

    # ------------------------------------------------------------ headers

    def _note_boundary(self, prefix_offset: int) -> None:
        """Sequence/GOP headers belong to the picture that follows them."""
        if self.acc is not None and self.acc.per_frame \
                and self._pending_span is None:
            self._pending_span = prefix_offset

    def _on_sequence_header(self) -> None:
        new_seq = headers.parse_sequence_header(self.cursor)
        if self.seq is not None:
            if (new_seq.horizontal_size, new_seq.vertical_size) != \
                    (self.seq.horizontal_size & 0xFFF,
                     self.seq.vertical_size & 0xFFF):
                raise UnsupportedStream("picture geometry changed mid-stream")
            # Repeated headers may legally re-download quantiser matrices.
            self.seq.intra_quant_matrix = new_seq.intra_quant_matrix
            self.seq.non_intra_quant_matrix = new_seq.non_intra_quant_matrix
        else:
            self.seq = new_seq
            self._need_sequence_extension = True
        self._ext_context = "sequence"

    def _on_extension(self) -> None:
        ext_id = headers.parse_extensions(
            self.cursor, self._ext_context or "sequence", seq=self.seq,
            pic=self.ctx.pic if self.ctx is not None else None)
        if self._need_sequence_extension:
            if ext_id != headers.ExtensionId.SEQUENCE:
                raise UnsupportedStream("sequence header without sequence "
                                        "extension (MPEG-1 stream?)")
            self._need_sequence_extension = False
            if self.acc is None:
                self.acc = BandwidthAccumulator(self.seq, self.stream_label)

    def _on_picture_header(self, prefix_offset: int) -> None:
        if self.seq is None or self.acc is None:
            raise MalformedStream("picture before sequence header")
        pic = headers.parse_picture_header(self.cursor)
        span_start = self._pending_span if self._pending_span is not None \
            else prefix_offset
        self._pending_span = None
        self.ctx = PictureContext(pic=pic, span_start=span_start)
        self._ext_context = "picture"

    def _prepare_picture_target(self) -> None:
        """Allocate (or reattach) the assembly frame once the coding
        extension has told us the picture structure."""
        ctx = self.ctx
        if ctx.frame is not None:
            return
        pic = ctx.pic
        if pic.picture_structure is PictureStructure.FRAME:
            ctx.frame = FramePicture.blank(self.seq, pic.temporal_reference,
                                           pic.picture_coding_type,
                                           decode_index=self.decoded_frames)
            ctx.frame.progressive = pic.progressive_frame
            return
        if self.seq.vertical_size % 32:
            raise UnsupportedStream("field pictures need a height that is "
                                    "a multiple of 32")
        parity = 0 if pic.picture_structure is PictureStructure.TOP_FIELD else 1
        if self._pending_field is None:
            frame = FramePicture.blank(self.seq, pic.temporal_reference,
                                       pic.picture_coding_type,
                                       decode_index=self.decoded_frames)
            frame.progressive = False
            self._pending_field = (frame, parity)
            ctx.frame, ctx.field_parity, ctx.second_field = frame, parity, False
        else:
            frame, first_parity = self._pending_field
            if parity == first_parity:
                raise MalformedStream("two fields of the same parity")
            ctx.frame, ctx.field_parity, ctx.second_field = frame, parity, True

    def _close_picture(self, span_end: int) -> None:
        """Finalize the open picture at an accounting boundary."""
        ctx = self.ctx
        if ctx is None:
            return
        expected_mbs = self.seq.mb_width * self._mb_rows()
        self.ctx = None
        self._ext_context = None
        if ctx.frame is None and not ctx.dropped:
            if not self.tolerant:
                raise MalformedStream(f"picture {ctx.pic.label} has no coded data")
            log.warning("picture %s has no coded data", ctx.pic.label)
            ctx.dropped = True
        if not ctx.dropped and ctx.assembled_macroblocks < expected_mbs:
            if not self.tolerant:
                raise MalformedStream(
                    f"picture {ctx.pic.label} covers only "
                    f"{ctx.assembled_macroblocks} of {expected_mbs} macroblocks")
            log.warning("picture %s is missing %d macroblocks", ctx.pic.label,
                        expected_mbs - ctx.assembled_macroblocks)
        if ctx.is_field and not ctx.second_field:
            # First field done; the frame waits for its pair.
            self._first_field_span = ctx.span_start
            self._first_field_concealed = ctx.concealed_slices
            return
        span_start = ctx.span_start
        if ctx.is_field:
            span_start = self._first_field_span
            ctx.frame.concealed_slices += self._first_field_concealed
            self._pending_field = None
        if ctx.frame is not None:
            ctx.frame.concealed_slices += ctx.concealed_slices
        if not ctx.dropped:
            self.pictures.extend(self.store.commit_picture(ctx.frame))
        self.acc.account_picture(span_start, span_end, ctx.pic,
                                 quant_error_max=ctx.meter.coeff_max,
                                 clip_error_max=ctx.meter.pixel_max)
        self.decoded_frames += 1

    # ------------------------------------------------------------ slices

    def _on_slice(self, code: int) -> None:
        ctx = self.ctx
        if ctx is None:
            if self.tolerant:
                log.warning("slice %#04x outside any picture; skipped", code)
                return
            raise MalformedStream("slice data outside a picture")
        if not ctx.pic.has_coding_extension:
            raise UnsupportedStream("picture without picture coding extension "
                                    "(MPEG-1 stream?)")
        if ctx.pic.picture_coding_type is PictureType.B and not ctx.dropped \
                and (self.store.refs.forward is None
                     or self.store.refs.backward is None):
            ctx.dropped = True
            self.store.drop_broken_b(ctx.pic.label)
        if ctx.dropped:
            return
        self._prepare_picture_target()
        try:
            slc = headers.parse_slice_header(self.cursor, code, ctx.pic)
            if slc.row >= self._mb_rows():
                raise MalformedStream(f"slice row {slc.row} outside picture")
        except SLICE_ERRORS as exc:
            if not self.tolerant:
                raise
            log.warning("slice header error: %s", exc)
            ctx.concealed_slices += 1
            row = code - 1
            if row < self._mb_rows():
                self._conceal_range(row, row * self.seq.mb_width)
            return
        state = PredictorState(intra_dc_precision=ctx.pic.intra_dc_precision)
        start_slice(state, self.seq, slc)
        assembled_through = state.last_address
        try:
            while True:
                for rec in decode_macroblock(self.cursor, self.seq, ctx.pic,
                                             slc, state):
                    self._assemble_macroblock(rec)
                    assembled_through = rec.address
                if self.cursor.bits_remaining() < 23 \
                        or self.cursor.peek_bits(23) == 0:
                    break
        except SLICE_ERRORS as exc:
            if not self.tolerant:
                raise
            log.warning("slice at row %d abandoned: %s", slc.row, exc)
            ctx.concealed_slices += 1
            self._conceal_range(slc.row, assembled_through + 1)
            return
        last_of_row = (slc.row + 1) * self.seq.mb_width - 1
        if state.last_address < last_of_row:
            # Encoders end a slice after its last coded macroblock and let
            # the remainder of the row stand as skipped; synthesize those.
            # Intra pictures have no skip semantics, so a short intra slice
            # is damage and goes through concealment instead.
            if ctx.pic.picture_coding_type is PictureType.I:
                if not self.tolerant:
                    raise MalformedStream(
                        f"intra slice at row {slc.row} ended early")
                ctx.concealed_slices += 1
                self._conceal_range(slc.row, state.last_address + 1)
                return
            for rec in synthesize_skipped(
                    range(state.last_address + 1, last_of_row + 1),
                    ctx.pic, state):
                self._assemble_macroblock(rec)

    # ------------------------------------------------------------ assembly

    def _assemble_macroblock(self, rec: MacroblockRec) -> None:
        ctx = self.ctx
        seq = self.seq
        row, col = divmod(rec.address, seq.mb_width)
        if row >= self._mb_rows():
            raise MalformedStream(f"macroblock address {rec.address} "
                                  "outside picture")
        prediction = None
        if not rec.mb_type.intra:
            prediction = self._predict_macroblock(rec, row, col)
        luma, cb, cr = self._residuals(rec)
        y0, x0 = 16 * row, 16 * col
        tgt_y, tgt_cb, tgt_cr = self._target_planes()
        if prediction is None:
            py = pcb = pcr = None
        else:
            py, pcb, pcr = prediction
        tgt_y[y0:y0 + 16, x0:x0 + 16] = reconstruct_block(luma, py)
        tgt_cb[y0 // 2:y0 // 2 + 8, x0 // 2:x0 // 2 + 8] = \
            reconstruct_block(cb, pcb)
        tgt_cr[y0 // 2:y0 // 2 + 8, x0 // 2:x0 // 2 + 8] = \
            reconstruct_block(cr, pcr)
        ctx.assembled_macroblocks += 1
        if 0 in rec.motion:
            mv = rec.motion[0][0][0]
            ctx.mv_map[rec.address] = mv
            ctx.last_forward_mv = mv

    def _predict_macroblock(self, rec: MacroblockRec, row: int, col: int):
        request = PredictionRequest(mode=rec.motion_mode, mb_row=row, mb_col=col)
        for direction, vectors in rec.motion.items():
            planes = self._reference_planes(direction, rec, vectors)
            if direction == 0:
                request.forward, request.forward_planes = vectors, planes
            else:
                request.backward, request.backward_planes = vectors, planes
        return predict(request)

    def _reference_planes(self, direction: int, rec: MacroblockRec, vectors):
        ctx = self.ctx
        if rec.motion_mode is PredictionMode.FIELD_IN_FIELD:
            field_select = vectors[0][1]
            ref = select_reference(ctx.pic, direction, self.store.refs,
                                   second_field=ctx.second_field,
                                   field_parity=ctx.field_parity,
                                   field_select=field_select,
                                   current=ctx.frame)
            return _field_views(ref, field_select)
        ref = select_reference(ctx.pic, direction, self.store.refs)
        return ref.planes

    def _residuals(self, rec: MacroblockRec):
        """Dequantize and inverse-transform the coded blocks of a macroblock."""
        ctx = self.ctx
        seq = self.seq
        scan = tables.scan_order(
            "alternate" if ctx.pic.alternate_scan else "zigzag")
        matrices = (seq.intra_quant_matrix, seq.non_intra_quant_matrix)
        luma = np.zeros((16, 16), dtype=np.int32)
        cb = np.zeros((8, 8), dtype=np.int32)
        cr = np.zeros((8, 8), dtype=np.int32)
        for i in range(6):
            block = rec.blocks[i]
            if block is None:
                continue
            dequant = dequantize_block(
                block.run_levels, intra=rec.mb_type.intra,
                seq_matrices=matrices, q_s=rec.quantiser_scale, scan=scan,
                intra_dc_precision=ctx.pic.intra_dc_precision,
                dc=block.dc, meter=ctx.meter)
            spatial = idct_8x8(dequant, meter=ctx.meter)
            if i == 4:
                cb[:, :] = spatial
            elif i == 5:
                cr[:, :] = spatial
            elif rec.dct_type_field:
                # Field DCT: blocks 0/1 hold the even (top-field) lines,
                # blocks 2/3 the odd lines, each half a macroblock wide.
                parity, half = divmod(i, 2)
                luma[parity::2, 8 * half:8 * half + 8] = spatial
            else:
                r, c = divmod(i, 2)
                luma[8 * r:8 * r + 8, 8 * c:8 * c + 8] = spatial
        return luma, cb, cr

    # ------------------------------------------------------------ concealment

    def _conceal_range(self, row: int, from_address: int) -> None:
        """Replace undecodable macroblocks with motion-compensated guesses.

        Candidates per macroblock: the zero vector, the last decoded
        forward vector, and the vector of the macroblock above.  The
        candidate minimizing boundary variation against the available
        neighbours wins.  Without a forward reference the initialized
        pixels are left in place.
        """
        ctx = self.ctx
        seq = self.seq
        refs = self.store.refs
        forward = refs.forward \
            if ctx.pic.picture_coding_type is PictureType.B else refs.backward
        if forward is None:
            return
        if ctx.is_field:
            src_y, src_cb, src_cr = _field_views(forward, ctx.field_parity)
        else:
            src_y, src_cb, src_cr = forward.planes
        tgt_y, tgt_cb, tgt_cr = self._target_planes()
        end_address = (row + 1) * seq.mb_width
        for address in range(max(from_address, row * seq.mb_width), end_address):
            col = address - row * seq.mb_width
            y0, x0 = 16 * row, 16 * col
            candidates = [MotionVector(0, 0)]
            if ctx.last_forward_mv is not None:
                candidates.append(ctx.last_forward_mv)
            above = ctx.mv_map.get(address - seq.mb_width)
            if above is not None:
                candidates.append(above)
            candidates = list(dict.fromkeys(candidates))

            def make_prediction(mv):
                try:
                    return fetch_block(src_y, y0, x0, 16, 16, mv)
                except MalformedStream:
                    # Out-of-bounds candidate: huge variation, never wins.
                    return np.full((16, 16), 1 << 20, dtype=np.int64)

            top_row = tgt_y[y0 - 1, x0:x0 + 16].astype(np.int64) \
                if row > 0 else None
            left_col = tgt_y[y0:y0 + 16, x0 - 1].astype(np.int64) \
                if col > 0 else None
            below = None
            if y0 + 16 < src_y.shape[0]:
                below = src_y[y0 + 16, x0:x0 + 16].astype(np.int64)
            mv = conceal_select_mv(candidates, make_prediction,
                                   top_row=top_row, left_col=left_col,
                                   bottom_row=below)
            cmv = chroma_vector(mv)
            tgt_y[y0:y0 + 16, x0:x0 + 16] = \
                fetch_block(src_y, y0, x0, 16, 16, mv)
            tgt_cb[y0 // 2:y0 // 2 + 8, x0 // 2:x0 // 2 + 8] = \
                fetch_block(src_cb, y0 // 2, x0 // 2, 8, 8, cmv)
            tgt_cr[y0 // 2:y0 // 2 + 8, x0 // 2:x0 // 2 + 8] = \
                fetch_block(src_cr, y0 // 2, x0 // 2, 8, 8, cmv)
            ctx.mv_map[address] = mv
            ctx.assembled_macroblocks += 1


def decode_elementary_stream(data: bytes, *, tolerant: bool = True,
                             max_frames: int | None = None,
                             stream_label: str = "") -> DecodeResult:
    """Decode a whole .m2v elementary stream held in memory."""
    return StreamDecoder(data, tolerant=tolerant, max_frames=max_frames,
                         stream_label=stream_label).run()
