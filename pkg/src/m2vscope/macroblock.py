"""Macroblock-layer decoding: addresses, types, vectors, and coefficients.

This layer is pure bitstream work: it produces MacroblockRec values that
carry absolute motion vectors and run/level lists, leaving pixel work to
the picture assembler.  PredictorState is explicit so the reset rules are
directly testable.
"""

from dataclasses import dataclass, field

from .bitio import BitCursor
from .errors import CoefficientOverflow, InvalidCode, UnsupportedStream
from .headers import (PictureInfo, PictureStructure, PictureType, SequenceInfo,
                      SliceInfo, quantiser_scale_from_code)
from .motion import MotionVector, PredictionMode, decode_motion_component
from .vlc import (MacroblockType, RunLevel, coded_block_pattern_table,
                  decode_dc_differential, decode_run_level,
                  macroblock_address_table, macroblock_type_table)

INTRA_CBP = 0b111111


@dataclass
class PredictorState:
    """DC predictors, motion-vector predictors, and addressing state.

    The DC predictors reset to mid range at each slice start and after any
    non-intra macroblock; the PMV matrix resets at slice start, for intra
    macroblocks without concealment vectors, and for P-picture macroblocks
    that carry no forward motion.
    """

    intra_dc_precision: int = 8
    dc: list[int] = field(default_factory=lambda: [128, 128, 128])
    # pmv[r][s][t]: vector r (first/second), direction s (fwd/bwd), axis t (h/v)
    pmv: list = field(default_factory=lambda: [[[0, 0], [0, 0]], [[0, 0], [0, 0]]])
    last_address: int = -1
    quantiser_scale: int = 2
    # What the previous macroblock did, for B-picture skip semantics.
    prev_mode: PredictionMode | None = None
    prev_directions: tuple[bool, bool] = (False, False)

    def reset_dc(self) -> None:
        mid = 1 << (self.intra_dc_precision - 1)
        self.dc = [mid, mid, mid]

    def reset_pmv(self) -> None:
        self.pmv = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]

    def pmv_vector(self, r: int, s: int) -> MotionVector:
        return MotionVector(self.pmv[r][s][0], self.pmv[r][s][1])


@dataclass
class BlockData:
    dc: int | None                 # reconstructed intra DC predictor value
    run_levels: list[RunLevel]


@dataclass
class MacroblockRec:
    address: int
    mb_type: MacroblockType
    skipped: bool = False
    quantiser_scale: int = 2
    motion_mode: PredictionMode | None = None
    # Per direction (0 forward, 1 backward): list of (vector, field_select).
    motion: dict = field(default_factory=dict)
    dct_type_field: bool = False
    coded_block_pattern: int = 0
    blocks: list = field(default_factory=lambda: [None] * 6)


def start_slice(state: PredictorState, seq: SequenceInfo, slc: SliceInfo) -> None:
    """Apply the slice-start resets and position the address counter."""
    state.reset_dc()
    state.reset_pmv()
    state.quantiser_scale = slc.quantiser_scale
    state.last_address = slc.row * seq.mb_width - 1
    state.prev_mode = None
    state.prev_directions = (False, False)


def _decode_address_increment(cursor: BitCursor) -> int:
    increment = 0
    table = macroblock_address_table()
    while True:
        symbol = table.decode(cursor)
        if symbol == "ESCAPE":
            increment += 33
        else:
            return increment + symbol


def _decode_motion_type(cursor: BitCursor, pic: PictureInfo,
                        mb_type: MacroblockType) -> PredictionMode:
    if pic.picture_structure is not PictureStructure.FRAME:
        code = cursor.read_bits(2)
        if code == 1:
            return PredictionMode.FIELD_IN_FIELD
        if code == 2:
            raise UnsupportedStream("16x8 motion compensation")
        if code == 3:
            raise UnsupportedStream("dual prime prediction")
        raise InvalidCode("field_motion_type 00 is reserved")
    if pic.frame_pred_frame_dct:
        return PredictionMode.FRAME
    code = cursor.read_bits(2)
    if code == 2:
        return PredictionMode.FRAME
    if code == 1:
        return PredictionMode.FIELD_IN_FRAME
    if code == 3:
        raise UnsupportedStream("dual prime prediction")
    raise InvalidCode("frame_motion_type 00 is reserved")


def _decode_one_vector(cursor: BitCursor, state: PredictorState, r: int, s: int,
                       pic: PictureInfo, field_in_frame: bool) -> MotionVector:
    """Decode motion_vector(r, s) and update the predictor matrix.

    Field vectors inside frame pictures keep their vertical predictor in
    frame units: it is halved for prediction and the decoded value doubled
    for storage.
    """
    f_codes = pic.f_codes[s]
    h = decode_motion_component(cursor, f_codes[0], state.pmv[r][s][0])
    if field_in_frame:
        v = decode_motion_component(cursor, f_codes[1], state.pmv[r][s][1] >> 1)
        state.pmv[r][s] = [h, 2 * v]
    else:
        v = decode_motion_component(cursor, f_codes[1], state.pmv[r][s][1])
        state.pmv[r][s] = [h, v]
    return MotionVector(h, v)


def _decode_motion_vectors(cursor: BitCursor, state: PredictorState, s: int,
                           pic: PictureInfo, mode: PredictionMode) -> list:
    if mode is PredictionMode.FIELD_IN_FRAME:
        vectors = []
        for r in (0, 1):
            field_select = cursor.read_bits(1)
            vectors.append((_decode_one_vector(cursor, state, r, s, pic, True),
                            field_select))
        return vectors
    if mode is PredictionMode.FIELD_IN_FIELD:
        field_select = cursor.read_bits(1)
        mv = _decode_one_vector(cursor, state, 0, s, pic, False)
        state.pmv[1][s] = list(state.pmv[0][s])
        return [(mv, field_select)]
    mv = _decode_one_vector(cursor, state, 0, s, pic, False)
    state.pmv[1][s] = list(state.pmv[0][s])
    return [(mv, None)]


def decode_block(cursor: BitCursor, block_index: int, intra: bool,
                 pic: PictureInfo, state: PredictorState) -> BlockData:
    """Decode one block's coefficients as a run/level list.

    Intra blocks start with a DC differential applied to the per-component
    predictor; the run/level stream then covers serial positions 1..63.
    Non-intra blocks cover 0..63 and cannot open with EOB.
    """
    dc = None
    serial = 0
    if intra:
        component = 0 if block_index < 4 else block_index - 3
        delta = decode_dc_differential(
            cursor, "luma" if block_index < 4 else "chroma")
        state.dc[component] += delta
        dc = state.dc[component]
        serial = 1
    table_name = "b15" if intra and pic.intra_vlc_format else "b14"
    run_levels: list[RunLevel] = []
    first = not intra
    while True:
        rl = decode_run_level(cursor, table_name, first_coefficient=first)
        first = False
        if rl.is_eob:
            break
        serial += rl.run
        if serial > 63:
            raise CoefficientOverflow(
                f"run {rl.run} places coefficient at serial {serial}")
        serial += 1
        run_levels.append(rl)
    return BlockData(dc=dc, run_levels=run_levels)


def synthesize_skipped(addresses, pic: PictureInfo,
                       state: PredictorState) -> list[MacroblockRec]:
    """Materialize the macroblocks an address increment jumped over.

    P-picture skips are zero-vector frame predictions and reset the motion
    predictors; B-picture skips repeat the previous macroblock's prediction
    direction with the standing predictor vectors.
    """
    skipped = []
    for address in addresses:
        state.reset_dc()
        if pic.picture_coding_type is PictureType.P:
            state.reset_pmv()
            mode = (PredictionMode.FRAME
                    if pic.picture_structure is PictureStructure.FRAME
                    else PredictionMode.FIELD_IN_FIELD)
            motion = {0: [(MotionVector(0, 0),
                           None if mode is PredictionMode.FRAME else
                           int(pic.picture_structure is PictureStructure.BOTTOM_FIELD))]}
            rec = MacroblockRec(address=address,
                                mb_type=MacroblockType(motion_forward=True),
                                skipped=True, quantiser_scale=state.quantiser_scale,
                                motion_mode=mode, motion=motion)
        else:
            fwd, bwd = state.prev_directions
            if not (fwd or bwd):
                raise InvalidCode("B-picture skip with no previous prediction")
            in_frame = pic.picture_structure is PictureStructure.FRAME
            mode = (PredictionMode.FRAME if in_frame
                    else PredictionMode.FIELD_IN_FIELD)
            parity = None if in_frame else \
                int(pic.picture_structure is PictureStructure.BOTTOM_FIELD)
            motion = {}
            if fwd:
                motion[0] = [(state.pmv_vector(0, 0), parity)]
            if bwd:
                motion[1] = [(state.pmv_vector(0, 1), parity)]
            rec = MacroblockRec(address=address,
                                mb_type=MacroblockType(motion_forward=fwd,
                                                       motion_backward=bwd),
                                skipped=True, quantiser_scale=state.quantiser_scale,
                                motion_mode=mode, motion=motion)
        skipped.append(rec)
    return skipped


def decode_macroblock(cursor: BitCursor, seq: SequenceInfo, pic: PictureInfo,
                      slc: SliceInfo, state: PredictorState) -> list[MacroblockRec]:
    """Decode one coded macroblock, preceded by any skipped ones it implies.

    Returns the synthesized skipped records (in address order) followed by
    the coded record.
    """
    increment = _decode_address_increment(cursor)
    address = state.last_address + increment
    out = synthesize_skipped(range(state.last_address + 1, address), pic, state)
    state.last_address = address

    mb_type = macroblock_type_table(pic.picture_coding_type).decode(cursor)
    rec = MacroblockRec(address=address, mb_type=mb_type)
    has_motion = mb_type.motion_forward or mb_type.motion_backward
    if has_motion:
        rec.motion_mode = _decode_motion_type(cursor, pic, mb_type)
    elif mb_type.intra:
        rec.motion_mode = None
    else:
        # P-picture "No MC": zero forward vector, frame-style prediction.
        rec.motion_mode = (PredictionMode.FRAME
                           if pic.picture_structure is PictureStructure.FRAME
                           else PredictionMode.FIELD_IN_FIELD)
    if (pic.picture_structure is PictureStructure.FRAME
            and not pic.frame_pred_frame_dct
            and (mb_type.intra or mb_type.pattern)):
        rec.dct_type_field = bool(cursor.read_bits(1))

    if mb_type.quant:
        code = cursor.read_bits(5)
        if code == 0:
            raise InvalidCode("quantiser_scale_code 0 in macroblock")
        state.quantiser_scale = quantiser_scale_from_code(code, pic.q_scale_type)
    rec.quantiser_scale = state.quantiser_scale

    if mb_type.motion_forward:
        rec.motion[0] = _decode_motion_vectors(cursor, state, 0, pic,
                                               rec.motion_mode)
    elif mb_type.intra and pic.concealment_motion_vectors:
        # Concealment vectors keep the predictors in sync but are not used
        # for prediction here.
        if pic.picture_structure is not PictureStructure.FRAME:
            cursor.read_bits(1)
        _decode_one_vector(cursor, state, 0, 0, pic, False)
        state.pmv[1][0] = list(state.pmv[0][0])
        cursor.read_bits(1)            # marker bit
    if mb_type.motion_backward:
        rec.motion[1] = _decode_motion_vectors(cursor, state, 1, pic,
                                               rec.motion_mode)

    if not mb_type.intra and not mb_type.motion_forward \
            and pic.picture_coding_type is PictureType.P:
        state.reset_pmv()
        rec.motion[0] = [(MotionVector(0, 0),
                          None if pic.picture_structure is PictureStructure.FRAME
                          else int(pic.picture_structure is PictureStructure.BOTTOM_FIELD))]
    if mb_type.intra and not pic.concealment_motion_vectors:
        state.reset_pmv()

    if mb_type.pattern:
        rec.coded_block_pattern = coded_block_pattern_table().decode(cursor)
    elif mb_type.intra:
        rec.coded_block_pattern = INTRA_CBP

    if mb_type.intra:
        for i in range(6):
            rec.blocks[i] = decode_block(cursor, i, True, pic, state)
    else:
        state.reset_dc()
        for i in range(6):
            if rec.coded_block_pattern & (1 << (5 - i)):
                rec.blocks[i] = decode_block(cursor, i, False, pic, state)

    state.prev_mode = rec.motion_mode
    state.prev_directions = (mb_type.motion_forward, mb_type.motion_backward)
    out.append(rec)
    return out
