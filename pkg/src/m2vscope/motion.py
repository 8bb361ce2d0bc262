"""Motion-vector decoding and motion-compensated prediction.

Vectors are kept in half-sample units of the grid they apply to (frame
lines for frame prediction, field lines for field prediction).  Prediction
works on numpy plane views, so field prediction is plain prediction on a
``plane[parity::2]`` view.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .bitio import BitCursor
from .errors import MalformedStream, NoCandidates
from .vlc import motion_code_table


@dataclass(frozen=True)
class MotionVector:
    horizontal: int = 0
    vertical: int = 0


ZERO_VECTOR = MotionVector(0, 0)


class PredictionMode(enum.Enum):
    FRAME = "frame"                    # one 16x16 fetch per direction
    FIELD_IN_FRAME = "field_in_frame"  # two 16x8 field fetches per direction
    FIELD_IN_FIELD = "field_in_field"  # one 16x16 fetch inside a field


@dataclass
class PredictionRequest:
    mode: PredictionMode
    mb_row: int
    mb_col: int
    # Per direction: list of (vector, field_select) pairs and the reference
    # planes (y, cb, cr) they fetch from.  FIELD_IN_FIELD passes field views.
    forward: list[tuple[MotionVector, int | None]] | None = None
    backward: list[tuple[MotionVector, int | None]] | None = None
    forward_planes: tuple | None = None
    backward_planes: tuple | None = None


def decode_motion_component(cursor: BitCursor, f_code: int, predictor: int) -> int:
    """Decode one differential vector component and wrap it into range."""
    code = motion_code_table().decode(cursor)
    if code == 0:
        delta = 0
    else:
        r_size = f_code - 1
        residual = cursor.read_bits(r_size) if r_size else 0
        magnitude = ((abs(code) - 1) << r_size) + residual + 1
        delta = -magnitude if code < 0 else magnitude
    span = 32 << (f_code - 1)
    value = predictor + delta
    if value < -span // 2:
        value += span
    elif value >= span // 2:
        value -= span
    return value


def decode_motion_vector(cursor: BitCursor, f_codes: tuple[int, int],
                         predictor: MotionVector) -> MotionVector:
    """Decode horizontal then vertical components against a predictor."""
    h = decode_motion_component(cursor, f_codes[0], predictor.horizontal)
    v = decode_motion_component(cursor, f_codes[1], predictor.vertical)
    return MotionVector(h, v)


def encode_motion_component(f_code: int, predictor: int, value: int) -> str:
    """Inverse of decode_motion_component, used by the fixture generator."""
    r_size = f_code - 1
    span = 32 << r_size
    delta = value - predictor
    if delta < -span // 2:
        delta += span
    elif delta >= span // 2:
        delta -= span
    if delta == 0:
        return motion_code_table().encode_bits(0)
    magnitude = abs(delta)
    code = ((magnitude - 1) >> r_size) + 1
    residual = magnitude - 1 - ((code - 1) << r_size)
    bits = motion_code_table().encode_bits(code if delta > 0 else -code)
    if r_size:
        bits += format(residual, f"0{r_size}b")
    return bits


def chroma_vector(mv: MotionVector) -> MotionVector:
    """Scale a luma vector to the half-resolution chroma grid (toward zero)."""
    def half(v: int) -> int:
        return v // 2 if v >= 0 else -((-v) // 2)
    return MotionVector(half(mv.horizontal), half(mv.vertical))


def fetch_block(plane: np.ndarray, y: int, x: int, height: int, width: int,
                mv: MotionVector) -> np.ndarray:
    """Fetch a motion-shifted block with half-sample bilinear interpolation.

    Averages round half up.  Vectors that reach outside the plane are a
    stream error, not an excuse to invent edge pixels.
    """
    ix, fx = mv.horizontal >> 1, mv.horizontal & 1
    iy, fy = mv.vertical >> 1, mv.vertical & 1
    top, left = y + iy, x + ix
    rows, cols = plane.shape
    if top < 0 or left < 0 or top + height + fy > rows or left + width + fx > cols:
        raise MalformedStream(
            f"motion vector ({mv.horizontal},{mv.vertical}) reaches outside "
            f"the {cols}x{rows} reference plane")
    a = plane[top:top + height, left:left + width].astype(np.int32)
    if not fx and not fy:
        return a
    if fx and not fy:
        b = plane[top:top + height, left + 1:left + 1 + width]
        return (a + b + 1) >> 1
    if fy and not fx:
        b = plane[top + 1:top + 1 + height, left:left + width]
        return (a + b + 1) >> 1
    b = plane[top:top + height, left + 1:left + 1 + width].astype(np.int32)
    c = plane[top + 1:top + 1 + height, left:left + width].astype(np.int32)
    d = plane[top + 1:top + 1 + height, left + 1:left + 1 + width].astype(np.int32)
    return (a + b + c + d + 2) >> 2


def _predict_one_direction(mode: PredictionMode, vectors, planes,
                           mb_row: int, mb_col: int):
    y_plane, cb_plane, cr_plane = planes
    if mode in (PredictionMode.FRAME, PredictionMode.FIELD_IN_FIELD):
        (mv, _), = vectors
        cmv = chroma_vector(mv)
        luma = fetch_block(y_plane, 16 * mb_row, 16 * mb_col, 16, 16, mv)
        cb = fetch_block(cb_plane, 8 * mb_row, 8 * mb_col, 8, 8, cmv)
        cr = fetch_block(cr_plane, 8 * mb_row, 8 * mb_col, 8, 8, cmv)
        return luma, cb, cr
    # Field prediction inside a frame picture: vector i predicts the lines
    # of field i of the macroblock from field field_select of the reference.
    luma = np.empty((16, 16), dtype=np.int32)
    cb = np.empty((8, 8), dtype=np.int32)
    cr = np.empty((8, 8), dtype=np.int32)
    for target_parity, (mv, field_select) in enumerate(vectors):
        cmv = chroma_vector(mv)
        src_y = y_plane[field_select::2]
        src_cb = cb_plane[field_select::2]
        src_cr = cr_plane[field_select::2]
        luma[target_parity::2] = fetch_block(src_y, 8 * mb_row, 16 * mb_col,
                                             8, 16, mv)
        cb[target_parity::2] = fetch_block(src_cb, 4 * mb_row, 8 * mb_col,
                                           4, 8, cmv)
        cr[target_parity::2] = fetch_block(src_cr, 4 * mb_row, 8 * mb_col,
                                           4, 8, cmv)
    return luma, cb, cr


def predict(request: PredictionRequest):
    """Form the (luma, cb, cr) prediction for one macroblock.

    Bidirectional predictions average the two directions with round-half-up,
    which makes the average symmetric in its arguments.
    """
    parts = []
    for vectors, planes in ((request.forward, request.forward_planes),
                            (request.backward, request.backward_planes)):
        if vectors is not None:
            parts.append(_predict_one_direction(request.mode, vectors, planes,
                                                request.mb_row, request.mb_col))
    if not parts:
        raise ValueError("prediction request with no direction")
    if len(parts) == 1:
        return parts[0]
    return tuple((f + b + 1) >> 1 for f, b in zip(parts[0], parts[1]))


def boundary_variation(predicted: np.ndarray,
                       top_row: np.ndarray | None,
                       left_col: np.ndarray | None,
                       bottom_row: np.ndarray | None) -> int:
    """Total squared variation between a predicted block's border and its
    reconstructed neighbours; missing neighbours contribute nothing."""
    v = 0
    if top_row is not None:
        d = predicted[0].astype(np.int64) - top_row
        v += int((d * d).sum())
    if left_col is not None:
        d = predicted[:, 0].astype(np.int64) - left_col
        v += int((d * d).sum())
    if bottom_row is not None:
        d = predicted[-1].astype(np.int64) - bottom_row
        v += int((d * d).sum())
    return v


def conceal_select_mv(candidates: list[MotionVector], make_prediction,
                      top_row=None, left_col=None,
                      bottom_row=None) -> MotionVector:
    """Pick the candidate vector whose prediction best continues the
    surrounding pixels (minimal total boundary variation, ties to the
    earliest candidate).

    make_prediction(mv) must return the predicted block for a candidate.
    """
    if not candidates:
        raise NoCandidates("no concealment candidates")
    best_mv, best_v = None, None
    for mv in candidates:
        v = boundary_variation(np.asarray(make_prediction(mv)),
                               top_row, left_col, bottom_row)
        if best_v is None or v < best_v:
            best_mv, best_v = mv, v
    return best_mv
