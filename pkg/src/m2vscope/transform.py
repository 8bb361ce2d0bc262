"""Inverse scan, inverse quantization, mismatch control, and the 8x8 IDCT.

All operations are pure functions on small numpy arrays.  Saturation steps
report how much they clipped through an optional ClipMeter, which feeds the
per-picture "maximum quantization error" statistic.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import tables
from .vlc import RunLevel
from .errors import CoefficientOverflow

COEFF_MIN, COEFF_MAX = -2048, 2047
SPATIAL_MIN, SPATIAL_MAX = -256, 255

# 1-D IDCT basis: _BASIS[x, i] = c(x)/2 * cos((2i+1) * x * pi / 16),
# with c(0) = sqrt(2)/2 and c(x) = 1 otherwise.
_BASIS = 0.5 * np.cos((2 * np.arange(8)[None, :] + 1)
                      * np.arange(8)[:, None] * np.pi / 16)
_BASIS[0, :] *= np.sqrt(2) / 2


class ClipMeter:
    """Collects the largest saturation corrections seen while decoding."""

    __slots__ = ("coeff_max", "pixel_max")

    def __init__(self):
        self.coeff_max = 0
        self.pixel_max = 0

    def record_coeff(self, err: int) -> None:
        if err > self.coeff_max:
            self.coeff_max = err

    def record_pixel(self, err: int) -> None:
        if err > self.pixel_max:
            self.pixel_max = err


class BlockStage(enum.Enum):
    RUN_LEVELS = "run_levels"
    QUANTIZED = "quantized"
    DEQUANTIZED = "dequantized"
    SPATIAL = "spatial"


@dataclass
class CoeffBlock:
    """One 8x8 block on its way from run/level list to spatial residual."""

    stage: BlockStage
    run_levels: list[RunLevel] = field(default_factory=list)
    matrix: np.ndarray | None = None


def inverse_scan(run_levels: list[RunLevel], scan: np.ndarray,
                 dc: int | None = None) -> np.ndarray:
    """Expand a run/level list onto the 8x8 grid along a scan order.

    `scan` maps serial index -> flat cell index.  When `dc` is given it is
    placed at cell (0,0) and the run/level stream starts at serial index 1
    (the intra-block layout); otherwise the stream starts at index 0.
    """
    flat = np.zeros(64, dtype=np.int32)
    serial = 0
    if dc is not None:
        flat[scan[0]] = dc
        serial = 1
    for rl in run_levels:
        if rl.is_eob:
            break
        serial += rl.run
        if serial > 63:
            raise CoefficientOverflow(f"coefficient placed at serial {serial}")
        flat[scan[serial]] = rl.level
        serial += 1
    return flat.reshape(8, 8)


def inverse_quantize(block: np.ndarray, intra: bool, w: np.ndarray, q_s: int,
                     intra_dc_precision: int = 8,
                     meter: ClipMeter | None = None) -> np.ndarray:
    """Rescale quantized coefficients and saturate to [-2048, 2047].

    Non-DC coefficients follow F = ((2*QF + k) * w * q_s) / 32 with the
    division truncated toward zero; k is 0 for intra blocks and sign(QF)
    otherwise.  The intra DC coefficient is instead multiplied by the step
    8/4/2/1 for a DC precision of 8/9/10/11 bits.
    """
    qf = block.astype(np.int64)
    k = 0 if intra else np.sign(qf)
    raw = (2 * qf + k) * w.astype(np.int64) * q_s
    f = np.sign(raw) * (np.abs(raw) // 32)
    if intra:
        f[0, 0] = qf[0, 0] << (11 - intra_dc_precision)
    clipped = np.clip(f, COEFF_MIN, COEFF_MAX)
    if meter is not None:
        meter.record_coeff(int(np.abs(f - clipped).max()))
    return clipped.astype(np.int32)


def mismatch_control(block: np.ndarray) -> np.ndarray:
    """Toggle the LSB of coefficient (7,7) when the block sum is even.

    The post-condition is an odd coefficient sum, which prevents slow
    encoder/decoder IDCT drift.  Odd-sum blocks pass through unchanged.
    """
    if int(block.sum()) % 2 == 1:
        return block
    out = block.copy()
    out[7, 7] ^= 1
    return out


def idct_8x8(block: np.ndarray, meter: ClipMeter | None = None) -> np.ndarray:
    """Two-pass separable 8x8 inverse DCT, rounded and clipped to [-256, 255]."""
    rows = block.astype(np.float64) @ _BASIS      # 1-D pass along each row
    spatial = _BASIS.T @ rows                     # 1-D pass along each column
    rounded = np.rint(spatial).astype(np.int64)
    clipped = np.clip(rounded, SPATIAL_MIN, SPATIAL_MAX)
    if meter is not None:
        meter.record_pixel(int(np.abs(rounded - clipped).max()))
    return clipped.astype(np.int32)


def reconstruct_block(spatial: np.ndarray,
                      prediction: np.ndarray | None = None) -> np.ndarray:
    """Add the residual to its prediction (if any) and clamp to pixel range."""
    if prediction is None:
        total = spatial
    else:
        total = prediction.astype(np.int32) + spatial
    return np.clip(total, 0, 255).astype(np.uint8)


def dequantize_block(run_levels: list[RunLevel], *, intra: bool,
                     seq_matrices, q_s: int, scan: np.ndarray,
                     intra_dc_precision: int = 8, dc: int | None = None,
                     meter: ClipMeter | None = None) -> np.ndarray:
    """Convenience pipeline: inverse scan + inverse quantize + mismatch control."""
    w = seq_matrices[0] if intra else seq_matrices[1]
    quantized = inverse_scan(run_levels, scan, dc=dc)
    dequant = inverse_quantize(quantized, intra, w, q_s,
                               intra_dc_precision=intra_dc_precision, meter=meter)
    return mismatch_control(dequant)
