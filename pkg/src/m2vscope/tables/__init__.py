"""Loaders for the human-auditable table fixture files in this package.

Every file is plain text, one entry per line, with ``#`` comments, so the
tables can be diffed against their published sources.
"""

from functools import cache
from importlib import resources

import numpy as np


def _read_lines(filename: str) -> list[list[str]]:
    text = resources.files(__package__).joinpath(filename).read_text()
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    return rows


def vlc_entries(filename: str) -> list[tuple[str, tuple[str, ...]]]:
    """Return (bitstring, args) pairs from a VLC table file."""
    out = []
    for row in _read_lines(filename):
        bits, args = row[0], tuple(row[1:])
        if set(bits) - {"0", "1"}:
            raise ValueError(f"{filename}: bad code string {bits!r}")
        out.append((bits, args))
    return out


def _sectioned_ints(filename: str) -> dict[str, list[int]]:
    sections: dict[str, list[int]] = {}
    current = None
    for row in _read_lines(filename):
        if row[0].startswith("["):
            current = row[0].strip("[]")
            sections[current] = []
        else:
            sections[current].extend(int(v) for v in row)
    return sections


@cache
def scan_order(name: str) -> np.ndarray:
    """64-entry scan permutation (serial index -> flat cell index)."""
    values = _sectioned_ints("scan_matrices.txt")[name]
    order = np.array(values, dtype=np.intp)
    if order.shape != (64,) or sorted(order.tolist()) != list(range(64)):
        raise ValueError(f"scan matrix {name!r} is not a permutation of 0..63")
    return order


@cache
def default_intra_matrix() -> np.ndarray:
    values = _sectioned_ints("quant_defaults.txt")["intra_matrix"]
    return np.array(values, dtype=np.int32).reshape(8, 8)


@cache
def default_non_intra_matrix() -> np.ndarray:
    return np.full((8, 8), 16, dtype=np.int32)


@cache
def nonlinear_quantiser_scale() -> tuple[int, ...]:
    """Maps quantiser_scale_code 1..31 to a step; index 0 is unused."""
    values = _sectioned_ints("quant_defaults.txt")["nonlinear_quantiser_scale"]
    if len(values) != 31:
        raise ValueError("nonlinear quantiser scale table must have 31 entries")
    return (0, *values)
