import numpy as np
import pytest

from m2vscope.bitio import BitCursor
from m2vscope.fixtures import BitWriter


def cursor_from_bits(bits: str, pad: str = "0") -> BitCursor:
    """Build a cursor whose first len(bits) bits are the given string."""
    total = (len(bits) + 7) // 8 * 8
    padded = bits + pad * (total - len(bits))
    data = int(padded, 2).to_bytes(total // 8, "big") if padded else b""
    return BitCursor(data)


@pytest.fixture
def make_cursor():
    return cursor_from_bits


@pytest.fixture
def make_writer():
    return BitWriter


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
