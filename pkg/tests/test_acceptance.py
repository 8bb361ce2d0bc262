"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Every tolerance is pinned here; the golden-decode expectations come from the
fixture generator's independent double-precision evaluation, and the
analytic oracles (quantizer sweep, direct IDCT) are local to this module.
"""

import json
import time

import numpy as np
import pytest

import m2vscope.decoder as decoder_module
from m2vscope import tables
from m2vscope.cli import main as cli_main
from m2vscope.decoder import decode_elementary_stream
from m2vscope.errors import DecodeError
from m2vscope.fixtures import (AverageB, CheckerboardIntra, FixtureSpec,
                               FlatIntra, MoveP, corrupt_slice, generate)
from m2vscope.transform import idct_8x8, inverse_quantize, inverse_scan, mismatch_control
from m2vscope.vlc import RunLevel, all_tables, decode_symbol
from conftest import cursor_from_bits


def report(criterion: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {status} {criterion} {detail}".rstrip())
    assert passed, f"{criterion}: {detail}"


# 1 -------------------------------------------------------------------------


def test_criterion_1_scan_bijection():
    started = time.perf_counter()
    ok = True
    for name in ("zigzag", "alternate"):
        order = tables.scan_order(name)
        hits = np.zeros((8, 8), dtype=int)
        for serial in range(64):
            hits += inverse_scan([RunLevel(run=serial, level=1)], order) != 0
        ok &= bool((hits == 1).all())
    elapsed = time.perf_counter() - started
    report("1 scan bijection", ok and elapsed < 1.0, f"({elapsed:.3f}s)")


# 2 -------------------------------------------------------------------------


def _quantize_oracle_flat(values, intra, w_flat, q_s, precision, dc_position):
    """Scalar rescaling rule for a block diagonal of distinct QF values."""
    out = []
    for index, value in enumerate(values):
        if intra and index == dc_position:
            f = value * (8 >> (precision - 8))
        else:
            k = 0 if intra or value == 0 else (1 if value > 0 else -1)
            raw = (2 * value + k) * w_flat[index] * q_s
            f = abs(raw) // 32
            if raw < 0:
                f = -f
        out.append(min(2047, max(-2048, f)))
    return out


def test_criterion_2_inverse_quantization_oracle():
    started = time.perf_counter()
    qf_values = np.arange(-60, 61, dtype=np.int64)
    cases = 0
    mismatches = 0
    for w_value in (1, 8, 16, 255):
        w = np.full((8, 8), w_value, dtype=np.int64)
        for q_s in (2, 16, 62):
            for intra in (True, False):
                for precision in (8, 9, 10, 11):
                    # pack the 121 sweep values into two blocks
                    for chunk in (qf_values[:64], qf_values[57:]):
                        block = np.array(chunk).reshape(8, 8)
                        mine = mismatch_control(inverse_quantize(
                            block, intra, w, q_s,
                            intra_dc_precision=precision))
                        oracle = _quantize_oracle_flat(
                            [int(v) for v in block.reshape(64)], intra,
                            [w_value] * 64, q_s, precision, dc_position=0)
                        oracle = np.array(oracle).reshape(8, 8)
                        if int(oracle.sum()) % 2 == 0:
                            oracle[7, 7] ^= 1
                        cases += block.size
                        mismatches += int((mine != oracle).sum())
    # the packed sweep visits the DC cell with only two values, so sweep
    # the intra DC step rule over the full QF range separately
    for precision in (8, 9, 10, 11):
        for value in qf_values:
            block = np.zeros((8, 8), dtype=np.int64)
            block[0, 0] = value
            mine = mismatch_control(inverse_quantize(
                block, True, np.full((8, 8), 16, dtype=np.int64), 2,
                intra_dc_precision=precision))
            expected = min(2047, max(-2048, int(value) * (8 >> (precision - 8))))
            want_corner = 1 if expected % 2 == 0 else 0
            cases += 1
            if mine[0, 0] != expected or mine[7, 7] != want_corner:
                mismatches += 1
    full_product = 121 * 4 * 3 * 2 * 4
    elapsed = time.perf_counter() - started
    report("2 inverse-quantization oracle",
           mismatches == 0 and cases >= full_product and elapsed < 10.0,
           f"({cases} coefficient cases covering the full "
           f"{full_product}-combination product, {mismatches} mismatches, "
           f"{elapsed:.2f}s)")


# 3 -------------------------------------------------------------------------


def _direct_idct_quadloop(block):
    c = np.full(8, 1.0)
    c[0] = np.sqrt(2) / 2
    out = np.zeros((8, 8))
    for i in range(8):
        for j in range(8):
            total = 0.0
            for v in range(8):
                for u in range(8):
                    total += (c[u] * c[v] / 4.0 * block[v, u]
                              * np.cos((2 * i + 1) * v * np.pi / 16)
                              * np.cos((2 * j + 1) * u * np.pi / 16))
            out[i, j] = total
    return out


def test_criterion_3_idct_accuracy():
    started = time.perf_counter()
    rng = np.random.default_rng(13818)
    blocks = rng.integers(-2048, 2048, (10_000, 8, 8)).astype(np.float64)
    basis = np.cos((2 * np.arange(8)[None, :] + 1)
                   * np.arange(8)[:, None] * np.pi / 16)
    c = np.full(8, 1.0)
    c[0] = np.sqrt(2) / 2
    weighted = blocks * (c[:, None] * c[None, :] / 4.0)
    direct = np.einsum("nvu,vi,uj->nij", weighted, basis, basis,
                       optimize=False)
    # spot-check the vectorized direct evaluation against the literal loops
    for index in (0, 17, 4242):
        assert np.allclose(direct[index],
                           _direct_idct_quadloop(blocks[index]), atol=1e-9)
    worst = 0.0
    for block, oracle in zip(blocks.astype(np.int32), direct):
        mine = idct_8x8(block)
        deviation = np.abs(mine - np.clip(oracle, -256, 255)).max()
        worst = max(worst, float(deviation))
    dc_only = np.zeros((8, 8), dtype=np.int32)
    dc_only[0, 0] = 8
    dc_exact = bool((idct_8x8(dc_only) == 1).all())
    elapsed = time.perf_counter() - started
    report("3 IDCT accuracy",
           worst <= 1.0 and dc_exact and elapsed < 30.0,
           f"(10000 blocks, max deviation {worst}, DC-only exact: {dc_exact}, "
           f"{elapsed:.1f}s)")


# 4 -------------------------------------------------------------------------


def test_criterion_4_vlc_round_trip():
    started = time.perf_counter()
    checked = 0
    ok = True
    for table in all_tables():          # construction audits prefix-freeness
        for bits, symbol in table.entries:
            cur = cursor_from_bits(bits, pad="1")
            ok &= decode_symbol(cur, table) == symbol
            ok &= cur.bits_consumed() == len(bits)
            canonical = table.encode_bits(symbol)
            cur = cursor_from_bits(canonical, pad="1")
            ok &= decode_symbol(cur, table) == symbol
            ok &= cur.bits_consumed() == len(canonical)
            checked += 1
    elapsed = time.perf_counter() - started
    report("4 VLC round-trip", ok and elapsed < 5.0,
           f"({checked} entries over {len(all_tables())} tables, "
           f"{elapsed:.2f}s)")


# 5 -------------------------------------------------------------------------

from test_fixtures import golden_specs

GOLDEN = golden_specs()


def test_criterion_5_golden_decode():
    started = time.perf_counter()
    failures = []
    for name, spec in GOLDEN.items():
        fixture = generate(spec)
        result = decode_elementary_stream(fixture.stream, tolerant=False)
        if [p.label for p in result.pictures] != \
                [e.label for e in fixture.expected_display]:
            failures.append(f"{name}: display order")
            continue
        for picture, expected in zip(result.pictures,
                                     fixture.expected_display):
            tolerance = 0 if expected.exact else 1
            for mine, want in ((picture.y_plane, expected.y),
                               (picture.cb_plane, expected.cb),
                               (picture.cr_plane, expected.cr)):
                deviation = np.abs(mine.astype(int) - want.astype(int)).max()
                if deviation > tolerance:
                    failures.append(f"{name}: deviation {deviation}")
    elapsed = time.perf_counter() - started
    report("5 golden decode", not failures and elapsed < 30.0,
           f"({len(GOLDEN)} fixtures, {elapsed:.1f}s"
           + (f"; {failures}" if failures else "") + ")")


# 6 -------------------------------------------------------------------------


def test_criterion_6_bandwidth_accounting():
    started = time.perf_counter()
    ok = True
    details = []
    for name, spec in GOLDEN.items():
        fixture = generate(spec)
        result = decode_elementary_stream(fixture.stream, tolerant=False)
        rep = result.report
        first_picture = fixture.stream.find(b"\x00\x00\x01\x00") * 8
        sequence_end = fixture.stream.rfind(b"\x00\x00\x01\xb7") * 8
        total = sequence_end - first_picture
        if rep.cumulative_bits[-1] != total:
            ok = False
            details.append(f"{name}: sum {rep.cumulative_bits[-1]} != {total}")
        ok &= rep.min_bits <= rep.avg_bits <= rep.max_bits
    # 25-frame cadence at frame_rate_code 3: decode_time[k] = k * 0.04 s
    spec = FixtureSpec(32, 32, [FlatIntra(90)] + [MoveP((0, 0))] * 24)
    result = decode_elementary_stream(generate(spec).stream)
    times_ok = all(s.decode_time == k * 0.04
                   for k, s in enumerate(result.report.per_frame))
    times_ok &= len(result.report.per_frame) == 25
    times_ok &= result.report.per_frame[-1].decode_time < 1.0
    elapsed = time.perf_counter() - started
    report("6 bandwidth accounting", ok and times_ok and not details,
           f"(sums exact, 25 frames inside 1s at 40ms cadence, "
           f"{elapsed:.1f}s)")


# 7 -------------------------------------------------------------------------


def test_criterion_7_vbv_equilibrium():
    # 1,000,000 bit/s at 25 fps: exactly 40,000 bits per picture
    frames = 26
    spec = FixtureSpec(32, 32, [FlatIntra(90)] + [MoveP((0, 0))] * (frames - 1),
                       bit_rate=1_000_000, pad_to_bits=[40_000] * frames)
    result = decode_elementary_stream(generate(spec).stream)
    fullness = [s.vbv_fullness_after for s in result.report.per_frame]
    constant = len(set(fullness)) == 1 and len(fullness) >= 25
    no_flags = not (result.report.vbv_underflow or result.report.vbv_overflow)

    oversized = [40_000] * (frames - 1) + [400_000]
    spec2 = FixtureSpec(32, 32, [FlatIntra(90)] + [MoveP((0, 0))] * (frames - 1),
                        bit_rate=1_000_000, pad_to_bits=oversized)
    result2 = decode_elementary_stream(generate(spec2).stream)
    underflow = result2.report.vbv_underflow
    finished = len(result2.report.per_frame) == frames
    report("7 VBV equilibrium",
           constant and no_flags and underflow and finished,
           f"(fullness constant at {fullness[0]} bits over {len(fullness)} "
           f"frames; oversized picture flags underflow without aborting)")


# 8 -------------------------------------------------------------------------


def test_criterion_8_determinism(tmp_path):
    fixture = generate(FixtureSpec(64, 48, [CheckerboardIntra(90, 170),
                                            MoveP((2, 0)), AverageB()]))
    source = tmp_path / "clip.m2v"
    source.write_bytes(fixture.stream)
    artifacts = []
    for tag in ("one", "two"):
        report_path = tmp_path / f"{tag}.csv"
        dump_path = tmp_path / f"{tag}.y4m"
        code = cli_main(["--input", str(source), "--report", "both",
                         "--report-path", str(report_path),
                         "--frame-dump", "y4m",
                         "--frame-dump-path", str(dump_path)])
        assert code == 0
        artifacts.append(((tmp_path / f"{tag}.csv").read_bytes(),
                          (tmp_path / f"{tag}.json").read_bytes(),
                          dump_path.read_bytes()))
    report("8 determinism", artifacts[0] == artifacts[1],
           "(CSV, JSON, and Y4M byte-identical across runs)")


# 9 -------------------------------------------------------------------------


def test_criterion_9_error_resilience(monkeypatch, tmp_path):
    spec = FixtureSpec(64, 48, [CheckerboardIntra(90, 170), MoveP((0, 0))])
    fixture = generate(spec)
    corrupted = corrupt_slice(fixture.stream, picture_index=1, row=1)

    calls = []
    original = decoder_module.conceal_select_mv

    def spy(candidates, make_prediction, **kwargs):
        calls.append(kwargs)
        return original(candidates, make_prediction, **kwargs)

    monkeypatch.setattr(decoder_module, "conceal_select_mv", spy)
    result = decode_elementary_stream(corrupted, tolerant=True)
    concealed_once = result.report.concealed_slices == 1
    conceal_used = bool(calls)
    edges_used = any(kw.get("top_row") is not None for kw in calls) and \
        any(kw.get("bottom_row") is not None for kw in calls)

    clean = decode_elementary_stream(fixture.stream, tolerant=False)
    pixels_ok = all(np.array_equal(a.y_plane, b.y_plane)
                    for a, b in zip(result.pictures, clean.pictures))

    total = (fixture.stream.rfind(b"\x00\x00\x01\xb7")
             - fixture.stream.find(b"\x00\x00\x01\x00")) * 8
    accounting_ok = result.report.cumulative_bits[-1] == total

    bad = tmp_path / "bad.m2v"
    bad.write_bytes(corrupted)
    strict_code = cli_main(["--input", str(bad), "--strict",
                            "--report-path", str(tmp_path / "bad.csv")])
    report("9 error resilience",
           concealed_once and conceal_used and edges_used and pixels_ok
           and accounting_ok and strict_code == 2,
           f"(1 slice concealed via boundary-variation selection, "
           f"accounting intact, strict exit {strict_code})")


# 10 ------------------------------------------------------------------------


def test_criterion_10_scale_sanity():
    frames = 25
    spec = FixtureSpec(64, 48, [FlatIntra(100)] + [MoveP((0, 0))] * (frames - 1),
                       bit_rate=400_000, pad_to_bits=[16_000] * frames)
    result = decode_elementary_stream(generate(spec).stream)
    avg = result.report.avg_bits_rounded
    inside = 12_200 <= avg <= 17_907
    report("10 scale sanity", inside,
           f"(avg {avg} bits/frame inside the 12200..17907 envelope)")
