#!/usr/bin/env python3
"""Walk through the core use case: decode an MPEG-2 elementary stream and
characterize its per-frame bandwidth.

Without arguments the script synthesizes a small test clip first, so it
runs self-contained; pass a path to profile your own .m2v file:

    python demos/01_bandwidth_profile.py [stream.m2v]

Outputs land next to this script: a CSV report and a PNG with the
cumulative-bandwidth curve plus the min/avg/max envelope.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from m2vscope import decode_elementary_stream
from m2vscope.cli import render_csv
from m2vscope.fixtures import (AverageB, CheckerboardIntra, FixtureSpec,
                               MoveP, generate)

out_dir = Path(__file__).parent


def make_demo_clip() -> bytes:
    """A 13-frame I/P/B clip with gentle motion, sizes padded for variety."""
    pictures = [CheckerboardIntra(70, 190)]
    for k in range(6):
        pictures += [MoveP((2 + 2 * k, 1)), AverageB()]
    sizes = [5000 + 250 * ((7 * k) % 11) for k in range(len(pictures))]
    # nominal rate near the mean picture size keeps the VBV plot lively
    spec = FixtureSpec(96, 64, pictures, bit_rate=1_250_000,
                       pad_to_bits=[s * 8 for s in sizes])
    return generate(spec).stream


def main() -> None:
    if len(sys.argv) > 1:
        source = Path(sys.argv[1])
        data = source.read_bytes()
        label = source.name
    else:
        data = make_demo_clip()
        label = "synthetic demo clip"
        print("no input given; generated a 13-frame demo clip")

    result = decode_elementary_stream(data, stream_label=label)
    report = result.report

    print(f"\n{label}: {len(report.per_frame)} frames, "
          f"{report.bit_rate} bit/s nominal")
    print(f"{'frame':>6} {'type':>4} {'bits':>8} {'time(s)':>8} "
          f"{'vbv fullness':>12}")
    for stats in report.per_frame:
        print(f"{stats.frame_name:>6} {stats.coding_type:>4} "
              f"{stats.bits:>8} {stats.decode_time:>8.2f} "
              f"{stats.vbv_fullness_after:>12}")
    print(f"\nbits/frame: min {report.min_bits}, "
          f"avg {report.avg_bits_rounded}, max {report.max_bits}")

    csv_path = out_dir / "bandwidth_report.csv"
    csv_path.write_bytes(render_csv(report))
    print(f"wrote {csv_path}")

    times = [s.decode_time for s in report.per_frame]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    top.step(times, report.cumulative_bits, where="post")
    top.set_ylabel("cumulative bits")
    top.set_title(f"bandwidth profile: {label}")
    bottom.bar(times, [s.bits for s in report.per_frame],
               width=report.frame_period * 0.8, color="tab:gray")
    for value, name, color in ((report.min_bits, "min", "tab:green"),
                               (float(report.avg_bits), "avg", "tab:blue"),
                               (report.max_bits, "max", "tab:red")):
        bottom.axhline(value, color=color, linestyle="--", label=name)
    bottom.set_xlabel("decode time (s)")
    bottom.set_ylabel("bits per frame")
    bottom.legend(loc="upper right")
    png_path = out_dir / "bandwidth_profile.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    print(f"wrote {png_path}")


if __name__ == "__main__":
    main()
