#!/usr/bin/env python3
"""Explore the VBV buffer model with two synthetic streams.

The verifier buffer fills at the nominal bit rate and drains by each
picture's coded size.  Equal-size pictures at exactly
bit_rate * frame_period hold the buffer perfectly still; a burst of
oversized pictures drives it toward underflow, which the report flags
without aborting the decode.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from m2vscope import decode_elementary_stream
from m2vscope.fixtures import FixtureSpec, FlatIntra, MoveP, generate

out_dir = Path(__file__).parent

BIT_RATE = 1_000_000            # 40,000 bits per frame at 25 fps
FRAMES = 30


def run(name: str, sizes: list[int]):
    spec = FixtureSpec(32, 32, [FlatIntra(90)] + [MoveP((0, 0))] * (FRAMES - 1),
                       bit_rate=BIT_RATE, pad_to_bits=sizes)
    result = decode_elementary_stream(generate(spec).stream, stream_label=name)
    report = result.report
    flags = []
    if report.vbv_underflow:
        flags.append("underflow")
    if report.vbv_overflow:
        flags.append("overflow")
    print(f"{name}: fullness {report.per_frame[0].vbv_fullness_after} -> "
          f"{report.per_frame[-1].vbv_fullness_after} bits "
          f"[{', '.join(flags) or 'no flags'}]")
    return report


def main() -> None:
    steady = run("steady", [40_000] * FRAMES)
    bursty_sizes = [40_000] * 10 + [90_000] * 6 + [34_000] * (FRAMES - 16)
    bursty = run("bursty", bursty_sizes)

    fig, ax = plt.subplots(figsize=(7, 4))
    for report, style in ((steady, "-"), (bursty, "--")):
        ax.step([s.decode_time for s in report.per_frame],
                [s.vbv_fullness_after for s in report.per_frame],
                style, where="post", label=report.stream_label)
    ax.set_xlabel("decode time (s)")
    ax.set_ylabel("VBV fullness (bits)")
    ax.set_title("verifier buffer trajectories")
    ax.legend()
    png_path = out_dir / "vbv_trajectories.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    print(f"wrote {png_path}")


if __name__ == "__main__":
    main()
