"""Command-line front end: decode a .m2v file, emit bandwidth reports and
optional frame dumps.

Exit codes: 0 success, 2 malformed stream (strict mode), 3 unsupported
stream feature, 4 I/O failure.  Reports and dumps are written atomically
(temp file, then rename), so a failed run leaves no truncated artifacts.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .bandwidth import BandwidthReport
from .decoder import DecodeResult, decode_elementary_stream
from .errors import DecodeError, GeometryMismatch, UnsupportedStream
from .framestore import FramePicture
from .headers import FRAME_RATES

log = logging.getLogger(__name__)

CSV_COLUMNS = ("frame_index", "frame_name", "coding_type", "bits",
               "decode_time_s", "cumulative_bits", "vbv_fullness_bits",
               "quant_error_max", "prev_decoded_size_bits")

EXIT_OK = 0
EXIT_MALFORMED = 2
EXIT_UNSUPPORTED = 3
EXIT_IO = 4


@dataclass
class RunConfig:
    input_path: Path
    report_format: str = "csv"            # csv | json | both
    report_path: Path | None = None
    frame_dump: str = "none"              # none | y4m | pgm
    frame_dump_path: Path | None = None
    max_frames: int | None = None
    strict: bool = False
    log_level: str = "warning"

    def resolved_report_paths(self) -> dict[str, Path]:
        base = self.report_path or self.input_path.with_suffix(".bandwidth.csv")
        if self.report_format == "both":
            stem = base.with_suffix("")
            return {"csv": stem.with_suffix(".csv"),
                    "json": stem.with_suffix(".json")}
        return {self.report_format: base}

    def resolved_dump_path(self) -> Path:
        if self.frame_dump_path is not None:
            return self.frame_dump_path
        if self.frame_dump == "y4m":
            return self.input_path.with_suffix(".y4m")
        return self.input_path.with_suffix("") .with_name(
            self.input_path.stem + "_frames")


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(report: BandwidthReport) -> bytes:
    lines = [",".join(CSV_COLUMNS)]
    for stats, cumulative in zip(report.per_frame, report.cumulative_bits):
        lines.append(",".join((
            str(stats.frame_index), stats.frame_name, stats.coding_type,
            str(stats.bits), str(stats.decode_time), str(cumulative),
            str(stats.vbv_fullness_after), str(stats.quant_error_max),
            str(stats.prev_decoded_size))))
    return ("\n".join(lines) + "\n").encode()


def render_json(report: BandwidthReport) -> bytes:
    doc = {
        "stream": report.stream_label,
        "per_frame": [
            {"frame_index": s.frame_index, "frame_name": s.frame_name,
             "coding_type": s.coding_type, "bits": s.bits,
             "decode_time_s": s.decode_time, "cumulative_bits": c,
             "vbv_fullness_bits": s.vbv_fullness_after,
             "quant_error_max": s.quant_error_max,
             "clip_error_max": s.clip_error_max,
             "prev_decoded_size_bits": s.prev_decoded_size}
            for s, c in zip(report.per_frame, report.cumulative_bits)],
        "summary": {
            "min_bits": report.min_bits,
            "max_bits": report.max_bits,
            "avg_bits_rational": f"{report.avg_bits.numerator}"
                                 f"/{report.avg_bits.denominator}",
            "avg_bits_rounded": report.avg_bits_rounded,
            "bit_rate": report.bit_rate,
            "frame_period_s": report.frame_period,
            "flags": {"vbv_underflow": report.vbv_underflow,
                      "vbv_overflow": report.vbv_overflow,
                      "concealed_slices": report.concealed_slices,
                      "dropped_pictures": report.dropped_pictures},
        },
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def write_report(report: BandwidthReport, fmt: str, path: Path) -> None:
    renderers = {"csv": render_csv, "json": render_json}
    _atomic_write(path, renderers[fmt](report))


def _cropped_planes(picture: FramePicture, seq):
    w, h = seq.horizontal_size, seq.vertical_size
    return (picture.y_plane[:h, :w],
            picture.cb_plane[:(h + 1) // 2, :(w + 1) // 2],
            picture.cr_plane[:(h + 1) // 2, :(w + 1) // 2])


def render_y4m(pictures: list[FramePicture], seq) -> bytes:
    if seq.horizontal_size % 2 or seq.vertical_size % 2:
        raise GeometryMismatch("y4m needs even dimensions for 4:2:0")
    rate = FRAME_RATES[seq.frame_rate_code]
    header = (f"YUV4MPEG2 W{seq.horizontal_size} H{seq.vertical_size} "
              f"F{rate.numerator}:{rate.denominator} Ip A1:1 C420mpeg2\n")
    parts = [header.encode()]
    for picture in pictures:
        parts.append(b"FRAME\n")
        for plane in _cropped_planes(picture, seq):
            parts.append(plane.tobytes())
    return b"".join(parts)


def render_pgm(picture: FramePicture, seq) -> bytes:
    luma = _cropped_planes(picture, seq)[0]
    header = f"P5\n{luma.shape[1]} {luma.shape[0]}\n255\n"
    return header.encode() + luma.tobytes()


def dump_frames(pictures: list[FramePicture], seq, mode: str,
                path: Path) -> None:
    """Write decoded pictures (display order) as one Y4M file or PGM files."""
    if mode == "y4m":
        _atomic_write(path, render_y4m(pictures, seq))
    elif mode == "pgm":
        path.mkdir(parents=True, exist_ok=True)
        for index, picture in enumerate(pictures):
            _atomic_write(path / f"frame_{index:03d}.pgm",
                          render_pgm(picture, seq))
    else:
        raise ValueError(f"unknown dump mode {mode!r}")


def run(config: RunConfig) -> int:
    """Execute the full pipeline for one input file."""
    logging.basicConfig(level=getattr(logging, config.log_level.upper(),
                                      logging.WARNING))
    try:
        data = config.input_path.read_bytes()
    except OSError as exc:
        print(f"error: cannot read {config.input_path}: {exc}", file=sys.stderr)
        return EXIT_IO
    started = time.perf_counter()
    try:
        result = decode_elementary_stream(
            data, tolerant=not config.strict, max_frames=config.max_frames,
            stream_label=config.input_path.name)
    except UnsupportedStream as exc:
        print(f"error: unsupported stream: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except DecodeError as exc:
        print(f"error: malformed stream: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    elapsed = time.perf_counter() - started
    report = result.report
    if report is None:
        print("error: malformed stream: no pictures decoded", file=sys.stderr)
        return EXIT_MALFORMED
    try:
        for fmt, path in config.resolved_report_paths().items():
            write_report(report, fmt, path)
        if config.frame_dump != "none":
            dump_frames(result.pictures, result.seq, config.frame_dump,
                        config.resolved_dump_path())
    except GeometryMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    flags = []
    if report.vbv_underflow:
        flags.append("vbv-underflow")
    if report.vbv_overflow:
        flags.append("vbv-overflow")
    if report.concealed_slices:
        flags.append(f"concealed={report.concealed_slices}")
    if report.dropped_pictures:
        flags.append(f"dropped={report.dropped_pictures}")
    print(f"{config.input_path.name}: {len(report.per_frame)} frames, "
          f"bits min/avg/max = {report.min_bits}/{report.avg_bits_rounded}"
          f"/{report.max_bits}, vbv [{' '.join(flags) or 'ok'}], "
          f"decode {elapsed:.2f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2vscope",
        description="Decode an MPEG-2 video elementary stream and "
                    "characterize its per-frame bandwidth.")
    parser.add_argument("--input", required=True, type=Path,
                        help="input .m2v elementary stream")
    parser.add_argument("--report", choices=("csv", "json", "both"),
                        default="csv", help="report format(s) to write")
    parser.add_argument("--report-path", type=Path, default=None,
                        help="report file (default: input with "
                             ".bandwidth.csv suffix; 'both' swaps extensions)")
    parser.add_argument("--frame-dump", choices=("none", "y4m", "pgm"),
                        default="none", help="raw decoded frame output")
    parser.add_argument("--frame-dump-path", type=Path, default=None,
                        help="y4m file or pgm directory")
    parser.add_argument("--max-frames", type=int, default=None,
                        help="stop after this many coded frames")
    parser.add_argument("--strict", action="store_true",
                        help="abort on the first stream error instead of "
                             "concealing slices")
    parser.add_argument("--log-level",
                        default=os.environ.get("M2VSCOPE_LOG", "warning"),
                        help="logging level (or set M2VSCOPE_LOG)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.max_frames is not None and args.max_frames < 1:
        build_parser().error("--max-frames must be at least 1")
    config = RunConfig(input_path=args.input, report_format=args.report,
                       report_path=args.report_path,
                       frame_dump=args.frame_dump,
                       frame_dump_path=args.frame_dump_path,
                       max_frames=args.max_frames, strict=args.strict,
                       log_level=args.log_level)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
