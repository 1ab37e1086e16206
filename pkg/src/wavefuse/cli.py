"""Command-line driver: fuse images, score results, benchmark, serve tiles.

Exit status: 0 success, 1 usage error, 2 I/O error, 3 computation or
protocol error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench
from .cluster import WorkerServer, configure_logging, parse_endpoint, run_master
from .errors import (
    ChannelOutOfRange,
    DimensionMismatch,
    FusionError,
    MalformedHeader,
    Truncated,
    UnsupportedFormat,
)
from .fusion import method_from_name
from .imageio import quantize, read_pnm, to_plane, write_pnm
from .metrics import qnr
from .tiling import fuse_tiled, pad_inputs, plan_grid

METHOD_NAMES = ("wa", "ihs", "hdwt", "ddwt")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for I/O here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _CliError(Exception):
    """Diagnostic plus the exit status main() should return."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _pair_arg(text: str, unit: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        w, h = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not of the form WxH"
        ) from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"{unit} {text!r} must be at least 1x1")
    return w, h


def _grid_arg(text: str) -> tuple[int, int]:
    return _pair_arg(text, "grid")


def _size_arg(text: str) -> tuple[int, int]:
    return _pair_arg(text, "size")


def _weight_arg(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"weight {text} outside [0, 1]")
    return value


def _positive_arg(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def _worker_list_arg(text: str) -> list[int]:
    return [_positive_arg(part) for part in text.split(",")]


def _nodes_arg(text: str) -> list[str]:
    endpoints = [part.strip() for part in text.split(",") if part.strip()]
    if not endpoints:
        raise argparse.ArgumentTypeError("empty node list")
    for endpoint in endpoints:
        try:
            parse_endpoint(endpoint)
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from None
    return endpoints


def _endpoint_arg(text: str) -> tuple[str, int]:
    try:
        return parse_endpoint(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _load_raster(path: str) -> np.ndarray:
    return read_pnm(Path(path).read_bytes())


def _load_plane(path: str, role: str) -> np.ndarray:
    raster = _load_raster(path)
    if raster.ndim != 2:
        raise _CliError(f"{path}: {role} image must be grayscale", 1)
    return to_plane(raster)


def _load_bands(paths) -> list[np.ndarray]:
    """One color file becomes 3 bands; otherwise every file is one band."""
    rasters = [_load_raster(p) for p in paths]
    if len(rasters) == 1 and rasters[0].ndim == 3:
        return [to_plane(rasters[0], c) for c in range(3)]
    for path, raster in zip(paths, rasters):
        if raster.ndim != 2:
            raise _CliError(f"{path}: band files must be grayscale", 1)
    return [to_plane(r) for r in rasters]


def _write_fused(bands, out: str) -> None:
    path = Path(out)
    if len(bands) == 3:
        path.write_bytes(write_pnm(np.stack(bands, axis=-1)))
    elif len(bands) == 1:
        path.write_bytes(write_pnm(bands[0]))
    else:
        for k, band in enumerate(bands):
            target = path.with_name(f"{path.stem}_b{k}.pgm")
            target.write_bytes(write_pnm(band))


def cmd_fuse(args) -> int:
    pan = _load_plane(args.pan, "panchromatic")
    bands = _load_bands(args.ms)
    if args.method == "ihs" and len(bands) != 3:
        raise _CliError("IHS requires 3 bands", 1)
    method = method_from_name(args.method, args.weight)
    grid_w, grid_h = args.grid
    h, w = pan.shape
    pan_p, ms_p = pad_inputs(pan, bands, grid_w, grid_h)
    grid = plan_grid(pan_p.shape[1], pan_p.shape[0], grid_w, grid_h)
    if args.nodes:
        fused = run_master(
            pan_p, ms_p, method, grid, args.nodes,
            exact_results=args.exact_transfer,
        )
    else:
        fused = fuse_tiled(pan_p, ms_p, method, grid, workers=args.workers)
    _write_fused([quantize(b[:h, :w]) for b in fused], args.out)
    return 0


def _save_quality_figure(report, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_q, ax_d) = plt.subplots(1, 2, figsize=(7.4, 3.6))
    labels = [f"band {k}" for k in range(len(report.q_per_band))]
    ax_q.bar(labels, report.q_per_band, color="#4878cf")
    ax_q.set_ylim(0.0, 1.05)
    ax_q.set_title("Q per band")
    ax_d.bar(
        ["d_lambda", "d_s", "qnr"],
        [report.d_lambda, report.d_s, report.qnr],
        color=["#d65f5f", "#ee854a", "#6acc64"],
    )
    ax_d.set_ylim(0.0, 1.05)
    ax_d.set_title(f"distortion and QNR (ergas {report.ergas:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_metrics(args) -> int:
    fused = _load_bands(args.fused)
    ms = _load_bands(args.ms)
    pan = _load_plane(args.pan, "panchromatic")
    if args.ratio is not None:
        mh, mw = ms[0].shape
        ph, pw = pan.shape
        if (mh * args.ratio, mw * args.ratio) != (ph, pw):
            raise DimensionMismatch(
                f"--ratio {args.ratio} does not relate bands {mw}x{mh} "
                f"to panchromatic {pw}x{ph}"
            )
    report = qnr(fused, ms, pan)
    names = ["ergas"]
    values = [report.ergas]
    for k, q in enumerate(report.q_per_band):
        names.append(f"q_band_{k}")
        values.append(q)
    names += ["d_lambda", "d_s", "qnr"]
    values += [report.d_lambda, report.d_s, report.qnr]
    for name, value in zip(names, values):
        print(f"{name}={value:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            writer.writerow(f"{v:.6f}" for v in values)
    if args.fig:
        _save_quality_figure(report, args.fig)
    return 0


def cmd_bench(args) -> int:
    sizes = args.size or [(4070, 3736)]
    methods = args.method or list(METHOD_NAMES)
    grids = args.grid or [(2, 2)]
    if args.nodes:
        endpoints = args.nodes
        worker_counts = [len(endpoints)]
    else:
        endpoints = None
        worker_counts = args.workers
    rows = bench.run_bench(
        sizes,
        methods,
        grids,
        worker_counts,
        reps=args.reps,
        seed=args.seed,
        endpoints=endpoints,
    )
    print(bench.format_table(rows))
    if args.out:
        bench.write_csv(rows, args.out)
    if args.fig:
        bench.save_speedup_figure(rows, args.fig)
    return 0


def cmd_worker(args) -> int:
    host, port = args.listen
    server = WorkerServer(host, port)
    print(f"listening on {server.host}:{server.port}", flush=True)
    server.serve_forever()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="wavefuse",
        description="Tile-parallel pan-sharpening: fuse a high-resolution "
        "grayscale image with low-resolution bands.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fuse = sub.add_parser("fuse", help="fuse a panchromatic image with bands")
    fuse.add_argument("--pan", required=True, help="panchromatic PGM")
    fuse.add_argument(
        "--ms", action="append", required=True,
        help="band file; repeat per band, or give one PPM for 3 bands",
    )
    fuse.add_argument("--method", choices=METHOD_NAMES, default="wa")
    fuse.add_argument(
        "--weight", type=_weight_arg, default=0.5,
        help="panchromatic share for method wa (default 0.5)",
    )
    fuse.add_argument("--grid", type=_grid_arg, default=(1, 1), metavar="WxH")
    pool = fuse.add_mutually_exclusive_group()
    pool.add_argument(
        "--workers", type=_positive_arg, default=1, help="local thread count"
    )
    pool.add_argument(
        "--nodes", type=_nodes_arg, help="comma-separated worker host:port list"
    )
    fuse.add_argument(
        "--exact-transfer", action="store_true",
        help="ask workers for float results instead of 8-bit",
    )
    fuse.add_argument("--out", required=True, help="output PGM/PPM path")
    fuse.set_defaults(func=cmd_fuse)

    metrics = sub.add_parser("metrics", help="score a fused image")
    metrics.add_argument(
        "--fused", action="append", required=True, help="fused output band(s)"
    )
    metrics.add_argument(
        "--ms", action="append", required=True, help="reference band(s)"
    )
    metrics.add_argument("--pan", required=True, help="panchromatic PGM")
    metrics.add_argument(
        "--ratio", type=_positive_arg,
        help="expected resolution ratio; checked against the images",
    )
    metrics.add_argument("--out", help="also write the scores as CSV")
    metrics.add_argument("--fig", help="also render a score chart (PNG)")
    metrics.set_defaults(func=cmd_metrics)

    bench_cmd = sub.add_parser("bench", help="time fusion configurations")
    bench_cmd.add_argument(
        "--size", action="append", type=_size_arg, metavar="WxH",
        help="scene size; repeatable (default 4070x3736)",
    )
    bench_cmd.add_argument(
        "--method", action="append", choices=METHOD_NAMES,
        help="method to time; repeatable (default: all)",
    )
    bench_cmd.add_argument(
        "--grid", action="append", type=_grid_arg, metavar="WxH",
        help="tile grid; repeatable (default 2x2)",
    )
    bench_pool = bench_cmd.add_mutually_exclusive_group()
    bench_pool.add_argument(
        "--workers", type=_worker_list_arg, default=[1],
        help="comma-separated thread counts (default 1)",
    )
    bench_pool.add_argument(
        "--nodes", type=_nodes_arg, help="comma-separated worker host:port list"
    )
    bench_cmd.add_argument("--reps", type=_positive_arg, default=3)
    bench_cmd.add_argument("--seed", type=int, default=bench.DEFAULT_SEED)
    bench_cmd.add_argument("--out", help="also write rows as CSV")
    bench_cmd.add_argument("--fig", help="also render a speedup chart (PNG)")
    bench_cmd.set_defaults(func=cmd_bench)

    worker = sub.add_parser("worker", help="serve fusion tasks over TCP")
    worker.add_argument(
        "--listen", type=_endpoint_arg, required=True, metavar="HOST:PORT"
    )
    worker.set_defaults(func=cmd_worker)
    return parser


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (UnsupportedFormat, MalformedHeader, Truncated, ChannelOutOfRange) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FusionError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
