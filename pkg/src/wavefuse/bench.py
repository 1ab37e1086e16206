"""Throughput benchmark over synthetic scenes.

Each configuration (scene size, method, grid, worker count) is timed over
a number of repetitions and reported as the median wall time plus derived
megapixels per second. Scene synthesis is excluded from the timed region;
padding, tiling, fusion and merging are included, as is wire transfer
when node endpoints are given. Speedups compare each row against the
fewest-worker row measured for the same size, method and grid.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .cluster import run_master
from .fusion import method_from_name
from .tiling import fuse_tiled, pad_inputs, plan_grid

DEFAULT_SEED = 42


@dataclass(frozen=True)
class BenchRow:
    method: str
    pan_w: int
    pan_h: int
    grid_w: int
    grid_h: int
    workers: int
    wall_seconds: float
    mpix_per_s: float


def synth_scene(w: int, h: int, bands: int = 3, seed: int = DEFAULT_SEED):
    """Uniform-noise pan plane plus half-resolution bands, fixed seed."""
    rng = np.random.default_rng(seed)
    pan = rng.uniform(0.0, 255.0, (h, w)).astype(np.float32)
    ms = [
        rng.uniform(0.0, 255.0, (h // 2, w // 2)).astype(np.float32)
        for _ in range(bands)
    ]
    return pan, ms


def timed_fuse(pan, ms, method, grid_w, grid_h, workers=1, endpoints=None):
    """One fusion pass; returns (wall seconds, output bands)."""
    t0 = time.perf_counter()
    pan_p, ms_p = pad_inputs(pan, ms, grid_w, grid_h)
    grid = plan_grid(pan_p.shape[1], pan_p.shape[0], grid_w, grid_h)
    if endpoints:
        bands = run_master(pan_p, ms_p, method, grid, endpoints)
    else:
        bands = fuse_tiled(pan_p, ms_p, method, grid, workers=workers)
    h, w = pan.shape
    out = [b[:h, :w] for b in bands]
    return time.perf_counter() - t0, out


def run_bench(
    sizes,
    methods,
    grids,
    worker_counts,
    reps: int = 3,
    seed: int = DEFAULT_SEED,
    endpoints=None,
    bands: int = 3,
) -> list[BenchRow]:
    """Measure every configuration combination and return one row each."""
    if reps < 1:
        raise ValueError(f"reps {reps} must be >= 1")
    rows = []
    for w, h in sizes:
        pan, ms = synth_scene(w, h, bands=bands, seed=seed)
        for name in methods:
            method = method_from_name(name)
            for grid_w, grid_h in grids:
                for workers in worker_counts:
                    walls = [
                        timed_fuse(
                            pan, ms, method, grid_w, grid_h, workers, endpoints
                        )[0]
                        for _ in range(reps)
                    ]
                    wall = statistics.median(walls)
                    rows.append(
                        BenchRow(
                            method=name,
                            pan_w=w,
                            pan_h=h,
                            grid_w=grid_w,
                            grid_h=grid_h,
                            workers=workers,
                            wall_seconds=wall,
                            mpix_per_s=w * h / 1e6 / wall,
                        )
                    )
    return rows


def _group_key(row: BenchRow):
    return (row.method, row.pan_w, row.pan_h, row.grid_w, row.grid_h)


def speedup_column(rows) -> list[float]:
    """Per-row speedup against the fewest-worker row of the same group."""
    baseline: dict[tuple, BenchRow] = {}
    for row in rows:
        key = _group_key(row)
        if key not in baseline or row.workers < baseline[key].workers:
            baseline[key] = row
    return [baseline[_group_key(r)].wall_seconds / r.wall_seconds for r in rows]


_COLUMNS = (
    "method",
    "width",
    "height",
    "grid",
    "workers",
    "seconds",
    "mpix_per_s",
    "speedup",
)


def _cells(row: BenchRow, speedup: float) -> list[str]:
    return [
        row.method,
        str(row.pan_w),
        str(row.pan_h),
        f"{row.grid_w}x{row.grid_h}",
        str(row.workers),
        f"{row.wall_seconds:.6f}",
        f"{row.mpix_per_s:.3f}",
        f"{speedup:.2f}",
    ]


def format_table(rows) -> str:
    """Aligned text table, one line per measured configuration."""
    body = [_cells(r, s) for r, s in zip(rows, speedup_column(rows))]
    widths = [
        max(len(name), *(len(line[i]) for line in body)) if body else len(name)
        for i, name in enumerate(_COLUMNS)
    ]
    lines = ["  ".join(n.ljust(w) for n, w in zip(_COLUMNS, widths)).rstrip()]
    for line in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip())
    return "\n".join(lines)


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for row, speedup in zip(rows, speedup_column(rows)):
            writer.writerow(_cells(row, speedup))


def save_speedup_figure(rows, path) -> None:
    """Line chart of speedup versus worker count, one line per group."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict[str, list[tuple[int, float]]] = {}
    for row, speedup in zip(rows, speedup_column(rows)):
        label = f"{row.method} {row.pan_w}x{row.pan_h} grid {row.grid_w}x{row.grid_h}"
        groups.setdefault(label, []).append((row.workers, speedup))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, points in sorted(groups.items()):
        points.sort()
        ax.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            label=label,
        )
    ax.axhline(1.0, color="gray", linewidth=0.6)
    ax.set_xlabel("workers")
    ax.set_ylabel("speedup over fewest workers")
    ax.set_title("Tiled fusion scaling")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
