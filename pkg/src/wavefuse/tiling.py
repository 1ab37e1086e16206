"""Equal-parts tile grid: planning, splitting, merging, and pooled
tile-parallel fusion.

Two execution flavors live here. The plain path keeps full numeric
precision and resamples the multispectral input globally before cropping,
so its output is bit-identical to untiled fusion for every pointwise
method (weighted average, IHS) and for Haar replacement, whose two-tap
filter never crosses an even-aligned tile border. The 8bpp transfer path
mirrors the distributed pipeline instead: inputs are quantized to bytes,
tiles are self-contained (each carries a half-resolution band crop that is
upsampled tile-locally), and results are quantized per tile, byte-for-byte
what a worker produces over the wire.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    BandCountMismatch,
    DimensionMismatch,
    MissingTile,
    NotDivisible,
    OddTile,
    WeightOutOfRange,
)
from .fusion import (
    DwtReplace,
    FusionMethod,
    WeightedAverage,
    fuse,
    resample_bilinear,
)
from .imageio import quantize


@dataclass(frozen=True)
class TileGrid:
    """Equal-parts partition: grid_w x grid_h tiles, sizes in pixels."""

    grid_w: int
    grid_h: int
    pan_tile_w: int
    pan_tile_h: int
    ms_tile_w: int
    ms_tile_h: int

    @property
    def tile_count(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def pan_w(self) -> int:
        return self.grid_w * self.pan_tile_w

    @property
    def pan_h(self) -> int:
        return self.grid_h * self.pan_tile_h


@dataclass
class Tile:
    """One grid cell: (row, col) index, panchromatic crop, band crops at
    half resolution."""

    index: tuple[int, int]
    pan: np.ndarray
    ms: list[np.ndarray]


def plan_grid(pan_w: int, pan_h: int, grid_w: int, grid_h: int) -> TileGrid:
    """Partition a pan_w x pan_h plane into grid_w x grid_h equal tiles.

    Tile dimensions must come out even so one transform level applies per
    tile; band tiles are half the panchromatic tile per axis.
    """
    if grid_w < 1 or grid_h < 1:
        raise ValueError(f"grid {grid_w}x{grid_h} must be at least 1x1")
    if pan_w % grid_w or pan_h % grid_h:
        raise NotDivisible(f"{pan_w}x{pan_h} not divisible into {grid_w}x{grid_h} tiles")
    tile_w = pan_w // grid_w
    tile_h = pan_h // grid_h
    if tile_w % 2 or tile_h % 2:
        raise OddTile(f"tile {tile_w}x{tile_h} has an odd dimension")
    return TileGrid(grid_w, grid_h, tile_w, tile_h, tile_w // 2, tile_h // 2)


def _crop(plane: np.ndarray, row: int, col: int, tile_w: int, tile_h: int) -> np.ndarray:
    return plane[row * tile_h : (row + 1) * tile_h, col * tile_w : (col + 1) * tile_w]


def split(pan: np.ndarray, ms, grid: TileGrid) -> list[Tile]:
    """Cut pan and half-resolution bands into row-major contiguous tiles."""
    pan_arr = np.asarray(pan)
    bands = [np.asarray(b) for b in ms]
    if pan_arr.shape != (grid.pan_h, grid.pan_w):
        raise DimensionMismatch(
            f"panchromatic {pan_arr.shape} does not match grid {grid.pan_w}x{grid.pan_h}"
        )
    half = (grid.pan_h // 2, grid.pan_w // 2)
    for b in bands:
        if b.shape != half:
            raise DimensionMismatch(f"band {b.shape} is not half-size {half}")
    tiles = []
    for row in range(grid.grid_h):
        for col in range(grid.grid_w):
            pan_crop = np.ascontiguousarray(
                _crop(pan_arr, row, col, grid.pan_tile_w, grid.pan_tile_h)
            )
            ms_crops = [
                np.ascontiguousarray(
                    _crop(b, row, col, grid.ms_tile_w, grid.ms_tile_h)
                )
                for b in bands
            ]
            tiles.append(Tile((row, col), pan_crop, ms_crops))
    return tiles


def merge(tiles, grid: TileGrid) -> list[np.ndarray]:
    """Assemble per-tile fused bands (row-major order) into full planes.

    Every grid position must be present; entries are placed by list index,
    never by arrival order.
    """
    tiles = list(tiles)
    if len(tiles) != grid.tile_count:
        raise MissingTile(f"got {len(tiles)} tiles, grid has {grid.tile_count}")
    for i, t in enumerate(tiles):
        if t is None:
            raise MissingTile(f"tile index {i} is absent")
    first = tiles[0]
    band_count = len(first)
    th, tw = grid.pan_tile_h, grid.pan_tile_w
    for t in tiles:
        if len(t) != band_count:
            raise DimensionMismatch(f"band counts differ: {len(t)} vs {band_count}")
        for b in t:
            if np.asarray(b).shape != (th, tw):
                raise DimensionMismatch(
                    f"tile band {np.asarray(b).shape} is not {tw}x{th}"
                )
    out = [
        np.empty((grid.pan_h, grid.pan_w), dtype=np.asarray(first[k]).dtype)
        for k in range(band_count)
    ]
    for i, t in enumerate(tiles):
        row, col = divmod(i, grid.grid_w)
        for k in range(band_count):
            out[k][row * th : (row + 1) * th, col * tw : (col + 1) * tw] = t[k]
    return out


def wire_weight(weight: float) -> float:
    """The weighted-average weight as it survives the wire: a whole number
    of thousandths."""
    if not 0.0 <= weight <= 1.0:
        raise WeightOutOfRange(f"weight {weight} outside [0, 1]")
    return round(weight * 1000) / 1000.0


def fuse_tile_quantized(pan_u8: np.ndarray, ms_u8, method: FusionMethod) -> list[np.ndarray]:
    """Fuse one self-contained 8bpp tile in 32-bit float.

    This is the exact computation a worker node performs on a received
    task: dequantize, fuse (bands upsampled tile-locally where the method
    needs it), return float planes. Callers quantize for transport.
    """
    pan_f = np.asarray(pan_u8).astype(np.float32)
    ms_f = [np.asarray(b).astype(np.float32) for b in ms_u8]
    return fuse(pan_f, ms_f, method)


def _validated_bands(ms) -> list[np.ndarray]:
    bands = [np.asarray(b) for b in ms]
    if not bands:
        raise BandCountMismatch("need at least one band")
    for b in bands[1:]:
        if b.shape != bands[0].shape:
            raise DimensionMismatch(f"band sizes differ: {b.shape} vs {bands[0].shape}")
    return bands


def _pool_map(work, jobs, workers: int) -> list:
    if workers == 1:
        return [work(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, jobs))


def wire_planes(pan: np.ndarray, ms, grid: TileGrid) -> tuple[np.ndarray, list[np.ndarray]]:
    """Bring inputs to the transfer representation: bands at exactly half
    the panchromatic size, everything quantized to uint8 (already-uint8
    input passes through). Shared by the local 8bpp path and the master,
    so both feed workers byte-identical tiles."""
    pan_arr = np.asarray(pan)
    if pan_arr.shape != (grid.pan_h, grid.pan_w):
        raise DimensionMismatch(
            f"panchromatic {pan_arr.shape} does not match grid {grid.pan_w}x{grid.pan_h}"
        )
    bands = _validated_bands(ms)
    half = (grid.pan_h // 2, grid.pan_w // 2)
    low = [
        b if b.shape == half else resample_bilinear(b, half[1], half[0])
        for b in bands
    ]
    pan_u8 = pan_arr if pan_arr.dtype == np.uint8 else quantize(pan_arr)
    ms_u8 = [b if b.dtype == np.uint8 else quantize(b) for b in low]
    return pan_u8, ms_u8


def fuse_tiled(
    pan: np.ndarray,
    ms,
    method: FusionMethod,
    grid: TileGrid,
    workers: int = 1,
    transfer_8bpp: bool = False,
) -> list[np.ndarray]:
    """Fuse tile by tile on a thread pool and merge by index.

    Plain mode returns float planes bit-identical for any worker count.
    With transfer_8bpp the full distributed pipeline is reproduced locally
    (8-bit inputs, tile-local band upsampling, weight rounded to
    thousandths, 8-bit results), so the merged uint8 bands match a cluster
    run byte for byte.
    """
    if workers < 1:
        raise ValueError(f"workers {workers} must be >= 1")
    pan_arr = np.asarray(pan)
    if pan_arr.shape != (grid.pan_h, grid.pan_w):
        raise DimensionMismatch(
            f"panchromatic {pan_arr.shape} does not match grid {grid.pan_w}x{grid.pan_h}"
        )
    bands = _validated_bands(ms)

    if transfer_8bpp:
        eff = method
        if isinstance(method, WeightedAverage):
            eff = WeightedAverage(wire_weight(method.weight))
        pan_u8, ms_u8 = wire_planes(pan_arr, bands, grid)
        tiles = split(pan_u8, ms_u8, grid)

        def work(tile: Tile) -> list[np.ndarray]:
            return [quantize(p) for p in fuse_tile_quantized(tile.pan, tile.ms, eff)]

        return merge(_pool_map(work, tiles, workers), grid)

    if isinstance(method, DwtReplace):
        req = (grid.pan_h // 2, grid.pan_w // 2)
        scale = 2
    else:
        req = (grid.pan_h, grid.pan_w)
        scale = 1
    sized = [
        b if b.shape == req else resample_bilinear(b, req[1], req[0]) for b in bands
    ]
    tw, th = grid.pan_tile_w, grid.pan_tile_h
    jobs = []
    for row in range(grid.grid_h):
        for col in range(grid.grid_w):
            pan_crop = _crop(pan_arr, row, col, tw, th)
            ms_crops = [
                _crop(b, row, col, tw // scale, th // scale) for b in sized
            ]
            jobs.append((pan_crop, ms_crops))

    def work(job) -> list[np.ndarray]:
        pan_crop, ms_crops = job
        return fuse(pan_crop, ms_crops, method)

    return merge(_pool_map(work, jobs, workers), grid)


def padded_dims(w: int, h: int, grid_w: int, grid_h: int) -> tuple[int, int]:
    """Smallest dimensions >= (w, h) that split into even-sized tiles."""
    if grid_w < 1 or grid_h < 1:
        raise ValueError(f"grid {grid_w}x{grid_h} must be at least 1x1")
    step_w, step_h = 2 * grid_w, 2 * grid_h
    return (
        (w + step_w - 1) // step_w * step_w,
        (h + step_h - 1) // step_h * step_h,
    )


def pad_edge(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Grow a plane to out_w x out_h by replicating its last row/column."""
    h, w = plane.shape
    if out_w < w or out_h < h:
        raise ValueError(f"cannot pad {w}x{h} down to {out_w}x{out_h}")
    if (out_w, out_h) == (w, h):
        return plane.copy()
    return np.pad(plane, ((0, out_h - h), (0, out_w - w)), mode="edge")


def pad_inputs(pan: np.ndarray, ms, grid_w: int, grid_h: int):
    """Edge-pad pan to grid-compatible dimensions and each band in
    proportion, so band content keeps covering the same image region.

    Returns (pan, bands) unchanged (bar copies) when no padding is needed.
    """
    h, w = pan.shape
    pw, ph = padded_dims(w, h, grid_w, grid_h)
    if (pw, ph) == (w, h):
        return pan, list(ms)
    padded = []
    for band in ms:
        bh, bw = band.shape
        padded.append(
            pad_edge(band, (bw * pw + w - 1) // w, (bh * ph + h - 1) // h)
        )
    return pad_edge(pan, pw, ph), padded
