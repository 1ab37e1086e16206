"""wavefuse: tile-parallel pan-sharpening with DWT, IHS and weighted-average
fusion, quality metrics, and a distributed master/worker runner.

The short version: read 8-bit images with `read_pnm`, fuse a panchromatic
plane with lower-resolution bands via `fuse` (or `fuse_tiled` /
`run_master` for parallel runs), score the result with `qnr`, and write it
back out with `quantize` + `write_pnm`.
"""

from .cluster import (
    WorkerServer,
    parse_endpoint,
    run_master,
    run_worker,
    shutdown_worker,
)
from .errors import FusionError, JobFailed, NoWorkers, ProtocolError
from .fusion import (
    DwtReplace,
    FusionMethod,
    Ihs,
    WeightedAverage,
    fuse,
    fuse_dwt,
    fuse_ihs,
    fuse_wa,
    method_from_name,
    resample_bilinear,
)
from .imageio import quantize, read_pnm, to_plane, write_pnm
from .metrics import QualityReport, d_lambda, d_s, degrade, ergas, q_index, qnr
from .tiling import (
    Tile,
    TileGrid,
    fuse_tiled,
    merge,
    pad_edge,
    pad_inputs,
    padded_dims,
    plan_grid,
    split,
)
from .wavelet import (
    FilterBank,
    WaveletKind,
    d4_filters,
    dwt1d_forward,
    dwt1d_inverse,
    dwt2d_forward,
    dwt2d_inverse,
)

__version__ = "0.1.0"

__all__ = [
    "DwtReplace",
    "FilterBank",
    "FusionError",
    "FusionMethod",
    "Ihs",
    "JobFailed",
    "NoWorkers",
    "ProtocolError",
    "QualityReport",
    "Tile",
    "TileGrid",
    "WaveletKind",
    "WeightedAverage",
    "WorkerServer",
    "__version__",
    "d4_filters",
    "d_lambda",
    "d_s",
    "degrade",
    "dwt1d_forward",
    "dwt1d_inverse",
    "dwt2d_forward",
    "dwt2d_inverse",
    "ergas",
    "fuse",
    "fuse_dwt",
    "fuse_ihs",
    "fuse_tiled",
    "fuse_wa",
    "merge",
    "method_from_name",
    "pad_edge",
    "pad_inputs",
    "padded_dims",
    "parse_endpoint",
    "plan_grid",
    "q_index",
    "qnr",
    "quantize",
    "read_pnm",
    "resample_bilinear",
    "run_master",
    "run_worker",
    "shutdown_worker",
    "split",
    "to_plane",
    "write_pnm",
]
