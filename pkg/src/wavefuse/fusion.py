"""Fusion methods: weighted averaging, additive IHS, and DWT coefficient
replacement.

All methods take one panchromatic plane plus a list of multispectral band
planes and return one fused plane per band at panchromatic resolution.
Multiband images are plain lists of equally sized 2D arrays, band order
preserved throughout.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    BandCountMismatch,
    DimensionMismatch,
    OddDimension,
    WeightOutOfRange,
)
from .wavelet import WaveletKind, dwt2d_forward, dwt2d_inverse


@dataclass(frozen=True)
class WeightedAverage:
    """Per-pixel blend of the panchromatic plane and each upsampled band."""

    weight: float = 0.5


@dataclass(frozen=True)
class Ihs:
    """Additive intensity substitution; needs exactly three bands."""


@dataclass(frozen=True)
class DwtReplace:
    """Swap the approximation quadrant of the panchromatic transform for
    the band data, then invert."""

    kind: WaveletKind


FusionMethod = WeightedAverage | Ihs | DwtReplace


def _out_dtype(pan: np.ndarray):
    return np.float32 if pan.dtype == np.float32 else np.float64


def resample_bilinear(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resampling with pixel-center alignment.

    Destination pixel (i, j) samples the source at
    ((j + 0.5) * in_w / out_w - 0.5, (i + 0.5) * in_h / out_h - 0.5),
    clamped to the source extent. Unchanged dimensions return a copy.
    """
    p = np.asarray(plane)
    if p.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {p.shape}")
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size {out_w}x{out_h} must be positive")
    in_h, in_w = p.shape
    out_dtype = _out_dtype(p)
    if (out_w, out_h) == (in_w, in_h):
        return p.astype(out_dtype)

    work = p.astype(np.float64)
    sx = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    sy = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = sx - x0
    fy = (sy - y0)[:, None]

    upper = work[y0]
    lower = work[y1]
    row_u = upper[:, x0] * (1.0 - fx) + upper[:, x1] * fx
    row_l = lower[:, x0] * (1.0 - fx) + lower[:, x1] * fx
    return (row_u * (1.0 - fy) + row_l * fy).astype(out_dtype)


def _upsampled_to(pan: np.ndarray, bands: list[np.ndarray]) -> list[np.ndarray]:
    h, w = pan.shape
    return [
        b if b.shape == (h, w) else resample_bilinear(b, w, h) for b in bands
    ]


def fuse_wa(pan: np.ndarray, ms, weight: float) -> list[np.ndarray]:
    """Weighted average: fused_k = weight*pan + (1-weight)*upsample(ms_k).

    Bands not already at panchromatic size are resampled first.
    """
    if not 0.0 <= weight <= 1.0:
        raise WeightOutOfRange(f"weight {weight} outside [0, 1]")
    pan_arr = np.asarray(pan)
    out_dtype = _out_dtype(pan_arr)
    p64 = pan_arr.astype(np.float64)
    fused = []
    for band in _upsampled_to(pan_arr, [np.asarray(b) for b in ms]):
        mixed = weight * p64 + (1.0 - weight) * band.astype(np.float64)
        fused.append(mixed.astype(out_dtype))
    return fused


def fuse_ihs(pan: np.ndarray, ms) -> list[np.ndarray]:
    """Additive intensity substitution for three-band images.

    With I the mean of the upsampled bands, every band receives the same
    detail plane: fused_k = upsample(ms_k) + (pan - I).
    """
    bands = [np.asarray(b) for b in ms]
    if len(bands) != 3:
        raise BandCountMismatch(f"intensity substitution needs 3 bands, got {len(bands)}")
    pan_arr = np.asarray(pan)
    out_dtype = _out_dtype(pan_arr)
    up = [b.astype(np.float64) for b in _upsampled_to(pan_arr, bands)]
    intensity = (up[0] + up[1] + up[2]) / 3.0
    detail = pan_arr.astype(np.float64) - intensity
    return [(b + detail).astype(out_dtype) for b in up]


_LL_GAIN = {WaveletKind.HAAR: 1.0, WaveletKind.DAUB4: 2.0}


def fuse_dwt(pan: np.ndarray, ms_band: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Transform the panchromatic plane, overwrite the approximation
    quadrant with the band data, and invert.

    The band must already be at exactly half the panchromatic size per
    axis. The Haar averaging form has unit DC gain, so band values drop in
    verbatim; the orthonormal Daubechies transform scales the approximation
    quadrant by 2, so the band is scaled to match.
    """
    pan_arr = np.asarray(pan)
    band = np.asarray(ms_band)
    if pan_arr.ndim != 2 or band.ndim != 2:
        raise ValueError("expected 2D arrays")
    h, w = pan_arr.shape
    if h % 2 or w % 2:
        raise OddDimension(f"panchromatic plane {w}x{h} has an odd dimension")
    if band.shape != (h // 2, w // 2):
        raise DimensionMismatch(
            f"band is {band.shape[1]}x{band.shape[0]}, need {w // 2}x{h // 2}"
        )
    coeffs = dwt2d_forward(pan_arr.astype(np.float64), kind)
    coeffs[: h // 2, : w // 2] = band.astype(np.float64) * _LL_GAIN[kind]
    return dwt2d_inverse(coeffs, kind).astype(_out_dtype(pan_arr))


def fuse(pan: np.ndarray, ms, method: FusionMethod) -> list[np.ndarray]:
    """Apply one fusion method to every band.

    Bands are resampled to the size the method needs (half panchromatic
    for DwtReplace, full for the others); bands already at that size pass
    through untouched.
    """
    pan_arr = np.asarray(pan)
    bands = [np.asarray(b) for b in ms]
    if not bands:
        raise BandCountMismatch("need at least one band")
    first = bands[0].shape
    for b in bands[1:]:
        if b.shape != first:
            raise DimensionMismatch(f"band sizes differ: {b.shape} vs {first}")

    if isinstance(method, WeightedAverage):
        return fuse_wa(pan_arr, bands, method.weight)
    if isinstance(method, Ihs):
        return fuse_ihs(pan_arr, bands)
    if isinstance(method, DwtReplace):
        h, w = pan_arr.shape
        if h % 2 or w % 2:
            raise OddDimension(f"panchromatic plane {w}x{h} has an odd dimension")
        half = (h // 2, w // 2)
        resampled = [
            b if b.shape == half else resample_bilinear(b, half[1], half[0])
            for b in bands
        ]
        return [fuse_dwt(pan_arr, b, method.kind) for b in resampled]
    raise TypeError(f"unknown fusion method {method!r}")


def method_from_name(name: str, weight: float = 0.5) -> FusionMethod:
    """Build a method from its short name: wa, ihs, hdwt, or ddwt."""
    if name == "wa":
        return WeightedAverage(weight)
    if name == "ihs":
        return Ihs()
    if name == "hdwt":
        return DwtReplace(WaveletKind.HAAR)
    if name == "ddwt":
        return DwtReplace(WaveletKind.DAUB4)
    raise ValueError(f"unknown method name {name!r}")
