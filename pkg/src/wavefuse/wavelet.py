"""Single-level discrete wavelet transforms for the fusion engine.

Two filter choices: the averaging form of the Haar transform (approximation
is the pairwise mean, detail the pairwise half-difference) and the
orthonormal Daubechies 4-tap bank. Boundaries wrap periodically, which keeps
the transforms exactly invertible at every supported length.

Coefficient layout: for a length-N axis, indices [0, N/2) hold the
approximation coefficients and [N/2, N) the details. The 2D transform packs
both axes, so the low/low quadrant sits top-left.

Transforms are out-of-place and pure. Arithmetic runs in double precision
regardless of input dtype; results are cast back to float32 when the input
was float32, so reconstruction error for 0..255-scale data stays at the
cast-rounding level (well under 1e-4).
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OddDimension, OddLength, TooShort, TooSmall


class WaveletKind(Enum):
    HAAR = "haar"
    DAUB4 = "daub4"


@dataclass(frozen=True)
class FilterBank:
    """Analysis/synthesis filter quads for a 4-tap orthonormal wavelet.

    analysis_high mirrors analysis_low (quadrature mirror: high[k] =
    (-1)^k * low[3-k]). synthesis_even/synthesis_odd are the interleaved
    taps that rebuild even- and odd-index samples from an (approx, detail)
    pair and its predecessor.
    """

    analysis_low: np.ndarray
    analysis_high: np.ndarray
    synthesis_even: np.ndarray
    synthesis_odd: np.ndarray


def d4_filters() -> FilterBank:
    """Daubechies-4 filter bank in double precision.

    analysis_low sums to sqrt(2) (DC gain), analysis_high sums to 0.
    """
    s3 = math.sqrt(3.0)
    scale = 4.0 * math.sqrt(2.0)
    low = np.array(
        [(1.0 + s3) / scale, (3.0 + s3) / scale, (3.0 - s3) / scale, (1.0 - s3) / scale]
    )
    high = np.array([low[3], -low[2], low[1], -low[0]])
    even = np.array([low[2], high[2], low[0], high[0]])
    odd = np.array([low[3], high[3], low[1], high[1]])
    for arr in (low, high, even, odd):
        arr.setflags(write=False)
    return FilterBank(low, high, even, odd)


_MIN_LEN = {WaveletKind.HAAR: 2, WaveletKind.DAUB4: 4}


def _out_dtype(arr: np.ndarray):
    return np.float32 if arr.dtype == np.float32 else np.float64


def _forward_last(x: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Forward transform along the last axis of a float64 array."""
    even = x[..., 0::2]
    odd = x[..., 1::2]
    if kind is WaveletKind.HAAR:
        approx = (even + odd) * 0.5
        detail = (even - odd) * 0.5
    else:
        h0, h1, h2, h3 = d4_filters().analysis_low
        g0, g1, g2, g3 = d4_filters().analysis_high
        even1 = np.roll(even, -1, axis=-1)
        odd1 = np.roll(odd, -1, axis=-1)
        approx = h0 * even + h1 * odd + h2 * even1 + h3 * odd1
        detail = g0 * even + g1 * odd + g2 * even1 + g3 * odd1
    return np.concatenate([approx, detail], axis=-1)


def _inverse_last(c: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Inverse transform along the last axis of a float64 array."""
    half = c.shape[-1] // 2
    approx = c[..., :half]
    detail = c[..., half:]
    out = np.empty_like(c)
    if kind is WaveletKind.HAAR:
        out[..., 0::2] = approx + detail
        out[..., 1::2] = approx - detail
    else:
        bank = d4_filters()
        t0, t1, t2, t3 = bank.synthesis_even
        u0, u1, u2, u3 = bank.synthesis_odd
        # each output pair mixes the current (approx, detail) pair with the
        # previous one; roll(+1) supplies the wrap-around predecessor
        a_prev = np.roll(approx, 1, axis=-1)
        d_prev = np.roll(detail, 1, axis=-1)
        out[..., 0::2] = t0 * a_prev + t1 * d_prev + t2 * approx + t3 * detail
        out[..., 1::2] = u0 * a_prev + u1 * d_prev + u2 * approx + u3 * detail
    return out


def _check_1d(x: np.ndarray, kind: WaveletKind) -> None:
    if x.ndim != 1:
        raise ValueError(f"expected a 1D array, got shape {x.shape}")
    if x.shape[0] < _MIN_LEN[kind]:
        raise TooShort(f"length {x.shape[0]} below minimum {_MIN_LEN[kind]}")
    if x.shape[0] % 2:
        raise OddLength(f"length {x.shape[0]} is odd")


def _check_2d(p: np.ndarray, kind: WaveletKind) -> None:
    if p.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {p.shape}")
    h, w = p.shape
    if h < _MIN_LEN[kind] or w < _MIN_LEN[kind]:
        raise TooSmall(f"{w}x{h} below minimum {_MIN_LEN[kind]} per side")
    if h % 2 or w % 2:
        raise OddDimension(f"{w}x{h} has an odd dimension")


def dwt1d_forward(x: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Single-level forward transform of an even-length vector.

    Returns a vector of the same length: approximations first, details
    second.
    """
    arr = np.asarray(x)
    _check_1d(arr, kind)
    return _forward_last(arr.astype(np.float64), kind).astype(_out_dtype(arr))


def dwt1d_inverse(coeffs: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Reconstruct a vector from its single-level coefficients."""
    arr = np.asarray(coeffs)
    _check_1d(arr, kind)
    return _inverse_last(arr.astype(np.float64), kind).astype(_out_dtype(arr))


def dwt2d_forward(plane: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Separable single-level 2D forward transform: rows, then columns."""
    arr = np.asarray(plane)
    _check_2d(arr, kind)
    rows = _forward_last(arr.astype(np.float64), kind)
    both = _forward_last(rows.T, kind).T
    return np.ascontiguousarray(both).astype(_out_dtype(arr))


def dwt2d_inverse(coeffs: np.ndarray, kind: WaveletKind) -> np.ndarray:
    """Inverse of dwt2d_forward: columns, then rows."""
    arr = np.asarray(coeffs)
    _check_2d(arr, kind)
    cols = _inverse_last(arr.astype(np.float64).T, kind).T
    full = _inverse_last(cols, kind)
    return np.ascontiguousarray(full).astype(_out_dtype(arr))
