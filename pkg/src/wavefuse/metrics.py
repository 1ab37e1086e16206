"""Fusion quality metrics: block-mean degradation, universal Q-index,
ERGAS, and the QNR family (spectral distortion, spatial distortion, QNR).

All statistics run in double precision with population (divide-by-n)
moments. The Q-index is evaluated on non-overlapping 32x32 blocks and
averaged; partial blocks at the right/bottom edge are dropped, and images
smaller than one block are treated as a single block.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotDivisible, TooFewBands, ZeroBandMean
from .fusion import resample_bilinear

_BLOCK = 32


@dataclass(frozen=True)
class QualityReport:
    """Bundle of the no-reference quality numbers for one fused image."""

    ergas: float
    q_per_band: list[float]
    d_lambda: float
    d_s: float
    qnr: float


def degrade(plane: np.ndarray, factor: int) -> np.ndarray:
    """Reduce resolution by an integer factor; each output pixel is the
    mean of its factor x factor source block."""
    p = np.asarray(plane, dtype=np.float64)
    if factor < 1:
        raise ValueError(f"factor {factor} must be >= 1")
    if factor == 1:
        return p.copy()
    h, w = p.shape
    if h % factor or w % factor:
        raise NotDivisible(f"{w}x{h} not divisible by {factor}")
    return p.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def _block_view(a: np.ndarray) -> np.ndarray:
    """Stack the full 32x32 blocks of a plane as (count, 32, 32). Planes
    smaller than one block in either direction become a single block."""
    h, w = a.shape
    if h < _BLOCK or w < _BLOCK:
        return a[None]
    rows, cols = h // _BLOCK, w // _BLOCK
    trimmed = a[: rows * _BLOCK, : cols * _BLOCK]
    blocks = trimmed.reshape(rows, _BLOCK, cols, _BLOCK).transpose(0, 2, 1, 3)
    return blocks.reshape(rows * cols, _BLOCK, _BLOCK)


def q_index(a: np.ndarray, b: np.ndarray) -> float:
    """Universal image quality index, block-averaged.

    Per block: Q = 4*cov*mu_a*mu_b / ((var_a+var_b)(mu_a^2+mu_b^2)).
    A block with zero denominator scores 1 when the two blocks are
    element-wise identical and 0 otherwise.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise DimensionMismatch(f"planes differ: {av.shape} vs {bv.shape}")
    ab = _block_view(av)
    bb = _block_view(bv)
    mu_a = ab.mean(axis=(1, 2))
    mu_b = bb.mean(axis=(1, 2))
    var_a = ab.var(axis=(1, 2))
    var_b = bb.var(axis=(1, 2))
    cov = ((ab - mu_a[:, None, None]) * (bb - mu_b[:, None, None])).mean(axis=(1, 2))
    num = 4.0 * cov * mu_a * mu_b
    den = (var_a + var_b) * (mu_a**2 + mu_b**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = num / den
    degenerate = den == 0.0
    if degenerate.any():
        same = np.all(ab[degenerate] == bb[degenerate], axis=(1, 2))
        q[degenerate] = np.where(same, 1.0, 0.0)
    return float(q.mean())


def _as_bands(image) -> list[np.ndarray]:
    bands = [np.asarray(b, dtype=np.float64) for b in image]
    for b in bands[1:]:
        if b.shape != bands[0].shape:
            raise DimensionMismatch(f"band sizes differ: {b.shape} vs {bands[0].shape}")
    return bands


def ergas(fused, ms_ref, ratio: int) -> float:
    """Relative global dimensionless synthesis error.

    Each fused band is degraded by `ratio` and compared to its reference:
    ERGAS = 100 * (1/ratio) * sqrt(mean_k(RMSE_k^2 / mu_k^2)) with mu_k the
    reference band mean.
    """
    if ratio < 1:
        raise ValueError(f"ratio {ratio} must be >= 1")
    f_bands = _as_bands(fused)
    r_bands = _as_bands(ms_ref)
    if len(f_bands) != len(r_bands):
        raise DimensionMismatch(f"band counts differ: {len(f_bands)} vs {len(r_bands)}")
    rh, rw = r_bands[0].shape
    if f_bands[0].shape != (rh * ratio, rw * ratio):
        raise DimensionMismatch(
            f"fused {f_bands[0].shape} is not reference {r_bands[0].shape} times {ratio}"
        )
    acc = 0.0
    for fb, rb in zip(f_bands, r_bands):
        mu = rb.mean()
        if mu == 0.0:
            raise ZeroBandMean("reference band mean is zero")
        mse = float(np.mean((degrade(fb, ratio) - rb) ** 2))
        acc += mse / (mu * mu)
    return 100.0 / ratio * float(np.sqrt(acc / len(f_bands)))


def _upsample_bands(bands: list[np.ndarray], w: int, h: int) -> list[np.ndarray]:
    return [b if b.shape == (h, w) else resample_bilinear(b, w, h) for b in bands]


def d_lambda(fused, ms) -> float:
    """Spectral distortion: mean absolute change of inter-band Q-indexes
    between the fused image and the upsampled original."""
    f_bands = _as_bands(fused)
    m_bands = _as_bands(ms)
    n = len(f_bands)
    if n != len(m_bands):
        raise DimensionMismatch(f"band counts differ: {n} vs {len(m_bands)}")
    if n < 2:
        raise TooFewBands("inter-band comparison needs at least 2 bands")
    fh, fw = f_bands[0].shape
    up = _upsample_bands(m_bands, fw, fh)
    total = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            total += 2.0 * abs(q_index(f_bands[k], f_bands[l]) - q_index(up[k], up[l]))
    return min(1.0, max(0.0, total / (n * (n - 1))))


def _infer_ratio(pan_shape, ms_shape) -> int:
    ph, pw = pan_shape
    mh, mw = ms_shape
    if mh == 0 or mw == 0 or ph % mh or pw % mw or ph // mh != pw // mw:
        raise DimensionMismatch(
            f"panchromatic {pan_shape} is not an integer multiple of bands {ms_shape}"
        )
    return ph // mh


def d_s(fused, ms, pan: np.ndarray) -> float:
    """Spatial distortion: mean absolute difference between each band's
    Q-index against the panchromatic plane at full resolution and at the
    degraded resolution of the originals."""
    f_bands = _as_bands(fused)
    m_bands = _as_bands(ms)
    if len(f_bands) != len(m_bands):
        raise DimensionMismatch(
            f"band counts differ: {len(f_bands)} vs {len(m_bands)}"
        )
    p = np.asarray(pan, dtype=np.float64)
    if f_bands[0].shape != p.shape:
        raise DimensionMismatch(
            f"fused {f_bands[0].shape} does not match panchromatic {p.shape}"
        )
    ratio = _infer_ratio(p.shape, m_bands[0].shape)
    pan_low = degrade(p, ratio)
    total = 0.0
    for fb, mb in zip(f_bands, m_bands):
        total += abs(q_index(fb, p) - q_index(mb, pan_low))
    return min(1.0, max(0.0, total / len(f_bands)))


def qnr(fused, ms, pan: np.ndarray) -> QualityReport:
    """Full quality report for a fused image against its sources.

    The resolution ratio is inferred from the panchromatic/band dimension
    quotient. QNR itself is (1 - d_lambda) * (1 - d_s).
    """
    f_bands = _as_bands(fused)
    m_bands = _as_bands(ms)
    p = np.asarray(pan, dtype=np.float64)
    ratio = _infer_ratio(p.shape, m_bands[0].shape)
    fh, fw = f_bands[0].shape
    up = _upsample_bands(m_bands, fw, fh)
    per_band = [q_index(fb, ub) for fb, ub in zip(f_bands, up)]
    spectral = d_lambda(f_bands, m_bands)
    spatial = d_s(f_bands, m_bands, p)
    return QualityReport(
        ergas=ergas(f_bands, m_bands, ratio),
        q_per_band=per_band,
        d_lambda=spectral,
        d_s=spatial,
        qnr=(1.0 - spectral) * (1.0 - spatial),
    )
