"""Binary PGM/PPM raster I/O and 8-bit <-> float conversions.

Storage and wire representation is 8 bits per sample ("Raster8"): a uint8
array of shape (height, width) for grayscale or (height, width, 3) for RGB,
row-major, channel-interleaved. The compute representation ("Plane") is a
2D float array on the same 0..255 scale; no [0,1] normalization happens
anywhere, so quantization error stays easy to reason about.
"""

import numpy as np

from .errors import (
    ChannelOutOfRange,
    MalformedHeader,
    Truncated,
    UnsupportedFormat,
)

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _scan_header_ints(data: bytes, pos: int, count: int) -> tuple[list[int], int]:
    """Read `count` decimal tokens starting at `pos`, skipping whitespace
    and '#' comment lines. Returns the values and the offset just past the
    last token."""
    values = []
    n = len(data)
    while len(values) < count:
        while pos < n and data[pos : pos + 1] in _WHITESPACE:
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise MalformedHeader("unterminated comment in header")
            pos = eol + 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise MalformedHeader("expected integer in header")
        values.append(int(data[start:pos]))
    return values, pos


def read_pnm(data: bytes) -> np.ndarray:
    """Decode a binary PGM (P5) or PPM (P6) with maxval 255.

    Returns a uint8 array of shape (h, w) for P5 or (h, w, 3) for P6.
    Raises UnsupportedFormat for other magics or maxvals, MalformedHeader
    for an unparseable header, Truncated when payload bytes are missing.
    """
    if len(data) < 2:
        raise MalformedHeader("input shorter than a magic number")
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise UnsupportedFormat("expected binary PGM (P5) or PPM (P6)")
    if len(data) < 3 or data[2:3] not in _WHITESPACE:
        raise MalformedHeader("magic number not followed by whitespace")

    (width, height, maxval), pos = _scan_header_ints(data, 2, 3)
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"maxval {maxval} not supported, need 255")
    # exactly one whitespace byte separates maxval from the payload
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1

    expected = width * height * channels
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise Truncated(f"payload has {len(payload)} bytes, header promises {expected}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, 3).copy()


def write_pnm(raster: np.ndarray) -> bytes:
    """Encode a uint8 raster as binary PGM (2D input) or PPM ((h, w, 3) input).

    read_pnm(write_pnm(r)) reproduces r bit-exactly.
    """
    r = np.asarray(raster)
    if r.dtype != np.uint8:
        raise UnsupportedFormat(f"raster dtype must be uint8, got {r.dtype}")
    if r.ndim == 2:
        magic = b"P5"
    elif r.ndim == 3 and r.shape[2] == 3:
        magic = b"P6"
    else:
        raise UnsupportedFormat(f"raster shape {r.shape} is not (h, w) or (h, w, 3)")
    h, w = r.shape[:2]
    header = magic + b"\n%d %d\n255\n" % (w, h)
    return header + np.ascontiguousarray(r).tobytes()


def to_plane(raster: np.ndarray, channel: int = 0) -> np.ndarray:
    """Extract one channel as a float32 plane; values keep the 0..255 scale."""
    r = np.asarray(raster)
    channels = 1 if r.ndim == 2 else r.shape[2]
    if channel < 0 or channel >= channels:
        raise ChannelOutOfRange(f"channel {channel} of {channels}")
    if r.ndim == 2:
        return r.astype(np.float32)
    return np.ascontiguousarray(r[:, :, channel]).astype(np.float32)


def quantize(plane: np.ndarray) -> np.ndarray:
    """Quantize a float plane to uint8: clamp to [0, 255], then round
    half-away-from-zero. Clamping first keeps DWT reconstruction overshoot
    from wrapping."""
    p = np.asarray(plane)
    clamped = np.clip(p, 0.0, 255.0)
    # all values are >= 0 after the clamp, so floor(x + 0.5) is
    # half-away-from-zero
    return np.floor(clamped + 0.5).astype(np.uint8)
