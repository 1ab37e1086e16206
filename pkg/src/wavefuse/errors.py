"""Exception types shared across the package.

Worker nodes report failures over the wire by exception class name, so
these names are part of the protocol surface.
"""


class FusionError(Exception):
    """Base class for every error raised by wavefuse."""


# --- raster I/O ---

class UnsupportedFormat(FusionError):
    pass


class MalformedHeader(FusionError):
    pass


class Truncated(FusionError):
    pass


class ChannelOutOfRange(FusionError):
    pass


# --- wavelet preconditions ---

class OddLength(FusionError):
    pass


class TooShort(FusionError):
    pass


class OddDimension(FusionError):
    pass


class TooSmall(FusionError):
    pass


# --- fusion ---

class WeightOutOfRange(FusionError):
    pass


class BandCountMismatch(FusionError):
    pass


class DimensionMismatch(FusionError):
    pass


# --- metrics ---

class NotDivisible(FusionError):
    pass


class ZeroBandMean(FusionError):
    pass


class TooFewBands(FusionError):
    pass


# --- tiling ---

class OddTile(FusionError):
    pass


class MissingTile(FusionError):
    pass


# --- wire protocol and distributed jobs ---

class ProtocolError(FusionError):
    pass


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class PayloadTooLarge(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    pass


class JobFailed(FusionError):
    pass


class NoWorkers(FusionError):
    pass
