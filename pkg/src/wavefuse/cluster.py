"""Distributed tile fusion over TCP: framing, task/result payloads, the
worker server, and the dispatching master.

Wire format, all integers little-endian:

    magic "WFUS" | version u16 (=1) | msg_type u16 | payload_len u32 | payload

Message types: 1 HELLO, 2 TASK, 3 RESULT, 4 ERROR, 5 SHUTDOWN. Types 6/7
(TASK_F32 / RESULT_F32) are the same task flow with float32 result planes
for callers that want to skip the result-side quantization; task inputs
stay 8bpp either way.

A TASK payload is a fixed header

    tile_row u16 | tile_col u16 | method u8 | wavelet u8 |
    wa_weight_milli u16 | pan_w u32 | pan_h u32 | band_count u8

followed by the pan tile (pan_w*pan_h bytes) and band_count half-size band
planes ((pan_w/2)*(pan_h/2) bytes each). A RESULT payload is
tile_row u16 | tile_col u16 | band_count u8 followed by pan-sized fused
planes, uint8 (RESULT) or little-endian float32 (RESULT_F32). An ERROR
payload is the failure's exception class name in UTF-8.

Workers compute in 32-bit float and quantize results before replying, so
transfer stays at 8 bits per sample in both directions by default.
"""

import logging
import os
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    DimensionMismatch,
    JobFailed,
    MalformedPayload,
    NoWorkers,
    OddDimension,
    PayloadTooLarge,
    TruncatedFrame,
    UnknownType,
    WeightOutOfRange,
)
from .fusion import DwtReplace, FusionMethod, Ihs, WeightedAverage
from .imageio import quantize
from .tiling import Tile, TileGrid, fuse_tile_quantized, merge, split, wire_planes
from .wavelet import WaveletKind

log = logging.getLogger("wavefuse.cluster")

MAGIC = b"WFUS"
VERSION = 1
MAX_PAYLOAD = 256 * 1024 * 1024

_HEADER = struct.Struct("<4sHHI")
_TASK_FIXED = struct.Struct("<HHBBHIIB")
_RESULT_FIXED = struct.Struct("<HHB")


class MsgType(IntEnum):
    HELLO = 1
    TASK = 2
    RESULT = 3
    ERROR = 4
    SHUTDOWN = 5
    TASK_F32 = 6
    RESULT_F32 = 7


_METHOD_WA = 1
_METHOD_IHS = 2
_METHOD_DWT = 3
_WAVELET_NONE = 0
_WAVELET_HAAR = 1
_WAVELET_DAUB4 = 2


@dataclass(frozen=True)
class WireMessage:
    msg_type: int
    payload: bytes = b""


def configure_logging() -> None:
    """Set log verbosity from WAVEFUSE_LOG (off|info|debug); default off."""
    value = os.environ.get("WAVEFUSE_LOG", "off").strip().lower()
    level = {"info": logging.INFO, "debug": logging.DEBUG}.get(value)
    root = logging.getLogger("wavefuse")
    if level is None:
        root.setLevel(logging.CRITICAL + 1)
        return
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s")
        )
        root.addHandler(handler)


def encode_message(message: WireMessage) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, int(message.msg_type), len(message.payload)) + message.payload


def _check_header(header: bytes) -> tuple[int, int]:
    magic, version, msg_type, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"version {version}, expected {VERSION}")
    if msg_type not in MsgType._value2member_map_:
        raise UnknownType(f"message type {msg_type}")
    if payload_len > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")
    return msg_type, payload_len


def decode_message(data: bytes) -> WireMessage:
    """Decode one complete frame; the buffer must hold exactly one."""
    if len(data) < _HEADER.size:
        raise TruncatedFrame(f"{len(data)} bytes, header needs {_HEADER.size}")
    msg_type, payload_len = _check_header(data[: _HEADER.size])
    end = _HEADER.size + payload_len
    if len(data) < end:
        raise TruncatedFrame(f"payload has {len(data) - _HEADER.size} of {payload_len} bytes")
    if len(data) > end:
        raise MalformedPayload(f"{len(data) - end} trailing bytes after frame")
    return WireMessage(MsgType(msg_type), data[_HEADER.size : end])


def recvall(sock: socket.socket, n: int) -> bytes:
    """Read exactly n bytes; TruncatedFrame if the peer closes early."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise TruncatedFrame(f"connection closed with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> WireMessage | None:
    """Read one frame from a socket; None on clean end-of-stream."""
    first = sock.recv(1)
    if not first:
        return None
    header = first + recvall(sock, _HEADER.size - 1)
    msg_type, payload_len = _check_header(header)
    payload = recvall(sock, payload_len) if payload_len else b""
    return WireMessage(MsgType(msg_type), payload)


def send_message(sock: socket.socket, message: WireMessage) -> None:
    sock.sendall(encode_message(message))


def _method_codes(method: FusionMethod) -> tuple[int, int, int]:
    if isinstance(method, WeightedAverage):
        if not 0.0 <= method.weight <= 1.0:
            raise WeightOutOfRange(f"weight {method.weight} outside [0, 1]")
        return _METHOD_WA, _WAVELET_NONE, round(method.weight * 1000)
    if isinstance(method, Ihs):
        return _METHOD_IHS, _WAVELET_NONE, 0
    if isinstance(method, DwtReplace):
        code = _WAVELET_HAAR if method.kind is WaveletKind.HAAR else _WAVELET_DAUB4
        return _METHOD_DWT, code, 0
    raise TypeError(f"unknown fusion method {method!r}")


def _method_from_codes(method: int, wavelet: int, weight_milli: int) -> FusionMethod:
    if method == _METHOD_WA:
        if weight_milli > 1000:
            raise MalformedPayload(f"weight {weight_milli} thousandths outside [0, 1000]")
        return WeightedAverage(weight_milli / 1000.0)
    if method == _METHOD_IHS:
        return Ihs()
    if method == _METHOD_DWT:
        if wavelet == _WAVELET_HAAR:
            return DwtReplace(WaveletKind.HAAR)
        if wavelet == _WAVELET_DAUB4:
            return DwtReplace(WaveletKind.DAUB4)
        raise MalformedPayload(f"unknown wavelet code {wavelet}")
    raise MalformedPayload(f"unknown method code {method}")


def pack_task(tile: Tile, method: FusionMethod) -> bytes:
    """Serialize one 8bpp tile plus its fusion parameters."""
    pan = np.asarray(tile.pan)
    if pan.dtype != np.uint8 or pan.ndim != 2:
        raise MalformedPayload("pan tile must be a 2D uint8 array")
    h, w = pan.shape
    if h % 2 or w % 2:
        raise OddDimension(f"pan tile {w}x{h} has an odd dimension")
    if not tile.ms or len(tile.ms) > 255:
        raise MalformedPayload(f"band count {len(tile.ms)} outside 1..255")
    method_code, wavelet_code, milli = _method_codes(method)
    row, col = tile.index
    parts = [
        _TASK_FIXED.pack(row, col, method_code, wavelet_code, milli, w, h, len(tile.ms)),
        np.ascontiguousarray(pan).tobytes(),
    ]
    for band in tile.ms:
        b = np.asarray(band)
        if b.dtype != np.uint8 or b.shape != (h // 2, w // 2):
            raise MalformedPayload(
                f"band must be uint8 at {w // 2}x{h // 2}, got {b.dtype} {b.shape}"
            )
        parts.append(np.ascontiguousarray(b).tobytes())
    return b"".join(parts)


def unpack_task(payload: bytes) -> tuple[Tile, FusionMethod]:
    if len(payload) < _TASK_FIXED.size:
        raise MalformedPayload(f"task payload of {len(payload)} bytes is too short")
    row, col, method_code, wavelet_code, milli, w, h, band_count = _TASK_FIXED.unpack_from(payload)
    if w % 2 or h % 2:
        raise OddDimension(f"pan tile {w}x{h} has an odd dimension")
    if w == 0 or h == 0 or band_count == 0:
        raise MalformedPayload(f"empty task: {w}x{h}, {band_count} bands")
    method = _method_from_codes(method_code, wavelet_code, milli)
    pan_bytes = w * h
    band_bytes = (w // 2) * (h // 2)
    expected = _TASK_FIXED.size + pan_bytes + band_count * band_bytes
    if len(payload) != expected:
        raise MalformedPayload(f"task payload is {len(payload)} bytes, expected {expected}")
    pos = _TASK_FIXED.size
    pan = np.frombuffer(payload, dtype=np.uint8, count=pan_bytes, offset=pos).reshape(h, w).copy()
    pos += pan_bytes
    bands = []
    for _ in range(band_count):
        bands.append(
            np.frombuffer(payload, dtype=np.uint8, count=band_bytes, offset=pos)
            .reshape(h // 2, w // 2)
            .copy()
        )
        pos += band_bytes
    return Tile((row, col), pan, bands), method


def pack_result(index: tuple[int, int], bands: list[np.ndarray]) -> bytes:
    row, col = index
    parts = [_RESULT_FIXED.pack(row, col, len(bands))]
    for band in bands:
        b = np.asarray(band)
        parts.append(np.ascontiguousarray(b).tobytes())
    return b"".join(parts)


def unpack_result(
    payload: bytes, pan_w: int, pan_h: int, float32: bool = False
) -> tuple[tuple[int, int], list[np.ndarray]]:
    if len(payload) < _RESULT_FIXED.size:
        raise MalformedPayload(f"result payload of {len(payload)} bytes is too short")
    row, col, band_count = _RESULT_FIXED.unpack_from(payload)
    dtype = np.dtype("<f4") if float32 else np.dtype(np.uint8)
    plane_bytes = pan_w * pan_h * dtype.itemsize
    expected = _RESULT_FIXED.size + band_count * plane_bytes
    if len(payload) != expected:
        raise MalformedPayload(f"result payload is {len(payload)} bytes, expected {expected}")
    bands = []
    pos = _RESULT_FIXED.size
    for _ in range(band_count):
        plane = np.frombuffer(payload, dtype=dtype, count=pan_w * pan_h, offset=pos)
        bands.append(plane.reshape(pan_h, pan_w).copy())
        pos += plane_bytes
    return (row, col), bands


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint {endpoint!r} is not host:port")
    return host, int(port)


class WorkerServer:
    """Accepts one master connection at a time and fuses tiles until told
    to shut down."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._shutdown = threading.Event()
        self._conn_lock = threading.Lock()
        self._conn: socket.socket | None = None

    def handle_task(self, tile: Tile, method: FusionMethod) -> list[np.ndarray]:
        """Fuse one tile; separated out so tests can wrap or delay it."""
        return fuse_tile_quantized(tile.pan, tile.ms, method)

    def _reply_error(self, conn: socket.socket, exc: BaseException) -> None:
        name = type(exc).__name__.encode()
        try:
            send_message(conn, WireMessage(MsgType.ERROR, name))
        except OSError:
            pass

    def _serve_connection(self, conn: socket.socket) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while not self._shutdown.is_set():
            try:
                frame = read_frame(conn)
            except (BadMagic, BadVersion, UnknownType, PayloadTooLarge, TruncatedFrame) as exc:
                log.info("protocol error from master: %s", exc)
                self._reply_error(conn, exc)
                return
            except OSError:
                return
            if frame is None:
                return
            if frame.msg_type == MsgType.HELLO:
                send_message(conn, WireMessage(MsgType.HELLO))
            elif frame.msg_type in (MsgType.TASK, MsgType.TASK_F32):
                try:
                    tile, method = unpack_task(frame.payload)
                    planes = self.handle_task(tile, method)
                    if frame.msg_type == MsgType.TASK:
                        bands = [quantize(p) for p in planes]
                    else:
                        bands = [np.asarray(p, dtype="<f4") for p in planes]
                    reply_type = (
                        MsgType.RESULT if frame.msg_type == MsgType.TASK else MsgType.RESULT_F32
                    )
                    send_message(
                        conn, WireMessage(reply_type, pack_result(tile.index, bands))
                    )
                    log.debug("tile %s done", tile.index)
                except OSError:
                    return
                except Exception as exc:
                    log.info("task failed: %s: %s", type(exc).__name__, exc)
                    self._reply_error(conn, exc)
            elif frame.msg_type == MsgType.SHUTDOWN:
                log.info("shutdown requested")
                self._shutdown.set()
                return
            elif frame.msg_type == MsgType.ERROR:
                log.info("master aborted: %s", frame.payload.decode(errors="replace"))
            else:
                self._reply_error(conn, UnknownType(f"unexpected {frame.msg_type}"))

    def serve_forever(self) -> None:
        log.info("worker listening on %s:%d", self.host, self.port)
        try:
            while not self._shutdown.is_set():
                try:
                    conn, addr = self._listener.accept()
                except OSError:
                    return  # listener closed
                log.info("master connected from %s", addr)
                with self._conn_lock:
                    self._conn = conn
                try:
                    self._serve_connection(conn)
                finally:
                    with self._conn_lock:
                        self._conn = None
                    conn.close()
        finally:
            self._listener.close()

    def close(self) -> None:
        """Stop serving immediately, dropping any live connection."""
        self._shutdown.set()
        with self._conn_lock:
            if self._conn is not None:
                try:
                    self._conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                self._conn.close()
        try:
            # close() alone does not wake a blocked accept() on Linux
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._listener.close()


def run_worker(endpoint: str) -> None:
    """Serve fusion tasks on host:port until a SHUTDOWN frame arrives."""
    configure_logging()
    host, port = parse_endpoint(endpoint)
    WorkerServer(host, port).serve_forever()


def shutdown_worker(endpoint: str, timeout: float = 5.0) -> None:
    """Ask the worker at host:port to exit."""
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        send_message(sock, WireMessage(MsgType.SHUTDOWN))


class _JobState:
    """Shared dispatch state; all mutation happens under the condition."""

    def __init__(self, tile_count: int, max_retries: int):
        self.cond = threading.Condition()
        self.pending: deque[int] = deque(range(tile_count))
        self.attempts = [0] * tile_count
        self.results: list[list[np.ndarray] | None] = [None] * tile_count
        self.done = 0
        self.tile_count = tile_count
        self.max_retries = max_retries
        self.failure: Exception | None = None
        self.live_workers = 0
        self.connected_once = False

    def record_failure(self, index: int, reason: str) -> None:
        # caller holds the condition
        self.attempts[index] += 1
        if self.attempts[index] > self.max_retries:
            self.failure = JobFailed(
                f"tile {index} failed after {self.attempts[index]} attempts: {reason}"
            )
        else:
            self.pending.appendleft(index)

    def record_result(self, index: int, bands: list[np.ndarray]) -> None:
        # caller holds the condition; duplicates are discarded by index
        if self.results[index] is None:
            self.results[index] = bands
            self.done += 1


class _WorkerLink(threading.Thread):
    """One master-side connection: sends tasks, collects replies.

    Replies from a worker arrive in task order, so an ERROR (which carries
    no tile index) is attributed to the oldest in-flight task. RESULT
    frames carry their index and are matched by it.
    """

    def __init__(self, endpoint, state: _JobState, tasks, grid: TileGrid, exact, timeout):
        super().__init__(daemon=True, name=f"link-{endpoint}")
        self.endpoint = endpoint
        self.state = state
        self.tasks = tasks  # index -> encoded TASK payload bytes
        self.grid = grid
        self.task_type = MsgType.TASK_F32 if exact else MsgType.TASK
        self.reply_type = MsgType.RESULT_F32 if exact else MsgType.RESULT
        self.exact = exact
        self.timeout = timeout

    def run(self) -> None:
        try:
            self._run_link()
        finally:
            with self.state.cond:
                self.state.live_workers -= 1
                self.state.cond.notify_all()

    def _run_link(self) -> None:
        state = self.state
        host, port = parse_endpoint(self.endpoint)
        try:
            sock = socket.create_connection((host, port), timeout=self.timeout)
        except OSError as exc:
            log.info("connect to %s failed: %s", self.endpoint, exc)
            return
        inflight: deque[int] = deque()
        try:
            sock.settimeout(self.timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            send_message(sock, WireMessage(MsgType.HELLO))
            hello = read_frame(sock)
            if hello is None or hello.msg_type != MsgType.HELLO:
                raise JobFailed(f"bad handshake from {self.endpoint}")
            with state.cond:
                state.connected_once = True
            while True:
                new_work: list[int] = []
                with state.cond:
                    if state.failure is not None or state.done == state.tile_count:
                        return
                    while len(inflight) + len(new_work) < 2 and state.pending:
                        new_work.append(state.pending.popleft())
                    if not new_work and not inflight:
                        # idle but the job is unfinished: another link holds
                        # the remaining tiles and may yet requeue them
                        state.cond.wait(timeout=0.05)
                        continue
                for index in new_work:
                    send_message(sock, WireMessage(self.task_type, self.tasks[index]))
                    inflight.append(index)
                frame = read_frame(sock)
                if frame is None:
                    raise TruncatedFrame("worker closed the connection")
                if frame.msg_type == self.reply_type:
                    (row, col), bands = unpack_result(
                        frame.payload,
                        self.grid.pan_tile_w,
                        self.grid.pan_tile_h,
                        float32=self.exact,
                    )
                    if row >= self.grid.grid_h or col >= self.grid.grid_w:
                        raise MalformedPayload(f"result index {(row, col)} outside grid")
                    index = row * self.grid.grid_w + col
                    if index in inflight:
                        inflight.remove(index)
                    with state.cond:
                        state.record_result(index, bands)
                        state.cond.notify_all()
                elif frame.msg_type == MsgType.ERROR:
                    reason = frame.payload.decode(errors="replace")
                    log.info("worker %s reported: %s", self.endpoint, reason)
                    if inflight:
                        with state.cond:
                            state.record_failure(inflight.popleft(), reason)
                            state.cond.notify_all()
                else:
                    raise JobFailed(f"unexpected {frame.msg_type.name} from {self.endpoint}")
        except (OSError, BadMagic, BadVersion, TruncatedFrame, UnknownType, PayloadTooLarge, MalformedPayload) as exc:
            # link-level trouble: this worker is abandoned and its tiles
            # go back to the queue for the survivors
            log.info("link to %s dropped: %s", self.endpoint, exc)
            with state.cond:
                while inflight:
                    state.record_failure(inflight.popleft(), str(exc))
                state.cond.notify_all()
        except Exception as exc:
            with state.cond:
                if state.failure is None:
                    state.failure = exc if isinstance(exc, JobFailed) else JobFailed(str(exc))
                state.cond.notify_all()
        finally:
            sock.close()


def run_master(
    pan: np.ndarray,
    ms,
    method: FusionMethod,
    grid: TileGrid,
    endpoints,
    task_timeout: float = 30.0,
    max_retries: int = 2,
    exact_results: bool = False,
) -> list[np.ndarray]:
    """Quantize, split, dispatch to workers, and merge by tile index.

    Tiles flow through a shared queue with at most two in flight per
    worker; a dropped or timed-out worker has its tiles requeued, and a
    tile exceeding max_retries aborts the job. The merged output is
    byte-identical to `fuse_tiled(..., transfer_8bpp=True)` (or, with
    exact_results, to the same pipeline without result quantization).
    """
    configure_logging()
    endpoints = list(endpoints)
    if not endpoints:
        raise NoWorkers("no worker endpoints given")
    pan_u8, ms_u8 = wire_planes(pan, ms, grid)
    tiles = split(pan_u8, ms_u8, grid)
    tasks = [pack_task(tile, method) for tile in tiles]

    state = _JobState(len(tiles), max_retries)
    state.live_workers = len(endpoints)
    links = [
        _WorkerLink(ep, state, tasks, grid, exact_results, task_timeout)
        for ep in endpoints
    ]
    for link in links:
        link.start()

    with state.cond:
        while True:
            if state.failure is not None:
                raise state.failure
            if state.done == state.tile_count:
                break
            if state.live_workers == 0:
                if not state.connected_once:
                    raise NoWorkers(f"no worker among {endpoints} was reachable")
                raise JobFailed("all workers disconnected with tiles outstanding")
            state.cond.wait(timeout=0.1)

    for link in links:
        link.join(timeout=task_timeout)
    return merge(state.results, grid)
