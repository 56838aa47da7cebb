"""EPSN wire framing: length-prefixed little-endian tensor frames over TCP.

Request:  magic ``EPSN`` | u8 version | u64 request id | u32 t |
          u32 rank | u32 dims[rank] | float32 payload
Response: magic ``EPSR`` | u8 version | u64 echoed id | u8 status |
          status 0: rank/dims/payload as above
          status 1: u32 length | UTF-8 message

All integers are little-endian; tensors travel as float32 regardless of
what either endpoint computes in.
"""

import struct

import numpy as np

REQUEST_MAGIC = b"EPSN"
RESPONSE_MAGIC = b"EPSR"
VERSION = 1
STATUS_OK = 0
STATUS_ERROR = 1

MAX_RANK = 8
MAX_ELEMENTS = 1 << 28

_REQ_HEAD = struct.Struct("<BQI")   # version, id, t
_RESP_HEAD = struct.Struct("<BQB")  # version, id, status


class FrameError(Exception):
    """Bytes on the wire do not form a valid frame."""

    def __init__(self, message: str, request_id: int = 0):
        super().__init__(message)
        self.request_id = request_id


class ConnectionClosed(FrameError):
    """The peer closed the stream cleanly between frames."""


class Reader:
    """Exact-read adapter over a socket-like object with recv()."""

    def __init__(self, sock):
        self._sock = sock

    def read(self, n: int, at_frame_start: bool = False) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._sock.recv(remaining)
            if not chunk:
                got = n - remaining
                if got == 0 and at_frame_start:
                    raise ConnectionClosed("stream ended between frames")
                raise FrameError(f"connection closed with {got} of {n} bytes read")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)


def _read_dims(reader: Reader, request_id: int) -> tuple[int, ...]:
    (rank,) = struct.unpack("<I", reader.read(4))
    if not 1 <= rank <= MAX_RANK:
        raise FrameError(f"invalid tensor rank {rank}", request_id)
    dims = struct.unpack(f"<{rank}I", reader.read(4 * rank))
    count = 1
    for d in dims:
        if d == 0:
            raise FrameError(f"invalid dims {dims}", request_id)
        count *= d
    if count > MAX_ELEMENTS:
        raise FrameError(f"tensor too large: {count} elements", request_id)
    return dims


def read_request(reader: Reader) -> tuple[int, int, np.ndarray]:
    """Read one request frame; returns (request id, t, float32 tensor).

    Raises FrameError carrying the request id when it was already parsed,
    so the error response can still echo it; ConnectionClosed when the
    stream ends cleanly before a new frame begins.
    """
    magic = reader.read(4, at_frame_start=True)
    if magic != REQUEST_MAGIC:
        raise FrameError(f"bad request magic {magic!r}")
    version, request_id, t = _REQ_HEAD.unpack(reader.read(_REQ_HEAD.size))
    if version != VERSION:
        raise FrameError(f"unsupported version {version}", request_id)
    try:
        dims = _read_dims(reader, request_id)
        count = int(np.prod(dims, dtype=np.int64))
        payload = reader.read(4 * count)
    except FrameError as exc:
        exc.request_id = exc.request_id or request_id
        raise
    # copy: frombuffer views are read-only, predictors may hand this to torch
    tensor = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return request_id, t, tensor


def encode_ok(request_id: int, tensor: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    head = RESPONSE_MAGIC + _RESP_HEAD.pack(VERSION, request_id, STATUS_OK)
    dims = struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + dims + arr.tobytes()


def encode_error(request_id: int, message: str) -> bytes:
    text = message.encode("utf-8")
    head = RESPONSE_MAGIC + _RESP_HEAD.pack(VERSION, request_id, STATUS_ERROR)
    return head + struct.pack("<I", len(text)) + text


def encode_request(request_id: int, t: int, tensor: np.ndarray) -> bytes:
    """Client-side framing; the bridge tests use it to talk to the server."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    head = REQUEST_MAGIC + _REQ_HEAD.pack(VERSION, request_id, t)
    dims = struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + dims + arr.tobytes()


def read_response(reader: Reader) -> tuple[int, int, object]:
    """Read one response; returns (id, status, tensor or error message)."""
    magic = reader.read(4)
    if magic != RESPONSE_MAGIC:
        raise FrameError(f"bad response magic {magic!r}")
    version, request_id, status = _RESP_HEAD.unpack(reader.read(_RESP_HEAD.size))
    if version != VERSION:
        raise FrameError(f"unsupported version {version}", request_id)
    if status == STATUS_OK:
        dims = _read_dims(reader, request_id)
        count = int(np.prod(dims, dtype=np.int64))
        tensor = np.frombuffer(reader.read(4 * count), dtype="<f4").reshape(dims)
        return request_id, status, tensor
    (length,) = struct.unpack("<I", reader.read(4))
    return request_id, status, reader.read(length).decode("utf-8", "replace")
