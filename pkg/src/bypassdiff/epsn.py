"""Client side of the EPSN tensor wire protocol.

Frames (all integers little-endian, tensor payloads float32 little-endian):

request   'EPSN' | u8 version=1 | u64 request id | u32 t
          | u32 rank | u32 dims[rank] | f32 payload
response  'EPSR' | u8 version=1 | u64 echoed id | u8 status
          status 0: u32 rank | u32 dims[rank] | f32 payload
          status 1: u32 length | UTF-8 message

The response id must echo the request id, and an ok response must match the
request tensor shape; both are enforced here.
"""

from __future__ import annotations

import socket
import struct

import numpy as np

REQUEST_MAGIC = b"EPSN"
RESPONSE_MAGIC = b"EPSR"
VERSION = 1
STATUS_OK = 0
STATUS_ERROR = 1

MAX_RANK = 8
MAX_ELEMENTS = 1 << 28


class ProtocolError(RuntimeError):
    """Malformed frame, protocol violation, or server-reported failure."""


def encode_request(request_id: int, t: int, tensor: np.ndarray) -> bytes:
    data = np.ascontiguousarray(tensor, dtype="<f4")
    head = REQUEST_MAGIC + struct.pack("<BQI", VERSION, request_id, t)
    dims = struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return head + dims + data.tobytes()


def encode_response_ok(request_id: int, tensor: np.ndarray) -> bytes:
    data = np.ascontiguousarray(tensor, dtype="<f4")
    head = RESPONSE_MAGIC + struct.pack("<BQB", VERSION, request_id, STATUS_OK)
    dims = struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return head + dims + data.tobytes()


def encode_response_error(request_id: int, message: str) -> bytes:
    payload = message.encode("utf-8")
    head = RESPONSE_MAGIC + struct.pack("<BQB", VERSION, request_id, STATUS_ERROR)
    return head + struct.pack("<I", len(payload)) + payload


class _Reader:
    """Pulls exact byte counts off a blocking socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def read(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._sock.recv(remaining)
            if not chunk:
                raise ProtocolError(f"connection closed with {remaining} bytes outstanding")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)


def read_tensor(reader: _Reader) -> np.ndarray:
    (rank,) = struct.unpack("<I", reader.read(4))
    if rank == 0 or rank > MAX_RANK:
        raise ProtocolError(f"invalid tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", reader.read(4 * rank))
    count = int(np.prod(dims, dtype=np.int64))
    if count <= 0 or count > MAX_ELEMENTS:
        raise ProtocolError(f"invalid tensor dims {dims}")
    raw = reader.read(4 * count)
    return np.frombuffer(raw, dtype="<f4").reshape(dims)


class Client:
    """Blocking one-request-at-a-time EPSN client."""

    def __init__(self, address: str, timeout: float = 30.0):
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"address must be host:port, got {address!r}")
        self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        self._reader = _Reader(self._sock)
        self._next_id = 0

    def request(self, tensor: np.ndarray, t: int) -> np.ndarray:
        request_id = self._next_id
        self._next_id += 1
        self._sock.sendall(encode_request(request_id, t, tensor))

        magic = self._reader.read(4)
        if magic != RESPONSE_MAGIC:
            raise ProtocolError(f"bad response magic {magic!r}")
        version, echoed, status = struct.unpack("<BQB", self._reader.read(10))
        if version != VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        if echoed != request_id:
            raise ProtocolError(f"response id {echoed} does not echo request id {request_id}")
        if status == STATUS_OK:
            return read_tensor(self._reader)
        if status == STATUS_ERROR:
            (length,) = struct.unpack("<I", self._reader.read(4))
            message = self._reader.read(length).decode("utf-8", errors="replace")
            raise ProtocolError(f"server error: {message}")
        raise ProtocolError(f"unknown response status {status}")

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
