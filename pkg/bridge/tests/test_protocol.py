"""Byte-exact framing checks against hand-written golden captures."""

import numpy as np
import pytest

from epsn_bridge import protocol


class BytesSocket:
    """recv() source backed by a byte string."""

    def __init__(self, data: bytes):
        self._data = data

    def recv(self, n: int) -> bytes:
        chunk, self._data = self._data[:n], self._data[n:]
        return chunk


GOLDEN_REQUEST = bytes.fromhex(
    "4550534e"              # magic EPSN
    "01"                    # version 1
    "0700000000000000"      # id 7
    "03000000"              # t 3
    "02000000"              # rank 2
    "0100000002000000"      # dims 1 x 2
    "0000c03f"              # 1.5f
    "000000c0"              # -2.0f
)

GOLDEN_OK = bytes.fromhex(
    "45505352"              # magic EPSR
    "01"                    # version 1
    "0700000000000000"      # id 7 echoed
    "00"                    # status ok
    "02000000"              # rank 2
    "0100000002000000"      # dims 1 x 2
    "00000000"              # 0.0f
    "00000000"              # 0.0f
)

GOLDEN_ERROR = bytes.fromhex(
    "45505352"
    "01"
    "0900000000000000"      # id 9 echoed
    "01"                    # status error
    "03000000"              # message length 3
    "626164"                # "bad"
)


def test_request_decodes_golden_bytes():
    reader = protocol.Reader(BytesSocket(GOLDEN_REQUEST))
    request_id, t, tensor = protocol.read_request(reader)
    assert request_id == 7
    assert t == 3
    assert tensor.shape == (1, 2)
    assert tensor.dtype == np.float32
    assert tensor.tolist() == [[1.5, -2.0]]


def test_request_encodes_golden_bytes():
    raw = protocol.encode_request(7, 3, np.array([[1.5, -2.0]], dtype=np.float32))
    assert raw == GOLDEN_REQUEST


def test_ok_response_encodes_golden_bytes():
    raw = protocol.encode_ok(7, np.zeros((1, 2), dtype=np.float32))
    assert raw == GOLDEN_OK


def test_error_response_encodes_golden_bytes():
    assert protocol.encode_error(9, "bad") == GOLDEN_ERROR


def test_response_decoder_reads_both_golden_forms():
    rid, status, tensor = protocol.read_response(protocol.Reader(BytesSocket(GOLDEN_OK)))
    assert (rid, status) == (7, protocol.STATUS_OK)
    assert tensor.tolist() == [[0.0, 0.0]]
    rid, status, message = protocol.read_response(protocol.Reader(BytesSocket(GOLDEN_ERROR)))
    assert (rid, status) == (9, protocol.STATUS_ERROR)
    assert message == "bad"


def test_round_trip_random_tensors():
    gen = np.random.default_rng(3)
    for _ in range(25):
        rank = int(gen.integers(1, 5))
        shape = tuple(int(d) for d in gen.integers(1, 5, rank))
        tensor = gen.normal(size=shape).astype(np.float32)
        rid = int(gen.integers(0, 2**63))
        t = int(gen.integers(0, 2**31))
        raw = protocol.encode_request(rid, t, tensor)
        got_id, got_t, got = protocol.read_request(protocol.Reader(BytesSocket(raw)))
        assert (got_id, got_t) == (rid, t)
        assert np.array_equal(got, tensor)


def test_bad_magic_rejected():
    with pytest.raises(protocol.FrameError, match="magic"):
        protocol.read_request(protocol.Reader(BytesSocket(b"JUNK" + GOLDEN_REQUEST[4:])))


def test_bad_version_keeps_parsed_id():
    raw = bytearray(GOLDEN_REQUEST)
    raw[4] = 99
    with pytest.raises(protocol.FrameError, match="version") as info:
        protocol.read_request(protocol.Reader(BytesSocket(bytes(raw))))
    assert info.value.request_id == 7


def test_zero_rank_and_huge_rank_rejected():
    for rank in (0, 200):
        raw = GOLDEN_REQUEST[:17] + rank.to_bytes(4, "little") + GOLDEN_REQUEST[21:]
        with pytest.raises(protocol.FrameError, match="rank"):
            protocol.read_request(protocol.Reader(BytesSocket(raw)))


def test_zero_dim_rejected():
    raw = GOLDEN_REQUEST[:21] + (0).to_bytes(4, "little") + GOLDEN_REQUEST[25:]
    with pytest.raises(protocol.FrameError, match="dims"):
        protocol.read_request(protocol.Reader(BytesSocket(raw)))


def test_oversized_tensor_rejected():
    huge = (1 << 20).to_bytes(4, "little")
    raw = GOLDEN_REQUEST[:21] + huge + huge
    with pytest.raises(protocol.FrameError, match="large"):
        protocol.read_request(protocol.Reader(BytesSocket(raw)))


def test_truncated_payload_reports_counts():
    with pytest.raises(protocol.FrameError, match="4 of 8 bytes"):
        protocol.read_request(protocol.Reader(BytesSocket(GOLDEN_REQUEST[:-4])))


def test_clean_close_is_distinguished():
    with pytest.raises(protocol.ConnectionClosed):
        protocol.read_request(protocol.Reader(BytesSocket(b"")))
    # one byte of a magic is not a clean close
    with pytest.raises(protocol.FrameError) as info:
        protocol.read_request(protocol.Reader(BytesSocket(b"E")))
    assert not isinstance(info.value, protocol.ConnectionClosed)
