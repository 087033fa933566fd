"""Wire format: framing, payload packers, malformed input rejection."""

import struct

import numpy as np
import pytest

from droneqkd import messages
from droneqkd.messages import (MessageError, MessageKind, SessionMessage,
                               pack_bits, pack_float_pairs, pack_indices,
                               parse, serialize, unpack_bits,
                               unpack_float_pairs, unpack_indices)


def test_frame_layout_is_big_endian():
    msg = SessionMessage(MessageKind.PA_SEED, 0x01020304, b"\xaa\xbb")
    raw = serialize(msg)
    assert raw[:1] == bytes([MessageKind.PA_SEED])
    assert raw[1:5] == b"\x01\x02\x03\x04"
    assert raw[5:9] == b"\x00\x00\x00\x02"
    assert raw[9:] == b"\xaa\xbb"


def test_round_trip_fuzz():
    rng = np.random.default_rng(0)
    kinds = list(MessageKind)
    for _ in range(2000):
        kind = kinds[rng.integers(0, len(kinds))]
        seq = int(rng.integers(0, 2**32))
        payload = rng.bytes(int(rng.integers(0, 256)))
        msg = SessionMessage(kind, seq, payload)
        assert parse(serialize(msg)) == msg


def test_parse_rejects_malformed():
    good = serialize(SessionMessage(MessageKind.KEY_CONFIRM, 1, b"x" * 8))
    with pytest.raises(MessageError):
        parse(good[:5])                      # truncated header
    with pytest.raises(MessageError):
        parse(good[:-1])                     # truncated payload
    with pytest.raises(MessageError):
        parse(good + b"z")                   # trailing junk
    bad_kind = bytes([99]) + good[1:]
    with pytest.raises(MessageError):
        parse(bad_kind)
    with pytest.raises(MessageError):
        SessionMessage(MessageKind.PA_SEED, -1, b"")
    with pytest.raises(MessageError):
        SessionMessage(MessageKind.PA_SEED, 2**32, b"")


def test_float_pairs_round_trip_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(500)
    p = rng.standard_normal(500)
    payload = pack_float_pairs(x, p)
    assert len(payload) == 500 * 16
    # interleaved big-endian: first 8 bytes are x[0]
    assert struct.unpack(">d", payload[:8])[0] == x[0]
    x2, p2 = unpack_float_pairs(payload)
    assert np.array_equal(x, x2) and np.array_equal(p, p2)
    with pytest.raises(MessageError):
        unpack_float_pairs(payload[:-4])
    with pytest.raises(MessageError):
        pack_float_pairs(x, p[:-1])


def test_indices_round_trip():
    idx = np.array([0, 5, 17, 2**32 - 1], dtype=np.uint32)
    out = unpack_indices(pack_indices(idx))
    assert np.array_equal(out, idx.astype(np.int64))
    with pytest.raises(MessageError):
        unpack_indices(b"\x00\x01\x02")


def test_bits_round_trip():
    rng = np.random.default_rng(2)
    for n in (0, 1, 7, 8, 9, 1000):
        bits = rng.integers(0, 2, n).astype(np.uint8)
        out = unpack_bits(pack_bits(bits))
        assert np.array_equal(out, bits)
    with pytest.raises(MessageError):
        unpack_bits(b"\x00" * 7)
    with pytest.raises(MessageError):
        unpack_bits(struct.pack(">Q", 100) + b"\x00")
