"""Session message wire format.

Frame layout (big-endian): 1-byte kind, 4-byte sequence number, 4-byte
payload length, payload. RevealValues payloads are packed 64-bit IEEE
754 big-endian (x, p) pairs; PaSeed payloads are exactly 32 bytes. The
format is bit-exact for cross-implementation testing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class MessageError(ValueError):
    """Malformed wire bytes or payload."""


class MessageKind(IntEnum):
    SYNC_ANNOUNCE = 1
    REVEAL_INDICES = 2
    REVEAL_VALUES = 3
    ESTIMATE_ACK = 4
    RECONCILE_BLOCK = 5
    PA_SEED = 6
    KEY_CONFIRM = 7


_HEADER = struct.Struct(">BII")


@dataclass(frozen=True)
class SessionMessage:
    kind: MessageKind
    seq: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise MessageError(f"sequence number out of range: {self.seq}")
        if len(self.payload) > 0xFFFFFFFF:
            raise MessageError("payload too large")


def serialize(msg: SessionMessage) -> bytes:
    return _HEADER.pack(int(msg.kind), msg.seq, len(msg.payload)) + msg.payload


def parse(data: bytes) -> SessionMessage:
    """Parse one frame; the buffer must contain exactly one message."""
    if len(data) < _HEADER.size:
        raise MessageError(f"truncated header: {len(data)} bytes")
    kind_raw, seq, length = _HEADER.unpack_from(data)
    if len(data) != _HEADER.size + length:
        raise MessageError(
            f"length field {length} does not match payload of {len(data) - _HEADER.size}")
    try:
        kind = MessageKind(kind_raw)
    except ValueError as exc:
        raise MessageError(f"unknown message kind {kind_raw}") from exc
    return SessionMessage(kind, seq, bytes(data[_HEADER.size:]))


def pack_float_pairs(x: np.ndarray, p: np.ndarray) -> bytes:
    """Interleave two float arrays as big-endian f64 (x0, p0, x1, p1, ...)."""
    if len(x) != len(p):
        raise MessageError("pair arrays must have equal length")
    out = np.empty(2 * len(x))
    out[0::2] = x
    out[1::2] = p
    return out.astype(">f8").tobytes()


def unpack_float_pairs(payload: bytes):
    if len(payload) % 16 != 0:
        raise MessageError(f"pair payload length {len(payload)} not a multiple of 16")
    flat = np.frombuffer(payload, dtype=">f8").astype(np.float64)
    return flat[0::2].copy(), flat[1::2].copy()


def pack_indices(indices: np.ndarray) -> bytes:
    return np.ascontiguousarray(indices, dtype=">u4").tobytes()


def unpack_indices(payload: bytes) -> np.ndarray:
    if len(payload) % 4 != 0:
        raise MessageError(f"index payload length {len(payload)} not a multiple of 4")
    return np.frombuffer(payload, dtype=">u4").astype(np.int64)


def pack_bits(bits: np.ndarray) -> bytes:
    """Bit array -> 8-byte count header + packed bytes (MSB first)."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    return struct.pack(">Q", bits.size) + np.packbits(bits).tobytes()


def unpack_bits(payload: bytes) -> np.ndarray:
    if len(payload) < 8:
        raise MessageError("bit payload missing count header")
    (count,) = struct.unpack_from(">Q", payload)
    packed = np.frombuffer(payload, dtype=np.uint8, offset=8)
    if packed.size != (count + 7) // 8:
        raise MessageError(f"bit payload size mismatch for count {count}")
    return np.unpackbits(packed, count=count)
