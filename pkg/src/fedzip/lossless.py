"""Lossless byte codec with a store mode and a DEFLATE mode.

Frame layout (little-endian):

    codec_id u8 | raw-len u64 | comp-len u64 | payload | CRC32 u32

The DEFLATE payload is a raw RFC 1951 stream. Compression falls back to
store whenever DEFLATE would not shrink the payload, so the frame never
exceeds the input by more than the fixed 21-byte framing cost.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import CorruptStream

STORE = 0
DEFLATE_CLASS = 1

FRAME_OVERHEAD = 21  # 1 + 8 + 8 header plus 4-byte CRC

_HEADER = struct.Struct("<BQQ")


@dataclass(frozen=True)
class LosslessSpec:
    """Which lossless codec to use and how hard to try."""

    codec_id: str = "deflate_class"
    level: int = 6

    def __post_init__(self):
        if self.codec_id not in _CODECS:
            raise ValueError(f"unknown lossless codec {self.codec_id!r}")
        if self.codec_id == "deflate_class" and not 1 <= self.level <= 9:
            raise ValueError(f"deflate level must be in [1, 9], got {self.level}")


def _deflate(raw: bytes, level: int) -> bytes:
    co = zlib.compressobj(level, zlib.DEFLATED, -15)
    return co.compress(raw) + co.flush()


def _inflate(payload: bytes, raw_len: int) -> bytes:
    try:
        out = zlib.decompress(payload, -15)
    except zlib.error as exc:
        raise CorruptStream(f"deflate stream invalid: {exc}") from exc
    if len(out) != raw_len:
        raise CorruptStream(
            f"deflate stream yields {len(out)} bytes, frame declares {raw_len}"
        )
    return out


# codec name -> (wire id, compress(raw, level) -> payload, decompress(payload, raw_len) -> raw)
_CODECS: dict[str, tuple[int, object, object]] = {
    "store": (STORE, lambda raw, level: raw, lambda payload, raw_len: payload),
    "deflate_class": (DEFLATE_CLASS, _deflate, _inflate),
}
_CODECS_BY_ID = {STORE: "store", DEFLATE_CLASS: "deflate_class"}


def register_lossless_codec(name: str, wire_id: int, compress, decompress) -> None:
    """Register an external lossless codec under an unused wire id.

    `compress(raw, level) -> payload` must be inverted exactly by
    `decompress(payload, raw_len) -> raw`.
    """
    if name in _CODECS or wire_id in _CODECS_BY_ID:
        raise ValueError(f"lossless codec {name!r}/{wire_id} already registered")
    if not 0 <= wire_id <= 255:
        raise ValueError("wire id must fit in a byte")
    _CODECS[name] = (wire_id, compress, decompress)
    _CODECS_BY_ID[wire_id] = name


def lossless_compress(data: bytes, spec: LosslessSpec = LosslessSpec()) -> bytes:
    """Frame `data` so that lossless_decompress returns it bit-exactly."""
    wire_id, compress, _ = _CODECS[spec.codec_id]
    payload = compress(data, spec.level)
    if len(payload) >= len(data) and spec.codec_id != "store":
        wire_id, payload = STORE, data  # expansion: store wins
    body = _HEADER.pack(wire_id, len(data), len(payload)) + payload
    return body + struct.pack("<I", zlib.crc32(body))


def lossless_decompress(frame: bytes) -> bytes:
    if len(frame) < _HEADER.size + 4:
        raise CorruptStream(f"frame of {len(frame)} bytes is too short")
    body, (stored_crc,) = frame[:-4], struct.unpack("<I", frame[-4:])
    if zlib.crc32(body) != stored_crc:
        raise CorruptStream("lossless frame CRC32 mismatch")
    wire_id, raw_len, comp_len = _HEADER.unpack(body[: _HEADER.size])
    payload = body[_HEADER.size :]
    if len(payload) != comp_len:
        raise CorruptStream(
            f"frame declares {comp_len} payload bytes, holds {len(payload)}"
        )
    name = _CODECS_BY_ID.get(wire_id)
    if name is None:
        raise CorruptStream(f"unknown lossless codec id {wire_id}")
    _, _, decompress = _CODECS[name]
    out = decompress(payload, raw_len)
    if len(out) != raw_len:
        raise CorruptStream("decoded length disagrees with frame header")
    return out
