"""Client-update compression: partition a state dict, route each tensor
to a lossy or lossless codec, and frame the result as one byte stream.

FSZU update layout (little-endian):

    magic "FSZU" | version u16 |
    codec_id u8 | bound-mode u8 | epsilon f64 | block_size u32 | quant_radius u32 |
    entry-count u32 |
    per entry: name-len u16 | name | dtype u8 | rank u8 | dims u64 x rank |
               route u8 | blob-len u64 | blob |
    CRC32 u32 (over everything after the magic)
"""

from __future__ import annotations

import fnmatch
import struct
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import ebcodec
from .ebcodec import CodecSpec, ErrorBound, LossyBlob
from .errors import (
    BadMagic,
    ChecksumMismatch,
    CorruptPayload,
    FedzipError,
    TruncatedFile,
)
from .lossless import LosslessSpec, lossless_compress, lossless_decompress
from .tensor_store import (
    _CODE_DTYPE,
    _DTYPE_CODE,
    StateDict,
    TensorRecord,
    _Reader,
    numpy_dtype,
)

MAGIC = b"FSZU"
VERSION = 1

ROUTE_LOSSLESS = 0
ROUTE_LOSSY = 1

_BOUND_MODE_CODE = {"absolute": 0, "relative": 1}
_BOUND_MODE_NAME = {v: k for k, v in _BOUND_MODE_CODE.items()}

_SPEC_HEADER = struct.Struct("<BBdII")


@dataclass(frozen=True)
class RoutingRule:
    """Which entries get the lossy treatment.

    An entry routes lossy only when its name contains `name_marker`, it
    holds more than `threshold` finite f32 elements, and no pattern in
    `force_lossless` matches the name (fnmatch syntax).
    """

    name_marker: str = "weight"
    threshold: int = 1024
    force_lossless: tuple[str, ...] = ()

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")
        object.__setattr__(self, "force_lossless", tuple(self.force_lossless))


@dataclass
class CompressedEntry:
    name: str
    shape: tuple[int, ...]
    dtype: str
    route: str  # "lossy" or "lossless"
    blob: bytes


@dataclass
class CompressedUpdate:
    """A fully serialized client update plus its size accounting."""

    entries: list[CompressedEntry]
    codec_spec: CodecSpec
    original_bytes: int
    compressed_bytes: int

    @property
    def ratio(self) -> float:
        return self.original_bytes / self.compressed_bytes if self.compressed_bytes else 0.0

    def to_bytes(self) -> bytes:
        return update_to_bytes(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompressedUpdate):
            return NotImplemented
        return (
            self.entries == other.entries
            and self.codec_spec == other.codec_spec
            and self.original_bytes == other.original_bytes
            and self.compressed_bytes == other.compressed_bytes
        )


@dataclass
class EntryBench:
    name: str
    route: str
    raw_bytes: int
    blob_bytes: int
    eps_abs: float
    max_abs_error: float


@dataclass
class PipelineBench:
    """Timings and sizes for one state dict through the pipeline."""

    t_c: float
    t_d: float
    s_bytes: int
    s_prime_bytes: int
    entries: list[EntryBench]

    @property
    def ratio(self) -> float:
        return self.s_bytes / self.s_prime_bytes if self.s_prime_bytes else 0.0


def _routes_lossy(rec: TensorRecord, rule: RoutingRule) -> bool:
    if rule.name_marker not in rec.name:
        return False
    if rec.element_count <= rule.threshold:
        return False
    if rec.dtype != "f32":
        return False
    if any(fnmatch.fnmatch(rec.name, pat) for pat in rule.force_lossless):
        return False
    # non-finite values make an error bound meaningless; keep them exact
    return bool(np.isfinite(rec.data).all())


def partition(state: StateDict, rule: RoutingRule = RoutingRule()):
    """Split entry names into (lossy, lossless) lists, covering all entries."""
    lossy, lossless = [], []
    for rec in state:
        (lossy if _routes_lossy(rec, rule) else lossless).append(rec.name)
    return lossy, lossless


def compress_update(
    state: StateDict,
    spec: CodecSpec,
    rule: RoutingRule = RoutingRule(),
    lossless_spec: LosslessSpec = LosslessSpec(),
) -> CompressedUpdate:
    """Run the full per-entry routing and return the framed update.

    Relative bounds resolve per tensor, over that tensor's own range.
    """
    lossy_names = set(partition(state, rule)[0])
    entries = []
    for rec in state:
        try:
            if rec.name in lossy_names:
                blob = ebcodec.compress(rec.data, spec).to_bytes()
                route = "lossy"
            else:
                blob = lossless_compress(rec.data.tobytes(), lossless_spec)
                route = "lossless"
        except FedzipError as exc:
            raise type(exc)(f"entry {rec.name!r}: {exc}") from exc
        entries.append(CompressedEntry(rec.name, rec.shape, rec.dtype, route, blob))
    update = CompressedUpdate(
        entries=entries,
        codec_spec=spec,
        original_bytes=state.payload_nbytes(),
        compressed_bytes=0,
    )
    update.compressed_bytes = len(update_to_bytes(update))
    return update


def update_to_bytes(update: CompressedUpdate) -> bytes:
    spec = update.codec_spec
    parts = [
        struct.pack("<H", VERSION),
        _SPEC_HEADER.pack(
            ebcodec.codec_wire_id(spec.codec_id),
            _BOUND_MODE_CODE[spec.bound.mode],
            spec.bound.epsilon,
            spec.block_size,
            spec.quant_radius,
        ),
        struct.pack("<I", len(update.entries)),
    ]
    for ent in update.entries:
        name = ent.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", _DTYPE_CODE[ent.dtype], len(ent.shape)))
        for dim in ent.shape:
            parts.append(struct.pack("<Q", dim))
        route = ROUTE_LOSSY if ent.route == "lossy" else ROUTE_LOSSLESS
        parts.append(struct.pack("<BQ", route, len(ent.blob)))
        parts.append(ent.blob)
    body = b"".join(parts)
    return MAGIC + body + struct.pack("<I", zlib.crc32(body))


def parse_update(data: bytes) -> CompressedUpdate:
    """Parse FSZU bytes without decoding any blobs."""
    if len(data) < len(MAGIC):
        raise TruncatedFile("shorter than magic")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < len(MAGIC) + 4:
        raise TruncatedFile("missing CRC32 trailer")
    body, (stored_crc,) = data[len(MAGIC) : -4], struct.unpack("<I", data[-4:])
    rd = _Reader(body)
    (version,) = rd.unpack("<H", "version")
    if version != VERSION:
        raise CorruptPayload(f"unsupported update version {version}")
    wire_id, mode_code, epsilon, block_size, quant_radius = rd.unpack(
        "<BBdII", "codec spec"
    )
    if mode_code not in _BOUND_MODE_NAME:
        raise CorruptPayload(f"unknown bound mode {mode_code}")
    spec = CodecSpec(
        codec_id=ebcodec.codec_name_for_id(wire_id),
        bound=ErrorBound(_BOUND_MODE_NAME[mode_code], epsilon),
        block_size=block_size,
        quant_radius=quant_radius,
    )
    (count,) = rd.unpack("<I", "entry count")
    entries = []
    original = 0
    for _ in range(count):
        (name_len,) = rd.unpack("<H", "name length")
        name = rd.take(name_len, "name").decode("utf-8")
        dtype_code, rank = rd.unpack("<BB", "dtype/rank")
        if dtype_code not in _CODE_DTYPE:
            raise CorruptPayload(f"{name}: unknown dtype code {dtype_code}")
        dtype = _CODE_DTYPE[dtype_code]
        shape = tuple(rd.unpack(f"<{rank}Q", "dims")) if rank else ()
        route_code, blob_len = rd.unpack("<BQ", "route/blob length")
        if route_code not in (ROUTE_LOSSY, ROUTE_LOSSLESS):
            raise CorruptPayload(f"{name}: unknown route {route_code}")
        blob = rd.take(blob_len, "blob")
        route = "lossy" if route_code == ROUTE_LOSSY else "lossless"
        entries.append(CompressedEntry(name, shape, dtype, route, blob))
        n_elem = int(np.prod(shape, dtype=np.int64)) if shape else 1
        original += n_elem * numpy_dtype(dtype).itemsize
    if rd.remaining:
        raise CorruptPayload(f"{rd.remaining} trailing bytes after last entry")
    if zlib.crc32(body) != stored_crc:
        raise ChecksumMismatch("FSZU update CRC32 mismatch")
    return CompressedUpdate(entries, spec, original, len(data))


def decompress_update(data: bytes) -> StateDict:
    """Reconstruct the state dict from FSZU bytes.

    Lossless entries come back bit-exact; lossy entries stay within the
    per-tensor bound recorded in their blobs.
    """
    update = parse_update(data)
    records = []
    for ent in update.entries:
        try:
            if ent.route == "lossy":
                values = ebcodec.decompress(LossyBlob.from_bytes(ent.blob))
            else:
                raw = lossless_decompress(ent.blob)
                values = np.frombuffer(raw, dtype=numpy_dtype(ent.dtype))
        except FedzipError as exc:
            raise type(exc)(f"entry {ent.name!r}: {exc}") from exc
        records.append(TensorRecord(ent.name, ent.shape, ent.dtype, values))
    return StateDict(records)


def measure_pipeline(
    state: StateDict,
    spec: CodecSpec,
    rule: RoutingRule = RoutingRule(),
    reps: int = 3,
) -> PipelineBench:
    """Median compress/decompress timings plus a per-entry breakdown."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    t_c, t_d = [], []
    update = None
    restored = None
    for _ in range(reps):
        t0 = time.perf_counter()
        update = compress_update(state, spec, rule)
        data = update.to_bytes()
        t1 = time.perf_counter()
        restored = decompress_update(data)
        t2 = time.perf_counter()
        t_c.append(t1 - t0)
        t_d.append(t2 - t1)
    entries = []
    for ent in update.entries:
        rec = state[ent.name]
        back = restored[ent.name]
        err = 0.0
        eps = 0.0
        if ent.route == "lossy":
            eps = LossyBlob.from_bytes(ent.blob).eps_abs
            err = float(
                np.abs(
                    rec.data.astype(np.float64) - back.data.astype(np.float64)
                ).max()
            )
        entries.append(
            EntryBench(ent.name, ent.route, rec.nbytes, len(ent.blob), eps, err)
        )
    return PipelineBench(
        t_c=float(np.median(t_c)),
        t_d=float(np.median(t_d)),
        s_bytes=update.original_bytes,
        s_prime_bytes=update.compressed_bytes,
        entries=entries,
    )
