"""In-memory model state representation and the FSZT checkpoint format.

A model state is an ordered collection of named flat tensors. The on-disk
FSZT layout is:

    magic "FSZT" | version u16 | entry-count u32 |
    per entry: name-len u16 | name UTF-8 | dtype u8 | rank u8 |
               dims u64 x rank | payload bytes |
    CRC32 (u32, over everything after the magic)

All multi-byte values are little-endian.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    CorruptPayload,
    DuplicateName,
    ShapeMismatch,
    TruncatedFile,
    WrongDtype,
)

MAGIC = b"FSZT"
VERSION = 1

DTYPES = ("f32", "f64", "i64", "u8")

_DTYPE_CODE = {"f32": 1, "f64": 2, "i64": 3, "u8": 4}
_CODE_DTYPE = {v: k for k, v in _DTYPE_CODE.items()}
_DTYPE_NP = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i64": np.dtype("<i8"),
    "u8": np.dtype("u1"),
}
_NP_DTYPE = {v: k for k, v in _DTYPE_NP.items()}


def numpy_dtype(dtype: str) -> np.dtype:
    """Little-endian numpy dtype for one of the supported dtype names."""
    try:
        return _DTYPE_NP[dtype]
    except KeyError:
        raise WrongDtype(f"unsupported dtype {dtype!r}") from None


@dataclass(eq=False)
class TensorRecord:
    """A named flat tensor: row-major data plus its logical shape."""

    name: str
    shape: tuple[int, ...]
    dtype: str
    data: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValueError("tensor name must be non-empty")
        self.shape = tuple(int(d) for d in self.shape)
        if any(d < 1 for d in self.shape):
            raise ValueError(f"{self.name}: shape entries must be positive")
        if self.dtype not in _DTYPE_NP:
            raise WrongDtype(f"{self.name}: unsupported dtype {self.dtype!r}")
        arr = np.ascontiguousarray(self.data, dtype=_DTYPE_NP[self.dtype]).reshape(-1)
        expected = int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1
        if arr.size != expected:
            raise ShapeMismatch(
                f"{self.name}: shape {self.shape} needs {expected} values, got {arr.size}"
            )
        arr = arr.copy()
        arr.flags.writeable = False  # records are shared read-only
        self.data = arr

    @classmethod
    def from_array(cls, name: str, array: np.ndarray) -> "TensorRecord":
        arr = np.asarray(array)
        key = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        if key not in _NP_DTYPE:
            # map common aliases onto the supported set
            if np.issubdtype(arr.dtype, np.floating):
                key = _DTYPE_NP["f32"] if arr.dtype.itemsize <= 4 else _DTYPE_NP["f64"]
            elif np.issubdtype(arr.dtype, np.signedinteger):
                key = _DTYPE_NP["i64"]
            elif np.issubdtype(arr.dtype, np.unsignedinteger) and arr.dtype.itemsize == 1:
                key = _DTYPE_NP["u8"]
            else:
                raise WrongDtype(f"{name}: no supported dtype for {arr.dtype}")
        dtype = _NP_DTYPE[np.dtype(key)]
        return cls(name, arr.shape, dtype, arr.astype(_DTYPE_NP[dtype]).reshape(-1))

    @property
    def element_count(self) -> int:
        return int(self.data.size)

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.dtype == other.dtype
            and self.data.tobytes() == other.data.tobytes()
        )

    def __repr__(self) -> str:
        return f"TensorRecord({self.name!r}, shape={self.shape}, dtype={self.dtype})"


class StateDict:
    """Ordered, immutable collection of uniquely named TensorRecords."""

    def __init__(self, entries=()):
        entries = tuple(entries)
        index = {}
        for rec in entries:
            if not isinstance(rec, TensorRecord):
                raise TypeError(f"expected TensorRecord, got {type(rec).__name__}")
            if rec.name in index:
                raise DuplicateName(rec.name)
            index[rec.name] = rec
        self._entries = entries
        self._index = index

    @classmethod
    def from_arrays(cls, arrays) -> "StateDict":
        """Build from an ordered mapping of name -> ndarray."""
        return cls(TensorRecord.from_array(n, a) for n, a in arrays.items())

    @property
    def entries(self) -> tuple:
        return self._entries

    def names(self) -> list[str]:
        return [rec.name for rec in self._entries]

    def payload_nbytes(self) -> int:
        """Total raw tensor bytes, excluding any framing."""
        return sum(rec.nbytes for rec in self._entries)

    def element_count(self) -> int:
        return sum(rec.element_count for rec in self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> TensorRecord:
        return self._index[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateDict):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        return f"StateDict({len(self._entries)} entries)"


def flatten(record: TensorRecord) -> np.ndarray:
    """Row-major 1D view of an f32 tensor's data.

    Only f32 tensors are ever routed to lossy codecs, so other dtypes
    are rejected here rather than silently converted.
    """
    if record.dtype != "f32":
        raise WrongDtype(f"{record.name}: flatten expects f32, got {record.dtype}")
    return record.data


def state_to_bytes(state: StateDict) -> bytes:
    """Serialize to FSZT bytes. Deterministic for a given StateDict."""
    parts = [struct.pack("<HI", VERSION, len(state))]
    for rec in state:
        name = rec.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", _DTYPE_CODE[rec.dtype], len(rec.shape)))
        for dim in rec.shape:
            parts.append(struct.pack("<Q", dim))
        parts.append(rec.data.tobytes())
    body = b"".join(parts)
    return MAGIC + body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"stream ended inside {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos


def state_from_bytes(data: bytes) -> StateDict:
    """Parse FSZT bytes back into a StateDict."""
    if len(data) < len(MAGIC):
        raise TruncatedFile("shorter than magic")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < len(MAGIC) + 4:
        raise TruncatedFile("missing CRC32 trailer")
    body, crc_bytes = data[len(MAGIC) : -4], data[-4:]
    rd = _Reader(body)
    version, count = rd.unpack("<HI", "header")
    if version != VERSION:
        raise CorruptPayload(f"unsupported checkpoint version {version}")
    entries = []
    for _ in range(count):
        (name_len,) = rd.unpack("<H", "name length")
        name = rd.take(name_len, "name").decode("utf-8")
        dtype_code, rank = rd.unpack("<BB", "dtype/rank")
        if dtype_code not in _CODE_DTYPE:
            raise CorruptPayload(f"{name}: unknown dtype code {dtype_code}")
        dtype = _CODE_DTYPE[dtype_code]
        shape = tuple(rd.unpack(f"<{rank}Q", "dims")) if rank else ()
        n_elem = int(np.prod(shape, dtype=np.int64)) if shape else 1
        need = n_elem * _DTYPE_NP[dtype].itemsize
        if rd.remaining < need:
            # declared length does not match what the payload holds
            raise ShapeMismatch(
                f"{name}: shape {shape} declares {need} payload bytes, "
                f"{rd.remaining} available"
            )
        payload = rd.take(need, "payload")
        arr = np.frombuffer(payload, dtype=_DTYPE_NP[dtype])
        entries.append(TensorRecord(name, shape, dtype, arr))
    if rd.remaining:
        raise CorruptPayload(f"{rd.remaining} trailing bytes after last entry")
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) != stored_crc:
        raise ChecksumMismatch("FSZT checkpoint CRC32 mismatch")
    return StateDict(entries)


def save_checkpoint(state: StateDict, path) -> None:
    with open(path, "wb") as fh:
        fh.write(state_to_bytes(state))


def load_checkpoint(path) -> StateDict:
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())
