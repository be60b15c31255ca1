"""Error-bounded lossy codecs over flat f32 arrays.

Two built-ins share one interface and one guarantee: every reconstructed
value lies within eps_abs of its original.

* predict_quantize: each element is predicted by the previously
  reconstructed value, the residual is quantized to a code of bin width
  2*eps_abs, codes are Huffman-coded and then DEFLATE-packed, and
  out-of-range residuals fall back to exact 32-bit literals.
* const_block_truncate: fixed-size blocks are stored either as a single
  midpoint value (when the block's spread fits the bound) or with
  sign + exponent + just enough mantissa bits to honor the bound.

Blob frame layout (little-endian):

    codec_id u8 | eps_abs f64 | element_count u64 |
    value_min f64 | value_max f64 | payload-len u64 | payload | CRC32 u32
"""

from __future__ import annotations

import math
import struct
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import huffman
from .errors import (
    ChecksumMismatch,
    CorruptPayload,
    CorruptStream,
    EmptyInput,
    NonFiniteInput,
    TruncatedFile,
)
from .lossless import LosslessSpec, lossless_compress, lossless_decompress

PQ = "predict_quantize"
CBT = "const_block_truncate"

_PQ_ID = 1
_CBT_ID = 2

# payload modes for the prediction codec
_MODE_CODES = 0      # huffman-coded quantization codes + literal list
_MODE_CONSTANT = 1   # single value replicated element_count times
_MODE_VERBATIM = 2   # exact literals only (zero-bound fallback)

_BLOB_HEADER = struct.Struct("<BdQddQ")

# code stream is DEFLATE-packed after Huffman coding
_CODE_STREAM_SPEC = LosslessSpec("deflate_class", 6)


@dataclass(frozen=True)
class ErrorBound:
    """Pointwise error budget, absolute or relative to the value range."""

    mode: str = "relative"
    epsilon: float = 1e-2

    def __post_init__(self):
        if self.mode not in ("absolute", "relative"):
            raise ValueError(f"unknown bound mode {self.mode!r}")
        if not (self.epsilon >= 0):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.mode == "relative" and self.epsilon > 1:
            raise ValueError(f"relative epsilon must be <= 1, got {self.epsilon}")


@dataclass(frozen=True)
class CodecSpec:
    """A lossy codec choice plus its tuning knobs."""

    codec_id: str = PQ
    bound: ErrorBound = field(default_factory=ErrorBound)
    block_size: int = 256
    quant_radius: int = 32768

    def __post_init__(self):
        if self.block_size < 8:
            raise ValueError(f"block_size must be >= 8, got {self.block_size}")
        if self.quant_radius < 2:
            raise ValueError(f"quant_radius must be >= 2, got {self.quant_radius}")

    def with_epsilon(self, epsilon: float) -> "CodecSpec":
        return replace(self, bound=replace(self.bound, epsilon=epsilon))


@dataclass
class LossyBlob:
    """Self-contained compressed form of one flat f32 array."""

    codec_id: str
    eps_abs: float
    element_count: int
    value_min: float
    value_max: float
    payload: bytes

    def to_bytes(self) -> bytes:
        body = _BLOB_HEADER.pack(
            codec_wire_id(self.codec_id),
            self.eps_abs,
            self.element_count,
            self.value_min,
            self.value_max,
            len(self.payload),
        ) + self.payload
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "LossyBlob":
        if len(data) < _BLOB_HEADER.size + 4:
            raise TruncatedFile(f"lossy blob of {len(data)} bytes is too short")
        body, (stored_crc,) = data[:-4], struct.unpack("<I", data[-4:])
        wire_id, eps_abs, count, vmin, vmax, plen = _BLOB_HEADER.unpack(
            body[: _BLOB_HEADER.size]
        )
        payload = body[_BLOB_HEADER.size :]
        if len(payload) != plen:
            raise TruncatedFile(
                f"lossy blob declares {plen} payload bytes, holds {len(payload)}"
            )
        if zlib.crc32(body) != stored_crc:
            raise ChecksumMismatch("lossy blob CRC32 mismatch")
        return cls(codec_name_for_id(wire_id), eps_abs, count, vmin, vmax, payload)


@dataclass
class CodecBenchRecord:
    """One (codec, epsilon) measurement: timings, ratio, error stats."""

    codec_id: str
    epsilon: float
    compress_seconds: float
    decompress_seconds: float
    ratio: float
    max_abs_error: float
    mean_abs_error: float


def _as_f32(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32).reshape(-1)
    return arr


def _check_finite(arr: np.ndarray) -> None:
    if arr.size and not np.isfinite(arr).all():
        raise NonFiniteInput("lossy codecs require finite values")


def resolve_abs_bound(bound: ErrorBound, values) -> float:
    """Absolute bound actually enforced for this array.

    Relative bounds scale epsilon by the array's dynamic range, so a
    constant array resolves to an exact (zero) budget.
    """
    arr = _as_f32(values)
    if arr.size == 0:
        raise EmptyInput("cannot resolve a bound over an empty array")
    _check_finite(arr)
    if bound.mode == "absolute":
        return float(bound.epsilon)
    return float(bound.epsilon) * (float(arr.max()) - float(arr.min()))


# ---------------------------------------------------------------------------
# prediction + quantization codec
# ---------------------------------------------------------------------------


def compress_pq(values, spec: CodecSpec) -> LossyBlob:
    """Compress with the previous-value predictor and residual quantization."""
    if spec.codec_id != PQ:
        raise ValueError(f"spec targets {spec.codec_id!r}, not {PQ!r}")
    arr = _as_f32(values)
    _check_finite(arr)
    n = arr.size
    if n == 0:
        return LossyBlob(PQ, 0.0, 0, 0.0, 0.0, b"")
    eps_abs = resolve_abs_bound(spec.bound, arr)
    vmin = float(arr.min())
    vmax = float(arr.max())
    if vmin == vmax:
        # exact: one literal replicated element_count times
        payload = struct.pack("<B", _MODE_CONSTANT) + arr[:1].tobytes()
        return LossyBlob(PQ, eps_abs, n, vmin, vmax, payload)
    if eps_abs == 0.0:
        # zero budget on non-constant data: store every value exactly
        payload = struct.pack("<B", _MODE_VERBATIM) + arr.tobytes()
        return LossyBlob(PQ, 0.0, n, vmin, vmax, payload)

    radius = spec.quant_radius
    two_eps = 2.0 * eps_abs
    xs = arr.astype(np.float64).tolist()
    codes = np.empty(n, dtype=np.uint32)
    recon = np.empty(n, dtype=np.float32)
    literal_idx = []
    prev = 0.0
    offset = radius + 1  # symbol 0 marks an unpredictable literal
    with np.errstate(over="ignore"):  # f32 overflow lands in the literal path
        for i, x in enumerate(xs):
            t = (x - prev) / two_eps
            if math.isfinite(t) and -radius - 1 < t < radius + 1:
                q = round(t)
                if -radius <= q <= radius:
                    recon[i] = prev + two_eps * q
                    c = recon.item(i)
                    # f32 rounding can nudge past the bound; fall back if so
                    if abs(x - c) <= eps_abs:
                        codes[i] = q + offset
                        prev = c
                        continue
            codes[i] = 0
            recon[i] = x
            literal_idx.append(i)
            prev = recon.item(i)

    literals = arr[literal_idx] if literal_idx else np.empty(0, dtype=np.float32)
    lengths = huffman.code_lengths(codes)
    bitstream, nbits = huffman.encode(codes, lengths)
    code_block = huffman.pack_table(lengths) + struct.pack("<Q", nbits) + bitstream
    code_frame = lossless_compress(code_block, _CODE_STREAM_SPEC)
    payload = b"".join(
        [
            struct.pack("<BIQ", _MODE_CODES, radius, len(literals)),
            literals.tobytes(),
            struct.pack("<Q", len(code_frame)),
            code_frame,
        ]
    )
    return LossyBlob(PQ, eps_abs, n, vmin, vmax, payload)


def decompress_pq(blob: LossyBlob) -> np.ndarray:
    """Invert compress_pq. Pointwise error stays within blob.eps_abs."""
    if blob.codec_id != PQ:
        raise ValueError(f"blob was produced by {blob.codec_id!r}")
    n = blob.element_count
    if n == 0:
        if blob.payload:
            raise CorruptPayload("empty blob carries payload bytes")
        return np.empty(0, dtype=np.float32)
    buf = blob.payload
    if len(buf) < 1:
        raise CorruptPayload("missing payload mode byte")
    mode = buf[0]
    if mode == _MODE_CONSTANT:
        if len(buf) != 5:
            raise CorruptPayload("constant payload must hold exactly one value")
        value = np.frombuffer(buf[1:], dtype=np.float32)[0]
        return np.full(n, value, dtype=np.float32)
    if mode == _MODE_VERBATIM:
        if len(buf) != 1 + 4 * n:
            raise CorruptPayload("verbatim payload length mismatch")
        return np.frombuffer(buf[1:], dtype=np.float32).copy()
    if mode != _MODE_CODES:
        raise CorruptPayload(f"unknown payload mode {mode}")

    head = struct.Struct("<BIQ")
    if len(buf) < head.size:
        raise CorruptPayload("code payload header truncated")
    _, radius, lit_count = head.unpack_from(buf, 0)
    pos = head.size
    lit_bytes = 4 * lit_count
    if len(buf) < pos + lit_bytes + 8:
        raise CorruptPayload("literal section truncated")
    literals = np.frombuffer(buf[pos : pos + lit_bytes], dtype=np.float32)
    pos += lit_bytes
    (frame_len,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    if len(buf) != pos + frame_len:
        raise CorruptPayload("code stream length mismatch")
    try:
        code_block = lossless_decompress(buf[pos:])
    except CorruptStream as exc:
        raise CorruptPayload(f"code stream unreadable: {exc}") from exc
    lengths, off = huffman.unpack_table(code_block, 0)
    if len(code_block) < off + 8:
        raise CorruptPayload("bit count truncated")
    (nbits,) = struct.unpack_from("<Q", code_block, off)
    codes = huffman.decode(code_block[off + 8 :], nbits, lengths, n)

    two_eps = 2.0 * blob.eps_abs
    offset = radius + 1
    out = np.empty(n, dtype=np.float32)
    lit64 = literals.astype(np.float64).tolist()
    li = 0
    prev = 0.0
    for i, sym in enumerate(codes.tolist()):
        if sym == 0:
            if li >= len(lit64):
                raise CorruptPayload("more literal markers than literals")
            out[i] = lit64[li]
            prev = lit64[li]
            li += 1
        else:
            out[i] = prev + two_eps * (sym - offset)
            prev = out.item(i)
    if li != len(lit64):
        raise CorruptPayload(f"{len(lit64) - li} literals left undecoded")
    return out


# ---------------------------------------------------------------------------
# constant-block / bit-truncation codec
# ---------------------------------------------------------------------------

_FLAG_CONSTANT = 0
_FLAG_TRUNCATED = 1


def _pack_codes(codes: np.ndarray, width: int) -> bytes:
    arr = codes.astype(np.uint64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    bits = ((arr[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def _unpack_codes(buf: bytes, count: int, width: int) -> np.ndarray:
    total = count * width
    if len(buf) * 8 < total:
        raise CorruptPayload("truncated bit-packed block")
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=total)
    weights = np.left_shift(
        np.uint64(1), np.arange(width - 1, -1, -1, dtype=np.uint64)
    )
    vals = (bits.reshape(count, width).astype(np.uint64) * weights).sum(axis=1)
    return vals.astype(np.uint32)


def _mantissa_bits_for(block_absmax: float, eps_abs: float) -> int:
    if eps_abs <= 0.0:
        return 23
    if block_absmax == 0.0:
        return 0
    _, exp = math.frexp(block_absmax)  # absmax in [2**(exp-1), 2**exp)
    need = (exp - 1) - math.log2(eps_abs)
    return min(23, max(0, math.ceil(need)))


def compress_cbt(values, spec: CodecSpec) -> LossyBlob:
    """Compress with constant-block detection and mantissa truncation."""
    if spec.codec_id != CBT:
        raise ValueError(f"spec targets {spec.codec_id!r}, not {CBT!r}")
    arr = _as_f32(values)
    _check_finite(arr)
    n = arr.size
    if n == 0:
        return LossyBlob(CBT, 0.0, 0, 0.0, 0.0, b"")
    eps_abs = resolve_abs_bound(spec.bound, arr)
    v64 = arr.astype(np.float64)
    parts = [struct.pack("<I", spec.block_size)]
    for start in range(0, n, spec.block_size):
        block = arr[start : start + spec.block_size]
        block64 = v64[start : start + spec.block_size]
        bmin = float(block64.min())
        bmax = float(block64.max())
        if bmax - bmin <= 2.0 * eps_abs:
            mid = np.float32((bmin + bmax) / 2.0)
            m64 = float(mid)
            if max(bmax - m64, m64 - bmin) <= eps_abs:
                parts.append(struct.pack("<B", _FLAG_CONSTANT) + mid.tobytes())
                continue
        m = _mantissa_bits_for(float(np.abs(block64).max()), eps_abs)
        while True:
            u = block.view(np.uint32)
            shift = np.uint32(23 - m)
            codes = (u >> shift).astype(np.uint32)
            recon = (codes << shift).view(np.float32)
            if m >= 23 or float(np.abs(block64 - recon.astype(np.float64)).max()) <= eps_abs:
                break
            m += 1
        parts.append(struct.pack("<BB", _FLAG_TRUNCATED, m))
        parts.append(_pack_codes(codes, 9 + m))
    vmin = float(arr.min())
    vmax = float(arr.max())
    return LossyBlob(CBT, eps_abs, n, vmin, vmax, b"".join(parts))


def decompress_cbt(blob: LossyBlob) -> np.ndarray:
    if blob.codec_id != CBT:
        raise ValueError(f"blob was produced by {blob.codec_id!r}")
    n = blob.element_count
    if n == 0:
        if blob.payload:
            raise CorruptPayload("empty blob carries payload bytes")
        return np.empty(0, dtype=np.float32)
    buf = blob.payload
    if len(buf) < 4:
        raise CorruptPayload("missing block size")
    (block_size,) = struct.unpack_from("<I", buf, 0)
    if block_size < 1:
        raise CorruptPayload("invalid block size")
    pos = 4
    out = np.empty(n, dtype=np.float32)
    for start in range(0, n, block_size):
        blen = min(block_size, n - start)
        if pos >= len(buf):
            raise CorruptPayload("payload ended before final block")
        flag = buf[pos]
        pos += 1
        if flag == _FLAG_CONSTANT:
            if pos + 4 > len(buf):
                raise CorruptPayload("constant block value truncated")
            out[start : start + blen] = np.frombuffer(buf[pos : pos + 4], np.float32)[0]
            pos += 4
        elif flag == _FLAG_TRUNCATED:
            if pos + 1 > len(buf):
                raise CorruptPayload("mantissa width truncated")
            m = buf[pos]
            pos += 1
            if m > 23:
                raise CorruptPayload(f"invalid mantissa width {m}")
            width = 9 + m
            nbytes = (blen * width + 7) // 8
            codes = _unpack_codes(buf[pos : pos + nbytes], blen, width)
            pos += nbytes
            out[start : start + blen] = (codes << np.uint32(23 - m)).view(np.float32)
        else:
            raise CorruptPayload(f"unknown block flag {flag}")
    if pos != len(buf):
        raise CorruptPayload(f"{len(buf) - pos} trailing payload bytes")
    return out


# ---------------------------------------------------------------------------
# codec registry and benchmarking
# ---------------------------------------------------------------------------

# name -> (wire id, compress(values, spec) -> LossyBlob, decompress(blob) -> values)
_CODECS: dict[str, tuple[int, object, object]] = {
    PQ: (_PQ_ID, compress_pq, decompress_pq),
    CBT: (_CBT_ID, compress_cbt, decompress_cbt),
}
_NAMES_BY_ID = {_PQ_ID: PQ, _CBT_ID: CBT}


def register_lossy_codec(name: str, wire_id: int, compress, decompress) -> None:
    """Register an external error-bounded codec.

    The codec must honor the pointwise bound contract: after a round
    trip, |x - x_hat| <= eps_abs for every element.
    """
    if name in _CODECS or wire_id in _NAMES_BY_ID:
        raise ValueError(f"lossy codec {name!r}/{wire_id} already registered")
    if not 0 <= wire_id <= 255:
        raise ValueError("wire id must fit in a byte")
    _CODECS[name] = (wire_id, compress, decompress)
    _NAMES_BY_ID[wire_id] = name


def codec_wire_id(name: str) -> int:
    try:
        return _CODECS[name][0]
    except KeyError:
        raise ValueError(f"unknown lossy codec {name!r}") from None


def codec_name_for_id(wire_id: int) -> str:
    try:
        return _NAMES_BY_ID[wire_id]
    except KeyError:
        raise CorruptPayload(f"unknown lossy codec id {wire_id}") from None


def compress(values, spec: CodecSpec) -> LossyBlob:
    """Dispatch to the codec named by spec.codec_id."""
    _, fn, _ = _CODECS.get(spec.codec_id, (None, None, None))
    if fn is None:
        raise ValueError(f"unknown lossy codec {spec.codec_id!r}")
    return fn(values, spec)


def decompress(blob: LossyBlob) -> np.ndarray:
    _, _, fn = _CODECS.get(blob.codec_id, (None, None, None))
    if fn is None:
        raise ValueError(f"unknown lossy codec {blob.codec_id!r}")
    return fn(blob)


def bench_codec(values, spec: CodecSpec, repetitions: int) -> CodecBenchRecord:
    """Median wall-clock codec timings plus ratio and error stats."""
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    arr = _as_f32(values)
    t_c, t_d = [], []
    blob = None
    out = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        blob = compress(arr, spec)
        t1 = time.perf_counter()
        out = decompress(blob)
        t2 = time.perf_counter()
        t_c.append(t1 - t0)
        t_d.append(t2 - t1)
    errors = np.abs(arr.astype(np.float64) - out.astype(np.float64))
    max_err = float(errors.max()) if arr.size else 0.0
    if max_err > blob.eps_abs:
        raise AssertionError(
            f"bound violated: max error {max_err} > eps_abs {blob.eps_abs}"
        )
    compressed = len(blob.to_bytes())
    return CodecBenchRecord(
        codec_id=spec.codec_id,
        epsilon=spec.bound.epsilon,
        compress_seconds=float(np.median(t_c)),
        decompress_seconds=float(np.median(t_d)),
        ratio=arr.nbytes / compressed if compressed else 0.0,
        max_abs_error=max_err,
        mean_abs_error=float(errors.mean()) if arr.size else 0.0,
    )
