"""Canonical Huffman coding for unsigned integer symbol streams.

The table is serialized as (symbol, code length) pairs only; canonical
code assignment makes the bit patterns reproducible on both sides.
Bit order is MSB-first within each byte.
"""

from __future__ import annotations

import heapq
import struct

import numpy as np

from .errors import CorruptPayload


def code_lengths(symbols: np.ndarray) -> dict[int, int]:
    """Huffman code length per distinct symbol, deterministic tie-breaks."""
    if len(symbols) == 0:
        return {}
    counts = np.bincount(symbols)
    present = np.nonzero(counts)[0]
    if len(present) == 1:
        return {int(present[0]): 1}
    # heap of (weight, insertion order, node id); ties resolve by order
    heap = []
    parents = {}
    for order, sym in enumerate(present):
        node = int(sym)
        heap.append((int(counts[sym]), order, node))
    heapq.heapify(heap)
    next_id = -1  # internal nodes get negative ids
    order = len(present)
    while len(heap) > 1:
        w1, _, n1 = heapq.heappop(heap)
        w2, _, n2 = heapq.heappop(heap)
        parents[n1] = next_id
        parents[n2] = next_id
        heapq.heappush(heap, (w1 + w2, order, next_id))
        next_id -= 1
        order += 1
    lengths = {}
    for sym in present:
        depth = 0
        node = int(sym)
        while node in parents:
            node = parents[node]
            depth += 1
        lengths[int(sym)] = depth
    return lengths


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """Assign canonical codes: symbols ordered by (length, symbol)."""
    codes = {}
    code = 0
    prev_len = 0
    for sym, length in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= length - prev_len
        codes[sym] = (code, length)
        code += 1
        prev_len = length
    return codes


def pack_table(lengths: dict[int, int]) -> bytes:
    parts = [struct.pack("<I", len(lengths))]
    for sym in sorted(lengths):
        parts.append(struct.pack("<IB", sym, lengths[sym]))
    return b"".join(parts)


def unpack_table(buf: bytes, offset: int) -> tuple[dict[int, int], int]:
    if offset + 4 > len(buf):
        raise CorruptPayload("huffman table header truncated")
    (count,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    lengths = {}
    for _ in range(count):
        if offset + 5 > len(buf):
            raise CorruptPayload("huffman table truncated")
        sym, length = struct.unpack_from("<IB", buf, offset)
        offset += 5
        if length == 0 or sym in lengths:
            raise CorruptPayload("invalid huffman table entry")
        lengths[sym] = length
    return lengths, offset


def encode(symbols: np.ndarray, lengths: dict[int, int]) -> tuple[bytes, int]:
    """Encode symbols with the canonical codes for `lengths`.

    Returns (packed bytes, bit count).
    """
    if len(symbols) == 0:
        return b"", 0
    codes = canonical_codes(lengths)
    strs = {sym: format(code, f"0{length}b") for sym, (code, length) in codes.items()}
    try:
        bitstring = "".join(map(strs.__getitem__, symbols.tolist()))
    except KeyError as exc:
        raise ValueError(f"symbol {exc} missing from huffman table") from None
    nbits = len(bitstring)
    nbytes = (nbits + 7) // 8
    value = int(bitstring, 2) << (nbytes * 8 - nbits)  # pad on the right, MSB-first
    return value.to_bytes(nbytes, "big"), nbits


def decode(data: bytes, nbits: int, lengths: dict[int, int], count: int) -> np.ndarray:
    """Decode `count` symbols from an MSB-first bitstream."""
    out = np.empty(count, dtype=np.uint32)
    if count == 0:
        return out
    if not lengths:
        raise CorruptPayload("empty huffman table for non-empty stream")
    if nbits > len(data) * 8:
        raise CorruptPayload("huffman bitstream shorter than declared")
    table = {
        (length, code): sym for sym, (code, length) in canonical_codes(lengths).items()
    }
    max_len = max(lengths.values())
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=nbits)
    emitted = 0
    code = 0
    length = 0
    for bit in bits.tolist():
        code = (code << 1) | bit
        length += 1
        sym = table.get((length, code))
        if sym is not None:
            if emitted >= count:
                raise CorruptPayload("huffman stream decodes too many symbols")
            out[emitted] = sym
            emitted += 1
            code = 0
            length = 0
        elif length > max_len:
            raise CorruptPayload("invalid huffman code in stream")
    if emitted != count or length != 0:
        raise CorruptPayload(
            f"huffman stream ended after {emitted} of {count} symbols"
        )
    return out
