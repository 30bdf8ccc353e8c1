"""Byte-level helpers: varints, bit packing and canonical Huffman coding of id gaps."""
from __future__ import annotations

import heapq
from collections import Counter

import numpy as np


def write_varint(out: bytearray, v: int) -> None:
    if v < 0:
        raise ValueError("varint must be non-negative")
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def read_varint(buf, pos: int) -> tuple[int, int]:
    shift = 0
    v = 0
    while True:
        b = buf[pos]
        pos += 1
        v |= (b & 0x7F) << shift
        if not b & 0x80:
            return v, pos
        shift += 7


def zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def unzigzag(z: int) -> int:
    return (z >> 1) if not z & 1 else -((z + 1) >> 1)


def bit_width(max_value: int) -> int:
    return int(max_value).bit_length()


def pack_uints(values, width: int) -> bytes:
    """Fixed-width big-endian bit packing (MSB first)."""
    values = np.asarray(values, dtype=np.uint64)
    if width == 0 or len(values) == 0:
        return b""
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    bits = ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def unpack_uints(buf: bytes, n: int, width: int) -> np.ndarray:
    if width == 0 or n == 0:
        return np.zeros(n, dtype=np.uint64)
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: n * width].reshape(n, width)
    weights = np.uint64(1) << np.arange(width - 1, -1, -1, dtype=np.uint64)
    return (bits.astype(np.uint64) * weights[None, :]).sum(axis=1).astype(np.uint64)


def packed_size(n: int, width: int) -> int:
    return (n * width + 7) // 8


class HuffmanTable:
    """Canonical Huffman code over non-negative integer symbols.

    Only the (symbol, code length) pairs are stored; codes are reassigned in
    canonical order (by length, then symbol) when the table is rebuilt.
    """

    def __init__(self, lengths: dict[int, int]):
        self.lengths = dict(sorted(lengths.items()))
        order = sorted(self.lengths.items(), key=lambda kv: (kv[1], kv[0]))
        self.codes: dict[int, tuple[int, int]] = {}
        code = 0
        prev_len = 0
        for sym, length in order:
            code <<= length - prev_len
            self.codes[sym] = (code, length)
            code += 1
            prev_len = length
        self._decode = {(length, code): sym for sym, (code, length) in self.codes.items()}
        self.max_len = max(self.lengths.values(), default=0)

    @classmethod
    def from_symbols(cls, symbols) -> "HuffmanTable":
        freq = Counter(symbols)
        if not freq:
            return cls({})
        if len(freq) == 1:
            return cls({next(iter(freq)): 1})
        # heap entries: (weight, tiebreak, symbols in subtree)
        heap = [(w, s, [s]) for s, w in sorted(freq.items())]
        heapq.heapify(heap)
        depth = {s: 0 for s in freq}
        while len(heap) > 1:
            w1, t1, a = heapq.heappop(heap)
            w2, t2, b = heapq.heappop(heap)
            for s in a + b:
                depth[s] += 1
            heapq.heappush(heap, (w1 + w2, min(t1, t2), a + b))
        return cls(depth)

    def __eq__(self, other):
        return isinstance(other, HuffmanTable) and self.lengths == other.lengths

    def to_bytes(self) -> bytes:
        out = bytearray()
        write_varint(out, len(self.lengths))
        prev = 0
        for sym, length in self.lengths.items():
            write_varint(out, sym - prev)
            out.append(length)
            prev = sym
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf, pos: int = 0) -> tuple["HuffmanTable", int]:
        n, pos = read_varint(buf, pos)
        lengths = {}
        sym = 0
        for _ in range(n):
            d, pos = read_varint(buf, pos)
            sym += d
            lengths[sym] = buf[pos]
            pos += 1
        return cls(lengths), pos

    def encode(self, symbols) -> bytes:
        acc = 0
        nbits = 0
        for s in symbols:
            code, length = self.codes[s]
            acc = (acc << length) | code
            nbits += length
        if nbits == 0:
            return b""
        nbytes = (nbits + 7) // 8
        return (acc << (8 * nbytes - nbits)).to_bytes(nbytes, "big")

    def decode(self, buf, count: int, pos: int = 0) -> tuple[list[int], int]:
        """Decode ``count`` symbols from a byte-aligned block; returns (symbols, end)."""
        out = []
        if count == 0:
            return out, pos
        byte = pos
        bit = 0
        code = 0
        length = 0
        while len(out) < count:
            b = (buf[byte] >> (7 - bit)) & 1
            bit += 1
            if bit == 8:
                bit = 0
                byte += 1
            code = (code << 1) | b
            length += 1
            sym = self._decode.get((length, code))
            if sym is not None:
                out.append(sym)
                code = 0
                length = 0
            elif length > self.max_len:
                raise ValueError("corrupt Huffman stream")
        return out, byte + (1 if bit else 0)


def _check_ascending(ids) -> list[int]:
    ids = [int(i) for i in ids]
    if any(i < 0 for i in ids):
        raise ValueError("ids must be non-negative")
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise ValueError("ids must be strictly ascending")
    return ids


def gaps(ids) -> list[int]:
    ids = _check_ascending(ids)
    return [b - a for a, b in zip(ids, ids[1:])]


def encode_ids(ids) -> bytes:
    """Self-contained posting list: count, first id, gap table, Huffman-coded gaps."""
    ids = _check_ascending(ids)
    if not ids:
        return b""
    out = bytearray()
    write_varint(out, len(ids))
    write_varint(out, ids[0])
    if len(ids) > 1:
        g = gaps(ids)
        table = HuffmanTable.from_symbols(g)
        out += table.to_bytes()
        out += table.encode(g)
    return bytes(out)


def decode_ids(buf: bytes) -> list[int]:
    if not buf:
        return []
    n, pos = read_varint(buf, 0)
    first, pos = read_varint(buf, pos)
    ids = [first]
    if n > 1:
        table, pos = HuffmanTable.from_bytes(buf, pos)
        g, pos = table.decode(buf, n - 1, pos)
        for d in g:
            ids.append(ids[-1] + d)
    if pos != len(buf):
        raise ValueError("trailing bytes in posting list")
    return ids
