"""Sectioned binary container for summaries.

Layout: magic ``PPQT``, u16 format version, then eight sections in fixed order
(config, coefficients, partitions, codebook, assignments, cqc_codes,
checkpoints, index), each prefixed by its u32 byte length. Integers are
little-endian; floats are IEEE float64.

* config: UTF-8 JSON with sorted keys.
* coefficients: varint T, then per timestamp varint q and q*k floats.
* partitions: per timestamp varint q and the delta-coded partition ids; then
  per trajectory (ascending id, delta-coded) start, length, a bit width and the
  bit-packed partition positions.
* codebook: varint V and V*2 floats.
* assignments: per trajectory a bit width and bit-packed codeword indices.
* cqc_codes: the centre code, then per trajectory a varint byte count and the
  concatenated codes. Codes are leaves of a fixed quadtree, hence prefix-free.
* checkpoints: per period start the ids and their last k reconstructed points.
* index: the temporal index blob (empty when absent).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .codec import bit_width, pack_uints, packed_size, read_varint, unpack_uints, write_varint
from .core import Config, Summary, TrajectoryRecord
from .cqc import CoordinateQuadtree, CqcCode, GridSpec
from .index import TemporalIndex

MAGIC = b"PPQT"
VERSION = 1
SECTIONS = ("config", "coefficients", "partitions", "codebook", "assignments", "cqc_codes",
            "checkpoints", "index")
HEADER_SIZE = len(MAGIC) + 2


class FormatError(ValueError):
    pass


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _read_f64(buf, pos, n):
    a = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64)
    return a, pos + 8 * n


def tree_for(config: Config) -> CoordinateQuadtree:
    spec = GridSpec.from_params(config.eps1, config.g_s_units)
    return CoordinateQuadtree(spec.width, spec.height)


def _pack_codes(bits, levels) -> bytes:
    acc = 0
    n = 0
    for b, l in zip(bits, levels):
        acc = (acc << (2 * int(l))) | int(b)
        n += 2 * int(l)
    if n == 0:
        return b""
    nbytes = (n + 7) // 8
    return (acc << (8 * nbytes - n)).to_bytes(nbytes, "big")


def _unpack_codes(data: bytes, count: int, tree: CoordinateQuadtree):
    total = 8 * len(data)
    acc = int.from_bytes(data, "big") if data else 0
    pos = 0
    bits = np.zeros(count, dtype=np.uint32)
    levels = np.zeros(count, dtype=np.uint8)
    for i in range(count):
        node = tree.root
        code = 0
        lv = 0
        while not node.is_leaf:
            if pos + 2 > total:
                raise FormatError("truncated CQC stream")
            label = (acc >> (total - pos - 2)) & 3
            pos += 2
            node = node.children[label]
            if node is None:
                raise FormatError("CQC stream addresses a padding subspace")
            code = (code << 2) | label
            lv += 1
        bits[i] = code
        levels[i] = lv
    return bits, levels


def _section_config(s: Summary) -> bytes:
    return json.dumps(s.config.to_dict(), sort_keys=True).encode("utf-8")


def _section_coefficients(s: Summary) -> bytes:
    out = bytearray()
    write_varint(out, len(s.coefficients))
    for C in s.coefficients:
        write_varint(out, len(C))
        out += np.ascontiguousarray(C, dtype="<f4").tobytes()
    return bytes(out)


def _ids_delta(out: bytearray, ids):
    prev = 0
    for i in ids:
        write_varint(out, int(i) - prev)
        prev = int(i)


def _packed_column(out: bytearray, values):
    w = bit_width(int(values.max())) if len(values) else 0
    out.append(w)
    out += pack_uints(values, w)


def _read_packed_column(buf, pos, n):
    w = buf[pos]
    pos += 1
    size = packed_size(n, w)
    return unpack_uints(buf[pos: pos + size], n, w).astype(np.uint32), pos + size


def _section_partitions(s: Summary) -> bytes:
    out = bytearray()
    write_varint(out, len(s.partition_ids))
    for ids in s.partition_ids:
        write_varint(out, len(ids))
        _ids_delta(out, ids)
    tids = sorted(s.trajectories)
    write_varint(out, len(tids))
    _ids_delta(out, tids)
    for tid in tids:
        r = s.trajectories[tid]
        write_varint(out, r.start)
        write_varint(out, r.length)
        _packed_column(out, r.partition)
    return bytes(out)


def _section_codebook(s: Summary) -> bytes:
    out = bytearray()
    write_varint(out, len(s.codebook))
    out += _f64(s.codebook)
    return bytes(out)


def _section_assignments(s: Summary) -> bytes:
    out = bytearray()
    for tid in sorted(s.trajectories):
        _packed_column(out, s.trajectories[tid].codeword)
    return bytes(out)


def _section_cqc(s: Summary) -> bytes:
    if not s.config.use_cqc:
        return b""
    out = bytearray(CqcCode(*s.cqc_center).to_bytes())
    for tid in sorted(s.trajectories):
        r = s.trajectories[tid]
        data = _pack_codes(r.cqc_bits, r.cqc_levels)
        write_varint(out, len(data))
        out += data
    return bytes(out)


def _section_checkpoints(s: Summary) -> bytes:
    out = bytearray()
    write_varint(out, len(s.checkpoints))
    for start in sorted(s.checkpoints):
        cps = s.checkpoints[start]
        write_varint(out, start)
        write_varint(out, len(cps))
        tids = sorted(cps)
        _ids_delta(out, tids)
        for tid in tids:
            w = np.asarray(cps[tid], dtype=np.float64).reshape(-1, 2)
            write_varint(out, len(w))
            out += _f64(w)
    return bytes(out)


def _section_index(s: Summary) -> bytes:
    return b"" if s.index is None else s.index.to_bytes()


def serialize(summary: Summary) -> bytes:
    parts = [_section_config, _section_coefficients, _section_partitions, _section_codebook,
             _section_assignments, _section_cqc, _section_checkpoints, _section_index]
    out = bytearray(MAGIC + struct.pack("<H", VERSION))
    for fn in parts:
        data = fn(summary)
        out += struct.pack("<I", len(data))
        out += data
    return bytes(out)


def split_sections(buf: bytes) -> dict[str, bytes]:
    if len(buf) < HEADER_SIZE or buf[:4] != MAGIC:
        raise FormatError("not a PPQT summary (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    pos = HEADER_SIZE
    out = {}
    for name in SECTIONS:
        if pos + 4 > len(buf):
            raise FormatError(f"truncated before section {name}")
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + n > len(buf):
            raise FormatError(f"section {name} is truncated")
        out[name] = buf[pos: pos + n]
        pos += n
    if pos != len(buf):
        raise FormatError("trailing bytes after the last section")
    return out


def section_sizes(buf: bytes) -> dict[str, int]:
    return {k: len(v) for k, v in split_sections(buf).items()}


def deserialize(buf: bytes) -> Summary:
    try:
        return _deserialize(buf)
    except FormatError:
        raise
    except (IndexError, ValueError, KeyError, struct.error, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt summary: {exc}") from exc


def _deserialize(buf: bytes) -> Summary:
    sec = split_sections(buf)
    config = Config.from_dict(json.loads(sec["config"].decode("utf-8")))
    k = config.k

    b = sec["coefficients"]
    T, pos = read_varint(b, 0)
    coefficients = []
    for _ in range(T):
        q, pos = read_varint(b, pos)
        a = np.frombuffer(b, dtype="<f4", count=q * k, offset=pos).astype(np.float64)
        pos += 4 * q * k
        coefficients.append(a.reshape(q, k))

    b = sec["partitions"]
    T2, pos = read_varint(b, 0)
    partition_ids = []
    for _ in range(T2):
        q, pos = read_varint(b, pos)
        ids, prev = [], 0
        for _ in range(q):
            d, pos = read_varint(b, pos)
            prev += d
            ids.append(prev)
        partition_ids.append(np.array(ids, dtype=np.int64))
    n, pos = read_varint(b, pos)
    tids, prev = [], 0
    for _ in range(n):
        d, pos = read_varint(b, pos)
        prev += d
        tids.append(prev)
    meta = {}
    for tid in tids:
        start, pos = read_varint(b, pos)
        length, pos = read_varint(b, pos)
        part, pos = _read_packed_column(b, pos, length)
        meta[tid] = (start, length, part)

    b = sec["codebook"]
    V, pos = read_varint(b, 0)
    cb, _ = _read_f64(b, pos, 2 * V)
    codebook = cb.reshape(V, 2)

    b = sec["assignments"]
    pos = 0
    words = {}
    for tid in tids:
        words[tid], pos = _read_packed_column(b, pos, meta[tid][1])

    b = sec["cqc_codes"]
    codes = {}
    center = (0, 0)
    if config.use_cqc:
        c, pos = CqcCode.from_bytes(b, 0)
        center = (c.bits, c.levels)
        tree = tree_for(config)
        for tid in tids:
            nb, pos = read_varint(b, pos)
            codes[tid] = _unpack_codes(b[pos: pos + nb], meta[tid][1], tree)
            pos += nb
    trajectories = {}
    for tid in tids:
        start, length, part = meta[tid]
        bits, levels = codes.get(tid, (np.zeros(length, np.uint32), np.zeros(length, np.uint8)))
        trajectories[tid] = TrajectoryRecord(start, length, part, words[tid], bits, levels)

    b = sec["checkpoints"]
    n, pos = read_varint(b, 0)
    checkpoints = {}
    for _ in range(n):
        start, pos = read_varint(b, pos)
        m, pos = read_varint(b, pos)
        ids, prev = [], 0
        for _ in range(m):
            d, pos = read_varint(b, pos)
            prev += d
            ids.append(prev)
        cps = {}
        for tid in ids:
            w, pos = read_varint(b, pos)
            a, pos = _read_f64(b, pos, 2 * w)
            cps[tid] = a.reshape(w, 2)
        checkpoints[start] = cps

    index = TemporalIndex.from_bytes(bytes(sec["index"])) if len(sec["index"]) else None
    return Summary(config, coefficients, partition_ids, codebook, trajectories, center,
                   checkpoints, index)


def save(summary: Summary, path) -> int:
    data = serialize(summary)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load(path) -> Summary:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
