"""Partition-based grid index over trajectory positions and its temporal extension.

All rectangles live on one global lattice of ``g_c`` cells: cell ``(i, j)`` covers
``[i*g_c, (i+1)*g_c) x [j*g_c, (j+1)*g_c)`` (lower-left inclusive). A partition's
minimum bounding rectangle is snapped outward to that lattice, so overlap removal
is exact integer arithmetic and a point maps to the same cell in every index.

A :class:`TemporalIndex` is a sequence of periods. Each period owns a list of
disjoint regions (its PI, grown by insertions) and, for every timestamp it
covers, one posting list of trajectory ids per occupied cell. ``freeze`` encodes
every period into a page-addressable blob; queries only read that blob.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import (HuffmanTable, decode_ids, encode_ids, gaps, read_varint,  # noqa: F401
                    unzigzag, write_varint, zigzag)
from .core import InvariantError
from .partitioner import partition_points


@dataclass(frozen=True, order=True)
class Rect:
    """Half-open block of lattice cells ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"invalid rect {self}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains_cell(self, cx: int, cy: int) -> bool:
        return self.x0 <= cx < self.x1 and self.y0 <= cy < self.y1

    def intersects(self, o: "Rect") -> bool:
        return self.x0 < o.x1 and o.x0 < self.x1 and self.y0 < o.y1 and o.y0 < self.y1

    def inside(self, o: "Rect") -> bool:
        return o.x0 <= self.x0 and self.x1 <= o.x1 and o.y0 <= self.y0 and self.y1 <= o.y1

    def bounds(self, g_c: float) -> tuple[float, float, float, float]:
        return self.x0 * g_c, self.y0 * g_c, self.x1 * g_c, self.y1 * g_c


def cell_of(x, y, g_c: float):
    """Lattice cell of a point; works on scalars and arrays."""
    if np.ndim(x) == 0:
        return math.floor(x / g_c), math.floor(y / g_c)
    return (np.floor(np.asarray(x) / g_c).astype(np.int64),
            np.floor(np.asarray(y) / g_c).astype(np.int64))


def snap_rect(points: np.ndarray, g_c: float) -> Rect:
    cx, cy = cell_of(points[:, 0], points[:, 1], g_c)
    return Rect(int(cx.min()), int(cy.min()), int(cx.max()) + 1, int(cy.max()) + 1)


def _subtract(p: Rect, e: Rect) -> list[Rect]:
    if not p.intersects(e):
        return [p]
    xs = sorted({p.x0, max(p.x0, e.x0), min(p.x1, e.x1), p.x1})
    ys = sorted({p.y0, max(p.y0, e.y0), min(p.y1, e.y1), p.y1})
    out = []
    for ya, yb in zip(ys, ys[1:]):
        for xa, xb in zip(xs, xs[1:]):
            r = Rect(xa, ya, xb, yb)
            if not r.inside(e):
                out.append(r)
    return out


def remove_overlap(new: Rect, existing) -> list[Rect]:
    """Pieces of ``new`` not covered by any rect in ``existing``.

    Each overlapping rect cuts the current pieces along its edges (slab
    decomposition); the cell that lies inside it is dropped. Pieces come out in
    row-major order, so the result is deterministic.
    """
    P = _rect_bounds([new])
    for e in existing:
        hit = np.flatnonzero((P[:, 0] < e.x1) & (e.x0 < P[:, 2]) & (P[:, 1] < e.y1)
                             & (e.y0 < P[:, 3]))
        if not len(hit):
            continue
        parts, last = [], 0
        for i in hit:
            parts.append(P[last:i])
            parts.append(_rect_bounds(_subtract(Rect(*map(int, P[i])), e)))
            last = i + 1
        parts.append(P[last:])
        P = np.vstack(parts)
    return [Rect(*map(int, r)) for r in P]


@dataclass
class GridIndex:
    """One region of a PI: a lattice rect plus its density baseline."""

    rect: Rect
    created: int
    baseline: int  # trajectories inside the rect when the region was created

    def area(self, g_c: float) -> float:
        return self.rect.area * g_c * g_c


@dataclass
class PartitionIndex:
    regions: list[GridIndex]
    created: int

    _bounds: tuple | None = field(default=None, repr=False, compare=False)

    def bounds_array(self) -> np.ndarray:
        """(n, 4) array of x0, y0, x1, y1, rebuilt whenever regions were appended."""
        if self._bounds is None or self._bounds[0] != len(self.regions):
            B = np.array([[r.rect.x0, r.rect.y0, r.rect.x1, r.rect.y1] for r in self.regions],
                         dtype=np.int64).reshape(-1, 4)
            self._bounds = (len(self.regions), B)
        return self._bounds[1]

    def region_of(self, cx: int, cy: int) -> int:
        B = self.bounds_array()
        hit = (B[:, 0] <= cx) & (cx < B[:, 2]) & (B[:, 1] <= cy) & (cy < B[:, 3])
        return int(np.argmax(hit)) if hit.any() else -1

    def regions_of(self, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
        """Vectorized ``region_of``; -1 marks uncovered cells."""
        return _lookup(self.bounds_array(), cx, cy)

    def rects(self) -> list[Rect]:
        return [r.rect for r in self.regions]


def _as_arrays(positions: dict):
    ids = sorted(positions)
    P = np.array([positions[i] for i in ids], dtype=np.float64).reshape(-1, 2)
    return ids, P


def _rect_bounds(rects) -> np.ndarray:
    return np.array([[r.x0, r.y0, r.x1, r.y1] for r in rects], dtype=np.int64).reshape(-1, 4)


def _lookup(B: np.ndarray, cx, cy, chunk: int = 1 << 22) -> np.ndarray:
    """First rect of ``B`` containing each cell, or -1."""
    cx = np.asarray(cx, dtype=np.int64)
    cy = np.asarray(cy, dtype=np.int64)
    out = np.full(len(cx), -1, dtype=np.int64)
    if not len(B) or not len(cx):
        return out
    step = max(1, chunk // len(B))
    for a in range(0, len(cx), step):
        x, y = cx[a:a + step, None], cy[a:a + step, None]
        hit = (B[:, 0] <= x) & (x < B[:, 2]) & (B[:, 1] <= y) & (y < B[:, 3])
        any_hit = hit.any(axis=1)
        out[a:a + step][any_hit] = hit.argmax(axis=1)[any_hit]
    return out


def region_counts(regions, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Points per region; regions must be pairwise disjoint."""
    rects = [r.rect if isinstance(r, GridIndex) else r for r in regions]
    idx = _lookup(_rect_bounds(rects), cx, cy)
    return np.bincount(idx[idx >= 0], minlength=len(rects)).astype(np.int64)


def build_pi(positions: dict, eps_s: float, g_c: float, t: int = 0,
             existing=()) -> PartitionIndex:
    """Partition the points with eps_s and index each partition's snapped rectangle.

    Rectangles are made disjoint from each other and from ``existing``.
    """
    if not positions:
        raise ValueError("cannot build an index over an empty batch")
    ids, P = _as_arrays(positions)
    parts = partition_points({i: P[r] for r, i in enumerate(ids)}, eps_s, "spatial", t)
    row = {tid: r for r, tid in enumerate(ids)}
    cx, cy = cell_of(P[:, 0], P[:, 1], g_c)
    occupied = list(existing)
    B = _rect_bounds(occupied)
    rects: list[Rect] = []
    for p in parts.partitions:
        rows = [row[m] for m in p.members]
        R = Rect(int(cx[rows].min()), int(cy[rows].min()),
                 int(cx[rows].max()) + 1, int(cy[rows].max()) + 1)
        near = np.flatnonzero((B[:, 0] < R.x1) & (R.x0 < B[:, 2]) & (B[:, 1] < R.y1)
                              & (R.y0 < B[:, 3]))
        pieces = remove_overlap(R, [occupied[i] for i in near])
        rects.extend(pieces)
        occupied.extend(pieces)
        B = np.vstack([B, _rect_bounds(pieces)])
    counts = region_counts(rects, cx, cy)
    return PartitionIndex([GridIndex(r, t, int(c)) for r, c in zip(rects, counts)], t)


def trd(region: GridIndex, positions: dict, g_c: float) -> float:
    """Trajectories inside the region divided by its area (coordinate units squared)."""
    if not positions:
        return 0.0
    _, P = _as_arrays(positions)
    cx, cy = cell_of(P[:, 0], P[:, 1], g_c)
    return float(region_counts([region], cx, cy)[0]) / region.area(g_c)


def dropping_rate(baseline: float, current: float) -> float:
    """Relative change of a region's density; 0 for an empty baseline."""
    if baseline <= 0:
        return 0.0
    return (current - baseline) / baseline


def adr(pi: PartitionIndex, positions: dict, eps_c: float, g_c: float) -> float:
    """Share of regions whose density dropped by more than eps_c since their baseline."""
    if not pi.regions:
        return 0.0
    if positions:
        _, P = _as_arrays(positions)
        cx, cy = cell_of(P[:, 0], P[:, 1], g_c)
        counts = region_counts(pi.regions, cx, cy)
    else:
        counts = np.zeros(len(pi.regions), dtype=np.int64)
    base = np.array([r.baseline for r in pi.regions], dtype=np.float64)
    # densities share the region area, so the rate reduces to a count ratio
    h1 = np.zeros(len(base))
    pos = base > 0
    h1[pos] = (counts[pos] - base[pos]) / base[pos]
    return int(((h1 < 0) & (np.abs(h1) > eps_c)).sum()) / len(pi.regions)


@dataclass
class Period:
    start: int
    end: int
    pi: PartitionIndex
    postings: dict[int, dict[tuple[int, int], list[int]]] = field(default_factory=dict)


class PageReader:
    """Byte access into the index blob that records the logical pages touched."""

    def __init__(self, buf: bytes, page_size: int = 1 << 20):
        self.buf = buf
        self.page_size = page_size
        self.pages: set[int] = set()

    def read(self, off: int, n: int) -> bytes:
        if n > 0:
            self.pages.update(range(off // self.page_size, (off + n - 1) // self.page_size + 1))
        return self.buf[off: off + n]


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def varint(self) -> int:
        v, self.pos = read_varint(self.data, self.pos)
        return v

    def zz(self) -> int:
        return unzigzag(self.varint())


@dataclass
class PeriodView:
    """Parsed header of one encoded period; bodies are read on demand."""

    start: int
    end: int
    pi: PartitionIndex
    table: HuffmanTable
    ts: dict[int, tuple[int, int, int]]  # t -> (dir offset, dir length, postings length)
    offset: int  # absolute offset of the period header in the index blob
    header_len: int
    body: int  # absolute offset of the body

    def header_range(self) -> tuple[int, int]:
        return self.offset, self.body - self.offset

    def dir_range(self, t: int) -> tuple[int, int] | None:
        e = self.ts.get(t)
        if e is None:
            return None
        return self.body + e[0], e[1]

    def read_dir(self, reader: PageReader, t: int) -> dict[tuple[int, int], tuple[int, int]]:
        rng = self.dir_range(t)
        if rng is None:
            return {}
        c = _Cursor(reader.read(*rng))
        out = {}
        cx = cy = off = 0
        for _ in range(c.varint()):
            cx += c.zz()
            cy += c.zz()
            ln = c.varint()
            out[(cx, cy)] = (off, ln)
            off += ln
        return out

    def posting_range(self, t: int, entry: tuple[int, int]) -> tuple[int, int]:
        d_off, d_len, _ = self.ts[t]
        return self.body + d_off + d_len + entry[0], entry[1]

    def read_posting(self, reader: PageReader, t: int, entry) -> list[int]:
        return decode_posting(reader.read(*self.posting_range(t, entry)), self.table)


def encode_posting(ids: list[int], table: HuffmanTable) -> bytes:
    out = bytearray()
    write_varint(out, len(ids))
    write_varint(out, ids[0])
    out += table.encode(gaps(ids))
    return bytes(out)


def decode_posting(buf: bytes, table: HuffmanTable) -> list[int]:
    n, pos = read_varint(buf, 0)
    first, pos = read_varint(buf, pos)
    ids = [first]
    g, _ = table.decode(buf, n - 1, pos)
    for d in g:
        ids.append(ids[-1] + d)
    return ids


def encode_period(p: Period) -> bytes:
    all_gaps = [d for cells in p.postings.values() for ids in cells.values() for d in gaps(ids)]
    table = HuffmanTable.from_symbols(all_gaps)
    body = bytearray()
    ts_entries = []
    for t in sorted(p.postings):
        cells = p.postings[t]
        blobs = []
        d = bytearray()
        write_varint(d, len(cells))
        off = px = py = 0
        for cell in sorted(cells):
            b = encode_posting(cells[cell], table)
            # cells are delta coded against the previous entry; offsets are implied
            write_varint(d, zigzag(cell[0] - px))
            write_varint(d, zigzag(cell[1] - py))
            write_varint(d, len(b))
            px, py = cell
            off += len(b)
            blobs.append(b)
        ts_entries.append((t - p.start, len(body), len(d), off))
        body += d
        for b in blobs:
            body += b
    h = bytearray()
    write_varint(h, p.start)
    write_varint(h, p.end - p.start)
    write_varint(h, len(p.pi.regions))
    for r in p.pi.regions:
        R = r.rect
        write_varint(h, zigzag(R.x0))
        write_varint(h, zigzag(R.y0))
        write_varint(h, R.x1 - R.x0)
        write_varint(h, R.y1 - R.y0)
        write_varint(h, r.created - p.start)
        write_varint(h, r.baseline)
    h += table.to_bytes()
    write_varint(h, len(ts_entries))
    for e in ts_entries:
        for v in e:
            write_varint(h, v)
    out = bytearray()
    write_varint(out, len(h))
    return bytes(out + h + body)


def parse_period(reader: PageReader, offset: int) -> PeriodView:
    # the header length prefix is at most a few bytes; read it before the header proper
    raw = reader.buf[offset: offset + 10]
    hlen, n = read_varint(raw, 0)
    c = _Cursor(reader.read(offset, n + hlen)[n:])
    start = c.varint()
    end = start + c.varint()
    regions = []
    for _ in range(c.varint()):
        x0, y0 = c.zz(), c.zz()
        w, hgt = c.varint(), c.varint()
        created = start + c.varint()
        regions.append(GridIndex(Rect(x0, y0, x0 + w, y0 + hgt), created, c.varint()))
    table, c.pos = HuffmanTable.from_bytes(c.data, c.pos)
    ts = {}
    for _ in range(c.varint()):
        dt, d_off, d_len, p_len = c.varint(), c.varint(), c.varint(), c.varint()
        ts[start + dt] = (d_off, d_len, p_len)
    return PeriodView(start, end, PartitionIndex(regions, start), table, ts, offset,
                      n + hlen, offset + n + hlen)


class TemporalIndex:
    """Sequence of periods, each reusing one PI until its density drops too much.

    ``update(t, positions)`` ingests one timestamp. On the first call, or when
    the average dropping rate of the active PI exceeds eps_d, the period is
    closed and a fresh PI is built (a rebuild). Otherwise points outside every
    region get their own PI fragment, disjoint from the existing regions (an
    insertion). Call ``freeze`` before querying.
    """

    HEADER = struct.Struct("<dddd")

    def __init__(self, g_c: float, eps_s: float, eps_c: float, eps_d: float,
                 page_size: int = 1 << 20):
        self.g_c = g_c
        self.eps_s = eps_s
        self.eps_c = eps_c
        self.eps_d = eps_d
        self.page_size = page_size
        self.periods: list[Period] = []
        self.rebuilds = 0
        self.insertions = 0
        self.last_t = 0
        self.blob: bytes | None = None
        self.views: list[PeriodView] = []

    @property
    def frozen(self) -> bool:
        return self.blob is not None

    def update(self, t: int, positions: dict) -> str:
        """Ingest timestamp ``t``; returns "build", "rebuild", "insert" or "reuse"."""
        if self.frozen:
            raise RuntimeError("index is frozen")
        if t <= self.last_t:
            raise ValueError(f"timestamp {t} is not after {self.last_t}")
        self.last_t = t
        if not positions:
            if self.periods:
                self.periods[-1].end = t
            return "reuse"
        event = "reuse"
        if not self.periods:
            self.periods.append(Period(t, t, build_pi(positions, self.eps_s, self.g_c, t)))
            event = "build"
        else:
            cur = self.periods[-1]
            if adr(cur.pi, positions, self.eps_c, self.g_c) > self.eps_d:
                cur.end = t - 1
                self.periods.append(Period(t, t, build_pi(positions, self.eps_s, self.g_c, t)))
                self.rebuilds += 1
                event = "rebuild"
            else:
                cur.end = t
                ids, P = _as_arrays(positions)
                cx, cy = cell_of(P[:, 0], P[:, 1], self.g_c)
                miss = cur.pi.regions_of(cx, cy) < 0
                uncovered = {ids[r]: positions[ids[r]] for r in np.flatnonzero(miss)}
                if uncovered:
                    frag = build_pi(uncovered, self.eps_s, self.g_c, t, cur.pi.rects())
                    cur.pi.regions.extend(frag.regions)
                    self.insertions += 1
                    event = "insert"
        self._post(self.periods[-1], t, positions)
        return event

    def _post(self, period: Period, t: int, positions: dict):
        ids, P = _as_arrays(positions)
        cx, cy = cell_of(P[:, 0], P[:, 1], self.g_c)
        if (period.pi.regions_of(cx, cy) < 0).any():
            raise InvariantError(f"t={t}: indexed point outside every region")
        cells: dict[tuple[int, int], list[int]] = {}
        for tid, i, j in zip(ids, cx.tolist(), cy.tolist()):
            cells.setdefault((i, j), []).append(tid)
        period.postings[t] = cells

    def period_starts(self) -> list[int]:
        src = self.views if self.frozen else self.periods
        return [p.start for p in src]

    # encoding -------------------------------------------------------------
    def freeze(self) -> "TemporalIndex":
        if self.frozen:
            return self
        blobs = [encode_period(p) for p in self.periods]
        head = bytearray(self.HEADER.pack(self.g_c, self.eps_s, self.eps_c, self.eps_d))
        write_varint(head, self.page_size)
        write_varint(head, self.rebuilds)
        write_varint(head, self.insertions)
        write_varint(head, self.last_t)
        write_varint(head, len(blobs))
        for b in blobs:
            write_varint(head, len(b))
        self._load(bytes(head) + b"".join(blobs))
        self.periods = []
        return self

    def to_bytes(self) -> bytes:
        self.freeze()
        return self.blob

    @classmethod
    def from_bytes(cls, buf: bytes) -> "TemporalIndex":
        g_c, eps_s, eps_c, eps_d = cls.HEADER.unpack_from(buf, 0)
        page_size, _ = read_varint(buf, cls.HEADER.size)
        idx = cls(g_c, eps_s, eps_c, eps_d, page_size)
        idx._load(bytes(buf))
        return idx

    def _load(self, buf: bytes):
        pos = self.HEADER.size
        self.page_size, pos = read_varint(buf, pos)
        self.rebuilds, pos = read_varint(buf, pos)
        self.insertions, pos = read_varint(buf, pos)
        self.last_t, pos = read_varint(buf, pos)
        n, pos = read_varint(buf, pos)
        lengths = []
        for _ in range(n):
            ln, pos = read_varint(buf, pos)
            lengths.append(ln)
        self.blob = buf
        reader = PageReader(buf, self.page_size)
        self.views = []
        for ln in lengths:
            self.views.append(parse_period(reader, pos))
            pos += ln

    def __eq__(self, other):
        if not isinstance(other, TemporalIndex):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    # lookup ---------------------------------------------------------------
    def period_of(self, t: int) -> PeriodView | None:
        if not self.frozen:
            raise RuntimeError("freeze the index before querying")
        for v in self.views:
            if v.start <= t <= v.end:
                return v
        return None

    def reader(self) -> PageReader:
        return PageReader(self.blob, self.page_size)

    def cells_at(self, t: int, cells, reader: PageReader | None = None) -> dict:
        """Posting lists of the given cells at t (missing cells are skipped)."""
        v = self.period_of(t)
        if v is None:
            return {}
        reader = reader or self.reader()
        reader.read(*v.header_range())
        directory = v.read_dir(reader, t)
        out = {}
        for c in cells:
            e = directory.get(tuple(c))
            if e is not None:
                out[tuple(c)] = v.read_posting(reader, t, e)
        return out

    def all_cells_at(self, t: int) -> dict:
        v = self.period_of(t)
        if v is None:
            return {}
        reader = self.reader()
        directory = v.read_dir(reader, t)
        return {c: v.read_posting(reader, t, e) for c, e in directory.items()}

    @property
    def n_periods(self) -> int:
        return len(self.views) if self.frozen else len(self.periods)


def update_tpi(state: TemporalIndex, t: int, positions: dict) -> TemporalIndex:
    state.update(t, positions)
    return state
