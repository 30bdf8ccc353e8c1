"""Range and path queries answered from a summary and its temporal index.

The index stores the cells of the original points. A refined reconstruction is
within ``r = sqrt(2)/2 * g_s`` of its original (CQC bound), so every trajectory
whose refined point lies in a query cell has its original within ``r`` of that
cell. ``strq_exact`` therefore scans the cells within ``r`` of the query cell,
replays the candidates and keeps those whose refined point falls in the cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Summary
from .cqc import CqcCode
from .index import PageReader, TemporalIndex, cell_of
from .predictor import predict_point
from .storage import tree_for

# widens the search radius so rounding in cell assignment can never lose a hit
SEARCH_SLACK = 1e-6


@dataclass(frozen=True)
class StrqQuery:
    x: float
    y: float
    t: int

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)) or self.t < 1:
            raise ValueError(f"invalid query {self}")


@dataclass(frozen=True)
class TpqQuery:
    x: float
    y: float
    t: int
    l: int

    def __post_init__(self):
        StrqQuery(self.x, self.y, self.t)
        if self.l < 0:
            raise ValueError("path duration must be >= 0")


def search_radius(g_s: float) -> float:
    return math.sqrt(2) / 2 * g_s


class Decoder:
    """Decode-side view of a summary: replays reconstructions and applies CQC offsets."""

    def __init__(self, summary: Summary):
        self.summary = summary
        cfg = summary.config
        self.k = cfg.k
        self.g_s = cfg.g_s_units
        self.use_cqc = cfg.use_cqc
        self.predicts = cfg.predicts
        self.codebook = summary.codebook
        if self.use_cqc:
            self.tree = tree_for(cfg)
            self.c1_2 = self.tree.decode2(CqcCode(*summary.cqc_center))
        self._offsets: dict[tuple[int, int], tuple[int, int]] = {}
        self._starts = sorted(summary.checkpoints)

    def offset2(self, bits: int, levels: int) -> tuple[int, int]:
        key = (bits, levels)
        d = self._offsets.get(key)
        if d is None:
            cx, cy = self.tree.decode2(CqcCode(bits, levels))
            d = (self.c1_2[0] - cx, self.c1_2[1] - cy)
            self._offsets[key] = d
        return d

    def replay_start(self, tid: int, t_start: int) -> tuple[int, list]:
        """Latest checkpoint at or before t_start holding tid, else the trajectory start."""
        rec = self.summary.trajectories[tid]
        for s in reversed(self._starts):
            if s > t_start:
                continue
            if s <= rec.start:
                break
            cp = self.summary.checkpoints[s].get(tid)
            if cp is not None:
                return s, [(float(x), float(y)) for x, y in cp]
        return rec.start, []

    def replay(self, tid: int, t_from: int, t_to: int, window: list, out_from: int):
        """Reconstructed points for t in [out_from, t_to], replaying from t_from."""
        s = self.summary
        rec = s.trajectories[tid]
        k = self.k
        out = []
        window = list(window)
        cb = self.codebook
        for t in range(t_from, t_to + 1):
            n = t - rec.start
            if self.predicts and len(window) >= k:
                px, py = predict_point(s.coefficients[t - 1][rec.partition[n]], window[-k:])
            else:
                px, py = 0.0, 0.0
            w = cb[rec.codeword[n]]
            r = (px + float(w[0]), py + float(w[1]))
            window.append(r)
            if len(window) > k:
                del window[0]
            if t >= out_from:
                out.append(r)
        return out

    def refine(self, tid: int, t: int, r) -> tuple[float, float]:
        if not self.use_cqc:
            return r
        rec = self.summary.trajectories[tid]
        n = t - rec.start
        d = self.offset2(int(rec.cqc_bits[n]), int(rec.cqc_levels[n]))
        return r[0] + self.g_s * (d[0] * 0.5), r[1] + self.g_s * (d[1] * 0.5)

    def check_range(self, tid: int, t_start: int, l: int):
        rec = self.summary.trajectories.get(tid)
        if rec is None:
            raise KeyError(f"unknown trajectory {tid}")
        if l < 1 or t_start < rec.start or t_start + l - 1 > rec.start + rec.length - 1:
            raise ValueError(f"trajectory {tid} covers t={rec.start}..{rec.start + rec.length - 1},"
                             f" not {t_start}..{t_start + l - 1}")

    def reconstruct_range(self, tid: int, t_start: int, l: int, refine: bool = True) -> np.ndarray:
        self.check_range(tid, t_start, l)
        s0, window = self.replay_start(tid, t_start)
        pts = self.replay(tid, s0, t_start + l - 1, window, t_start)
        if refine:
            pts = [self.refine(tid, t_start + i, p) for i, p in enumerate(pts)]
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def full_replay(self, tid: int, refine: bool = True) -> np.ndarray:
        """Every point of a trajectory replayed from its first timestamp (no checkpoints)."""
        rec = self.summary.trajectories[tid]
        pts = self.replay(tid, rec.start, rec.start + rec.length - 1, [], rec.start)
        if refine:
            pts = [self.refine(tid, rec.start + i, p) for i, p in enumerate(pts)]
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def point_at(self, tid: int, t: int, refine: bool = True) -> tuple[float, float]:
        return tuple(self.reconstruct_range(tid, t, 1, refine)[0])


def reconstruct_range(summary: Summary, tid: int, t_start: int, l: int,
                      decoder: Decoder | None = None) -> np.ndarray:
    """``l`` refined points of ``tid`` starting at ``t_start``, replayed from a checkpoint."""
    return (decoder or Decoder(summary)).reconstruct_range(tid, t_start, l)


def local_search_cells(x: float, y: float, g_s: float, g_c: float,
                       whole_cell: bool = False) -> set[tuple[int, int]]:
    """Cells reachable within ``sqrt(2)/2 * g_s`` of the query.

    With a radius larger than a cell every cell meeting the disc around (x, y)
    is returned; otherwise the radius only reaches the query cell and those of
    its (up to 8) neighbours whose border is close enough, which is the same
    set. ``whole_cell`` sweeps the disc over the entire query cell instead of
    centring it on the point.
    """
    r = search_radius(g_s)
    qx, qy = cell_of(x, y, g_c)
    if whole_cell:
        bx0, by0, bx1, by1 = qx * g_c, qy * g_c, (qx + 1) * g_c, (qy + 1) * g_c
    else:
        bx0 = bx1 = x
        by0 = by1 = y
    i0, i1 = math.floor((bx0 - r) / g_c), math.floor((bx1 + r) / g_c)
    j0, j1 = math.floor((by0 - r) / g_c), math.floor((by1 + r) / g_c)
    out = set()
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            cx0, cy0 = i * g_c, j * g_c
            # distance between the swept box and cell (i, j)
            dx = max(cx0 - bx1, 0.0, bx0 - (cx0 + g_c))
            dy = max(cy0 - by1, 0.0, by0 - (cy0 + g_c))
            if math.hypot(dx, dy) <= r:
                out.add((i, j))
    out.add((qx, qy))
    return out


def strq_approx(index: TemporalIndex, x: float, y: float, t: int,
                reader: PageReader | None = None) -> list[int]:
    """Ids indexed in the cell of (x, y) at t; empty on a period or region miss."""
    v = index.period_of(t)
    if v is None:
        return []
    c = cell_of(x, y, index.g_c)
    if v.pi.region_of(*c) < 0:
        # the region list lives in the period header
        (reader or index.reader()).read(*v.header_range())
        return []
    return index.cells_at(t, [c], reader).get(c, [])


def candidate_cells(summary: Summary, g_c: float, x: float, y: float) -> list[tuple[int, int]]:
    """Cells an exact query at (x, y) must scan."""
    g_s = summary.config.g_s_units * (1 + SEARCH_SLACK) if summary.config.use_cqc else 0.0
    return sorted(local_search_cells(x, y, g_s, g_c, whole_cell=True))


def candidates(index: TemporalIndex, summary: Summary, x: float, y: float, t: int,
               reader: PageReader | None = None) -> list[int]:
    """Union of the posting lists around the query cell (superset of the exact answer)."""
    hits = index.cells_at(t, candidate_cells(summary, index.g_c, x, y), reader)
    return sorted({i for ids in hits.values() for i in ids})


def strq_exact(index: TemporalIndex, summary: Summary, x: float, y: float, t: int,
               decoder: Decoder | None = None, reader: PageReader | None = None,
               verify_raw: dict | None = None) -> list[int]:
    """Trajectories whose refined reconstruction at t lies in the cell of (x, y).

    ``verify_raw`` (id -> original point at t) additionally drops survivors whose
    original point is outside the cell.
    """
    dec = decoder or Decoder(summary)
    g_c = index.g_c
    qc = cell_of(x, y, g_c)
    out = []
    for tid in candidates(index, summary, x, y, t, reader):
        px, py = dec.point_at(tid, t)
        if cell_of(px, py, g_c) != qc:
            continue
        if verify_raw is not None:
            rx, ry = verify_raw[tid]
            if cell_of(rx, ry, g_c) != qc:
                continue
        out.append(tid)
    return out


def tpq(index: TemporalIndex, summary: Summary, x: float, y: float, t: int, l: int,
        decoder: Decoder | None = None) -> dict[int, np.ndarray]:
    """STRQ hits at t with their refined positions at t..t+l (shorter if they end early)."""
    if l < 0:
        raise ValueError("path duration must be >= 0")
    dec = decoder or Decoder(summary)
    out = {}
    for tid in strq_exact(index, summary, x, y, t, dec):
        end = summary.end(tid)
        n = min(l + 1, end - t + 1)
        out[tid] = dec.reconstruct_range(tid, t, n)
    return out
