"""Quality, size and I/O measures plus brute-force oracles for the query paths."""
from __future__ import annotations

import math

import numpy as np

from .core import Config, Summary, summary_size_bytes
from .cqc import DeviationCoder
from .index import TemporalIndex, cell_of
from .ingest import to_batches
from .partitioner import incremental_repartition, partition_points, single_partition
from .predictor import fit_ar_feature
from .quantizer import EpqState, epq_step

RAW_BYTES_PER_POINT = 16  # two float64 coordinates


def mae(originals, reconstructions, units_per_meter: float) -> float:
    """Mean Euclidean distance in meters."""
    A = np.asarray(originals, dtype=np.float64).reshape(-1, 2)
    B = np.asarray(reconstructions, dtype=np.float64).reshape(-1, 2)
    if A.shape != B.shape:
        raise ValueError(f"length mismatch: {len(A)} vs {len(B)} points")
    if len(A) == 0:
        return 0.0
    return float(np.mean(np.hypot(A[:, 0] - B[:, 0], A[:, 1] - B[:, 1]))) / units_per_meter


def precision_recall(returned, truth) -> tuple[float, float]:
    """Set precision and recall; an empty answer has precision 1 by convention."""
    R, T = set(returned), set(truth)
    hit = len(R & T)
    precision = hit / len(R) if R else 1.0
    recall = hit / len(T) if T else 1.0
    return precision, recall


def raw_size_bytes(trajectories) -> int:
    return RAW_BYTES_PER_POINT * sum(len(t) for t in trajectories)


def compression_ratio(trajectories, summary: Summary) -> float:
    return raw_size_bytes(trajectories) / summary_size_bytes(summary)


def refined_points(summary: Summary, decoder=None) -> dict[int, np.ndarray]:
    """Full replay of every trajectory (refined), keyed by id; row n is t = start + n."""
    from .query import Decoder

    dec = decoder or Decoder(summary)
    return {tid: dec.full_replay(tid) for tid in summary.trajectories}


def points_at(points: dict[int, np.ndarray], starts: dict[int, int], t: int) -> dict:
    out = {}
    for tid, P in points.items():
        n = t - starts[tid]
        if 0 <= n < len(P):
            out[tid] = (float(P[n, 0]), float(P[n, 1]))
    return out


def oracle_strq(positions: dict, x: float, y: float, g_c: float) -> list[int]:
    """Ids whose position (id -> (x, y) at the query time) lies in the cell of (x, y)."""
    qc = cell_of(x, y, g_c)
    return sorted(tid for tid, (px, py) in positions.items() if cell_of(px, py, g_c) == qc)


def oracle_replay(trajectories, config: Config, refine: bool = True,
                  t_stop: int | None = None) -> dict[int, np.ndarray]:
    """Re-encode the raw stream from t = 1 and return every reconstructed trajectory.

    Independent of the summary container, the index and the checkpoints: it
    re-runs partitioning, prediction and quantization over every timestamp.
    """
    state = EpqState(config)
    coder = DeviationCoder(config.eps1, config.g_s_units) if config.use_cqc and refine else None
    prev = None
    tails: dict[int, list] = {}
    out: dict[int, list] = {}
    for batch in to_batches(trajectories):
        if t_stop is not None and batch.t > t_stop:
            break
        ids = batch.ids()
        if config.partition_mode in ("single", "none"):
            pset = single_partition(ids, batch.t)
        else:
            if config.partition_mode == "autocorrelation":
                feats = {}
                for i in ids:
                    tail = tails.setdefault(i, [])
                    tail.append(tuple(map(float, batch.entries[i])))
                    del tail[:-4 * config.k]
                    feats[i] = fit_ar_feature(tail, config.k)[0]
            else:
                feats = {i: np.asarray(batch.entries[i], dtype=np.float64) for i in ids}
            if prev is None or not len(prev):
                first = prev.next_id if prev is not None else 0
                pset = partition_points(feats, config.eps_p, config.partition_mode, batch.t, first)
            else:
                pset = incremental_repartition(prev, feats, config.eps_p, config.partition_mode,
                                               batch.t)
        prev = pset
        recon = epq_step(batch, state, pset.member_lists())
        order = sorted(recon)
        R = np.array([recon[i] for i in order], dtype=np.float64).reshape(-1, 2)
        if coder is not None:
            A = np.array([batch.entries[i] for i in order], dtype=np.float64).reshape(-1, 2)
            bits, levels = coder.encode_many(A, R)
            R = coder.refine_many(R, bits, levels)
        for i, r in zip(order, R):
            out.setdefault(i, []).append(r)
    return {i: np.array(v) for i, v in out.items()}


def oracle_reconstruct(trajectories, config: Config, tid: int, t_start: int, l: int,
                       refine: bool = True) -> np.ndarray:
    """Points t_start .. t_start + l - 1 of one trajectory from :func:`oracle_replay`."""
    start = {tr.id: tr.points[0].t for tr in trajectories}.get(tid)
    P = oracle_replay(trajectories, config, refine, t_start + l - 1).get(tid)
    if start is None or P is None or t_start < start or t_start - start + l > len(P):
        raise ValueError(f"trajectory {tid} does not cover t={t_start}..{t_start + l - 1}")
    return P[t_start - start: t_start - start + l]


# page accounting --------------------------------------------------------------

def query_byte_ranges(index: TemporalIndex, t: int, cells,
                      region_check: bool = False) -> list[tuple[int, int]]:
    """Byte ranges of the index section a lookup of ``cells`` at t reads.

    Layout: every period is one contiguous blob (header, then per-timestamp cell
    directories each followed by their posting lists); the period table at the
    front of the index section is held in memory. A lookup reads the period
    header, the directory of t and the postings of the cells it finds. With
    ``region_check`` a single-cell lookup outside every region stops after the
    header.
    """
    v = index.period_of(t)
    if v is None:
        return []
    ranges = [v.header_range()]
    if region_check and all(v.pi.region_of(*c) < 0 for c in cells):
        return ranges
    rng = v.dir_range(t)
    if rng is None:
        return ranges
    ranges.append(rng)
    directory = v.read_dir(index.reader(), t)
    for c in cells:
        e = directory.get(tuple(c))
        if e is not None:
            ranges.append(v.posting_range(t, e))
    return ranges


def pages_of(ranges, page_size: int) -> set[int]:
    pages = set()
    for off, n in ranges:
        if n > 0:
            pages.update(range(off // page_size, (off + n - 1) // page_size + 1))
    return pages


def page_io_count(index: TemporalIndex, trace, summary: Summary | None = None,
                  exact: bool = False) -> int:
    """Distinct logical pages touched by a trace of (x, y, t) queries.

    Approximate queries read the query cell; exact ones read every cell of the
    local search (``summary`` supplies g_s).
    """
    from .query import candidate_cells

    pages: set[int] = set()
    for x, y, t in trace:
        if exact:
            cells = candidate_cells(summary, index.g_c, x, y)
        else:
            cells = [cell_of(x, y, index.g_c)]
        pages |= pages_of(query_byte_ranges(index, t, sorted(cells), region_check=not exact),
                          index.page_size)
    return len(pages)


class InstrumentedBuffer:
    """bytes stand-in that logs every byte offset read through slicing or indexing."""

    def __init__(self, data: bytes):
        self.data = data
        self.touched: set[int] = set()

    def __len__(self):
        return len(self.data)

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(len(self.data))
            self.touched.update(range(start, stop, step))
        else:
            self.touched.add(key if key >= 0 else len(self.data) + key)
        return self.data[key]


def instrumented_page_count(index: TemporalIndex, trace, summary: Summary | None = None,
                            exact: bool = False) -> int:
    """Re-run the trace through the real query code over a logging buffer."""
    from .index import PageReader
    from .query import candidates, strq_approx

    buf = InstrumentedBuffer(index.blob)
    for x, y, t in trace:
        reader = PageReader(buf, index.page_size)
        if exact:
            candidates(index, summary, x, y, t, reader)
        else:
            strq_approx(index, x, y, t, reader)
    return len({b // index.page_size for b in buf.touched})


def mean_radius_bound(config: Config) -> float:
    """Per-point refinement bound in meters."""
    return math.sqrt(2) / 2 * config.g_s
