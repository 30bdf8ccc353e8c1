"""Streaming summarization: partition, predict, quantize, CQC-code and index each timestamp."""
from __future__ import annotations

import numpy as np

from .core import Config, StreamBatch, Summary, TrajectoryRecord
from .cqc import DeviationCoder
from .index import TemporalIndex
from .partitioner import (PartitionSet, incremental_repartition, partition_points,
                          single_partition)
from .predictor import fit_ar_feature
from .quantizer import EpqState, epq_step


class SummaryBuilder:
    """Single-writer builder; feed batches in timestamp order, then ``finalize``.

    ``keep_reconstruction`` records every reconstructed point (before CQC
    refinement) so tests can compare replay paths against the encoder.
    """

    def __init__(self, config: Config, keep_reconstruction: bool = False):
        self.config = config
        self.state = EpqState(config)
        self.coder = DeviationCoder(config.eps1, config.g_s_units) if config.use_cqc else None
        self.index = TemporalIndex(config.g_c_units, config.eps_s, config.eps_c, config.eps_d,
                                   config.page_size)
        self.t = 0
        self.partitions: PartitionSet | None = None
        self.partition_ids: list[np.ndarray] = []
        self.checkpoints: dict[int, dict[int, np.ndarray]] = {}
        self.actual_tail: dict[int, list[tuple[float, float]]] = {}
        self._rec: dict[int, dict] = {}
        self.events: list[str] = []
        self.partition_counts: list[int] = []
        self.reconstructed: dict[int, list[np.ndarray]] | None = {} if keep_reconstruction else None
        self._finalized = False

    def _features(self, batch: StreamBatch) -> dict:
        cfg = self.config
        if cfg.partition_mode != "autocorrelation":
            return {tid: np.asarray(batch.entries[tid], dtype=np.float64) for tid in batch.ids()}
        feats = {}
        for tid in batch.ids():
            tail = self.actual_tail.setdefault(tid, [])
            tail.append(tuple(map(float, batch.entries[tid])))
            if len(tail) > 4 * cfg.k:
                del tail[0]
            feats[tid], _ = fit_ar_feature(tail, cfg.k)
        return feats

    def _partition(self, batch: StreamBatch) -> PartitionSet:
        cfg = self.config
        if cfg.partition_mode in ("single", "none"):
            return single_partition(batch.ids(), batch.t)
        feats = self._features(batch)
        if self.partitions is None or not len(self.partitions):
            first = self.partitions.next_id if self.partitions is not None else 0
            return partition_points(feats, cfg.eps_p, cfg.partition_mode, batch.t, first)
        return incremental_repartition(self.partitions, feats, cfg.eps_p, cfg.partition_mode,
                                       batch.t)

    def push(self, batch: StreamBatch) -> dict[int, np.ndarray]:
        if self._finalized:
            raise RuntimeError("builder already finalized")
        if batch.t <= self.t:
            raise ValueError(f"batch t={batch.t} is not after t={self.t}")
        while self.t + 1 < batch.t:
            self.push(StreamBatch(self.t + 1, {}))
        self.t = batch.t
        cfg = self.config
        ids = batch.ids()
        for tid in ids:
            rec = self._rec.get(tid)
            if rec is not None and rec["start"] + len(rec["codeword"]) != batch.t:
                raise ValueError(f"trajectory {tid} skips from t={rec['start'] + len(rec['codeword']) - 1}"
                                 f" to t={batch.t}; timestamps must be consecutive")

        event = self.index.update(batch.t, {tid: batch.entries[tid] for tid in ids})
        self.events.append(event)
        if event in ("build", "rebuild"):
            self.checkpoints[batch.t] = {
                tid: np.array(self.state.windows[tid], dtype=np.float64)
                for tid in ids if self.state.windows.get(tid)}

        if not ids:
            self.state.coefficients.append(np.zeros((0, cfg.k)))
            self.partition_ids.append(np.zeros(0, dtype=np.int64))
            self.partition_counts.append(0)
            return {}

        pset = self._partition(batch)
        self.partitions = pset
        self.partition_ids.append(np.array([p.id for p in pset.partitions], dtype=np.int64))
        self.partition_counts.append(len(pset))
        recon = epq_step(batch, self.state, pset.member_lists())
        where = pset.lookup()

        if self.coder is not None:
            A = np.array([batch.entries[tid] for tid in ids], dtype=np.float64)
            R = np.array([recon[tid] for tid in ids])
            bits, levels = self.coder.encode_many(A, R)
        else:
            bits = levels = np.zeros(len(ids), dtype=np.int64)
        for n, tid in enumerate(ids):
            rec = self._rec.setdefault(tid, {"start": batch.t, "partition": [], "codeword": [],
                                             "bits": [], "levels": []})
            rec["partition"].append(where[tid])
            rec["codeword"].append(self.state.assignments[tid][-1])
            rec["bits"].append(int(bits[n]))
            rec["levels"].append(int(levels[n]))
            if self.reconstructed is not None:
                self.reconstructed.setdefault(tid, []).append(recon[tid])
        return recon

    def finalize(self) -> Summary:
        self._finalized = True
        trajectories = {}
        for tid in sorted(self._rec):
            r = self._rec[tid]
            trajectories[tid] = TrajectoryRecord(
                start=r["start"], length=len(r["codeword"]),
                partition=np.array(r["partition"], dtype=np.uint32),
                codeword=np.array(r["codeword"], dtype=np.uint32),
                cqc_bits=np.array(r["bits"], dtype=np.uint32),
                cqc_levels=np.array(r["levels"], dtype=np.uint8))
        center = (0, 0)
        if self.coder is not None:
            center = (self.coder.cqc1.bits, self.coder.cqc1.levels)
        return Summary(config=self.config,
                       coefficients=list(self.state.coefficients),
                       partition_ids=list(self.partition_ids),
                       codebook=self.state.codebook.codewords.copy(),
                       trajectories=trajectories,
                       cqc_center=center,
                       checkpoints=self.checkpoints,
                       index=self.index.freeze())


def summarize(batches, config: Config, keep_reconstruction: bool = False):
    """Run the whole stream through a builder; returns ``(summary, builder)``."""
    b = SummaryBuilder(config, keep_reconstruction)
    for batch in batches:
        b.push(batch)
    return b.finalize(), b
