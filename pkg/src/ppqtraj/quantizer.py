"""Error-bounded codebook over prediction errors and the per-timestamp E-PQ step."""
from __future__ import annotations

import math

import numpy as np

from .core import Config, InvariantError, StreamBatch
from .predictor import fit_coefficients, predict

BOUND_MARGIN = 1e-9


class Codebook:
    """Append-only list of 2-D codewords; indices never change once issued."""

    def __init__(self, codewords=None):
        self._words = np.zeros((64, 2))
        self._n = 0
        if codewords is not None:
            for w in np.asarray(codewords, dtype=np.float64).reshape(-1, 2):
                self.append(w)

    def __len__(self):
        return self._n

    @property
    def codewords(self) -> np.ndarray:
        return self._words[: self._n]

    def append(self, w) -> int:
        if self._n == len(self._words):
            grown = np.zeros((2 * len(self._words), 2))
            grown[: self._n] = self._words[: self._n]
            self._words = grown
        self._words[self._n] = w
        self._n += 1
        return self._n - 1

    def __getitem__(self, i):
        if not 0 <= i < self._n:
            raise IndexError(i)
        return self._words[i]


def nearest_codeword(codebook, e) -> tuple[int, float]:
    """Index of the closest codeword (lowest index on ties) and its distance."""
    words = codebook.codewords if isinstance(codebook, Codebook) else np.asarray(codebook, float)
    if len(words) == 0:
        raise ValueError("empty codebook")
    d2 = np.sum((words - np.asarray(e, dtype=np.float64)) ** 2, axis=1)
    i = int(np.argmin(d2))
    return i, math.sqrt(d2[i])


def _nearest_many(words: np.ndarray, E: np.ndarray, chunk: int = 4096):
    idx = np.empty(len(E), dtype=np.int64)
    dist = np.empty(len(E))
    if len(words) == 0:
        idx[:] = -1
        dist[:] = np.inf
        return idx, dist
    for s in range(0, len(E), chunk):
        block = E[s: s + chunk]
        d2 = ((block[:, None, :] - words[None, :, :]) ** 2).sum(axis=2)
        i = np.argmin(d2, axis=1)
        idx[s: s + chunk] = i
        dist[s: s + chunk] = np.sqrt(d2[np.arange(len(block)), i])
    return idx, dist


def incremental_quantize(errors: dict, codebook: Codebook, eps1: float):
    """Assign every error to a codeword within ``eps1``, appending codewords as needed.

    Lookups go against the codebook as it was on entry; errors that are not served
    are then handled one by one in ascending trajectory id, each either reusing a
    codeword appended earlier in the same call or becoming a new codeword itself.
    Returns ``(codebook, {tid: index})``; the codebook is updated in place.
    """
    if not eps1 > 0:
        raise ValueError("eps1 must be positive")
    ids = sorted(errors)
    if not ids:
        return codebook, {}
    E = np.array([errors[i] for i in ids], dtype=np.float64).reshape(-1, 2)
    bad = ~np.isfinite(E).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite prediction error for trajectory {ids[int(np.argmax(bad))]}")
    n_snapshot = len(codebook)
    idx, dist = _nearest_many(codebook.codewords, E)
    out = {}
    fresh: list[int] = []
    for row, tid in enumerate(ids):
        if dist[row] <= eps1:
            out[tid] = int(idx[row])
            continue
        e = E[row]
        if fresh:
            words = codebook.codewords[n_snapshot:]
            d2 = np.sum((words - e) ** 2, axis=1)
            j = int(np.argmin(d2))
            if math.sqrt(d2[j]) <= eps1:
                out[tid] = n_snapshot + j
                continue
        out[tid] = codebook.append(e)
        fresh.append(out[tid])
    return codebook, out


def kmeans_codewords(E: np.ndarray, n_words: int, max_iter: int = 50) -> np.ndarray:
    """Deterministic Lloyd k-means centroids used for fixed-budget codebooks."""
    from .partitioner import kmeans

    centers, _ = kmeans(E, n_words, max_iter=max_iter)
    return centers


def budget_quantize(errors: dict, codebook: Codebook, bits: int):
    """Fixed-size alternative: learn ``2**bits`` codewords for this timestamp only.

    Mirrors the matched-budget protocol used to compare quantizers; no error bound.
    """
    ids = sorted(errors)
    if not ids:
        return codebook, {}
    E = np.array([errors[i] for i in ids], dtype=np.float64).reshape(-1, 2)
    centers = kmeans_codewords(E, 1 << bits)
    base = len(codebook)
    for c in centers:
        codebook.append(c)
    idx, _ = _nearest_many(centers, E)
    return codebook, {tid: base + int(i) for tid, i in zip(ids, idx)}


class EpqState:
    """Running state of the quantizer: reconstructed windows and summary parts."""

    def __init__(self, config: Config):
        self.config = config
        self.codebook = Codebook()
        self.windows: dict[int, list[tuple[float, float]]] = {}
        self.coefficients: list[np.ndarray] = []
        self.assignments: dict[int, list[int]] = {}

    def history(self, tid: int) -> list[tuple[float, float]]:
        return self.windows.get(tid, [])


def epq_step(batch: StreamBatch, state: EpqState, partitions=None) -> dict[int, np.ndarray]:
    """Predict, quantize and reconstruct every point of one timestamp.

    ``partitions`` is a list of member-id lists (one coefficient vector each);
    ``None`` means one global predictor. Returns {tid: reconstructed point}.
    """
    cfg = state.config
    k = cfg.k
    ids = batch.ids()
    if partitions is None:
        partitions = [ids]
    actual = {tid: np.asarray(batch.entries[tid], dtype=np.float64) for tid in ids}
    coeffs = np.zeros((len(partitions), k))
    preds: dict[int, np.ndarray] = {}
    for p, members in enumerate(partitions):
        ready = [m for m in members if len(state.history(m)) >= k]
        if cfg.predicts and ready:
            H = np.array([state.history(m)[-k:] for m in ready])
            Y = np.array([actual[m] for m in ready])
            # stored as float32; predicting with the rounded values keeps replay exact
            coeffs[p] = fit_coefficients(H, Y, k).astype(np.float32)
            P = predict(coeffs[p], H)
            for m, pr in zip(ready, P):
                preds[m] = pr
        for m in members:
            if m not in preds:
                preds[m] = np.zeros(2)
    errors = {tid: actual[tid] - preds[tid] for tid in ids}
    if cfg.error_bounded:
        # the margin absorbs rounding in pred + codeword so the bound holds exactly
        _, assign = incremental_quantize(errors, state.codebook, cfg.eps1 * (1 - BOUND_MARGIN))
    else:
        _, assign = budget_quantize(errors, state.codebook, cfg.codebook_bits)
    recon = {}
    for tid in ids:
        r = preds[tid] + state.codebook[assign[tid]]
        if cfg.error_bounded and math.hypot(*(actual[tid] - r)) > cfg.eps1:
            assign[tid] = state.codebook.append(errors[tid])
            r = preds[tid] + state.codebook[assign[tid]]
            if math.hypot(*(actual[tid] - r)) > cfg.eps1:
                raise InvariantError(f"trajectory {tid} at t={batch.t}: deviation exceeds eps1")
        recon[tid] = r
        w = state.windows.setdefault(tid, [])
        w.append((float(r[0]), float(r[1])))
        if len(w) > k:
            del w[0]
        state.assignments.setdefault(tid, []).append(assign[tid])
    state.coefficients.append(coeffs)
    return recon
