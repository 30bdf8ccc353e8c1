"""Per-timestamp grouping of trajectories for partition-wise prediction.

Points (spatial mode) or AR(k) parameter vectors (autocorrelation mode) are
clustered so every member lies within ``eps_p`` of its partition centroid.
From scratch, k-means is run with q = 1, 2, 4, 6, ... clusters until the bound
holds everywhere. Across timestamps the previous partitions are carried over
and only the members that break the bound are re-clustered.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROUND_STEP = 2
MAX_ITER = 50
MOVE_TOL = 1e-9


@dataclass
class Partition:
    id: int
    members: list[int]
    centroid: np.ndarray
    merge_count: int = 0


@dataclass
class PartitionSet:
    timestamp: int
    partitions: list[Partition] = field(default_factory=list)
    next_id: int = 0

    def __len__(self):
        return len(self.partitions)

    def member_lists(self) -> list[list[int]]:
        return [p.members for p in self.partitions]

    def lookup(self) -> dict[int, int]:
        """trajectory id -> position of its partition in ``partitions``."""
        return {m: i for i, p in enumerate(self.partitions) for m in p.members}


def farthest_point_seeds(X: np.ndarray, q: int) -> list[int]:
    """Deterministic seeding: row 0 first, then repeatedly the farthest row.

    Stops early once every remaining row coincides with a seed.
    """
    seeds = [0]
    d = np.sum((X - X[0]) ** 2, axis=1)
    while len(seeds) < q:
        j = int(np.argmax(d))
        if d[j] <= 0.0:
            break
        seeds.append(j)
        d = np.minimum(d, np.sum((X - X[j]) ** 2, axis=1))
    return seeds


def kmeans(X, q: int, max_iter: int = MAX_ITER, tol: float = MOVE_TOL):
    """Lloyd's k-means with farthest-point seeding; empty clusters are dropped.

    Returns ``(centers, labels)`` with labels indexing into centers.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n == 0:
        return np.zeros((0,) + X.shape[1:]), np.zeros(0, dtype=np.int64)
    centers = X[farthest_point_seeds(X, max(1, min(q, n)))].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        counts = np.bincount(labels, minlength=len(centers))
        keep = counts > 0
        new = np.zeros_like(centers)
        np.add.at(new, labels, X)
        new[keep] /= counts[keep, None]
        if not keep.all():
            remap = np.cumsum(keep) - 1
            labels = remap[labels]
            new = new[keep]
            centers = centers[keep]
        moved = np.max(np.abs(new - centers)) if len(new) else 0.0
        centers = new
        if moved < tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    used = np.unique(labels)
    if len(used) < len(centers):
        remap = np.full(len(centers), -1)
        remap[used] = np.arange(len(used))
        labels = remap[labels]
        centers = np.array([X[labels == c].mean(axis=0) for c in range(len(used))])
    return centers, labels


def _within_bound(X, centers, labels, eps_p) -> bool:
    return bool(np.all(np.sqrt(np.sum((X - centers[labels]) ** 2, axis=1)) <= eps_p))


def cluster_rounds(X: np.ndarray, eps_p: float):
    """Grow q by ROUND_STEP per round until every cluster respects eps_p."""
    n = len(X)
    q = 1
    while True:
        centers, labels = kmeans(X, q)
        if _within_bound(X, centers, labels, eps_p):
            return centers, labels
        if q >= n:
            # singletons are the fallback; duplicates still share a cluster
            return kmeans(X, n)
        q = min(n, ROUND_STEP if q == 1 else q + ROUND_STEP)


def _feature_matrix(features: dict, ids: list[int]) -> np.ndarray:
    return np.array([np.asarray(features[i], dtype=np.float64).ravel() for i in ids])


def partition_points(features: dict, eps_p: float, mode: str = "spatial",
                     timestamp: int = 0, first_id: int = 0) -> PartitionSet:
    """From-scratch partitioning of one timestamp's features.

    ``mode`` only documents what the feature vectors are; both modes use the
    Euclidean distance between vectors.
    """
    if not features:
        raise ValueError("no features to partition")
    if not eps_p > 0:
        raise ValueError("eps_p must be positive")
    ids = sorted(features)
    X = _feature_matrix(features, ids)
    centers, labels = cluster_rounds(X, eps_p)
    parts = []
    for c in range(len(centers)):
        members = [ids[r] for r in np.flatnonzero(labels == c)]
        parts.append(Partition(first_id + c, members, X[labels == c].mean(axis=0)))
    parts.sort(key=lambda p: p.members[0])
    for off, p in enumerate(parts):
        p.id = first_id + off
    return PartitionSet(timestamp, parts, first_id + len(parts))


def _max_dev(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = X.mean(axis=0)
    return c, np.sqrt(np.sum((X - c) ** 2, axis=1))


def incremental_repartition(prev: PartitionSet, features: dict, eps_p: float,
                            mode: str = "spatial", timestamp: int | None = None) -> PartitionSet:
    """Carry partitions forward one timestamp.

    1. every trajectory keeps its previous partition (newcomers join the nearest
       partition whose centroid is within eps_p, else they are left over);
    2. in a partition that breaks the bound, the member farthest from the
       centroid is evicted repeatedly until the bound holds; all evicted and
       left-over trajectories are clustered from scratch into new partitions;
    3. each new partition merges into the lowest-id partition whose centroid is
       within eps_p, each partition taking part in at most one merge. A merged
       partition is not re-split in the same step.
    """
    t = prev.timestamp + 1 if timestamp is None else timestamp
    ids = sorted(features)
    present = set(ids)
    carried: list[Partition] = []
    for p in prev.partitions:
        members = [m for m in p.members if m in present]
        if members:
            carried.append(Partition(p.id, members, p.centroid.copy()))
    known = {m for p in carried for m in p.members}
    newcomers = [i for i in ids if i not in known]

    leftovers: list[int] = []
    for p in carried:
        X = _feature_matrix(features, p.members)
        c, dev = _max_dev(X)
        members = list(p.members)
        while dev.max() > eps_p:
            worst = int(np.argmax(dev))
            leftovers.append(members.pop(worst))
            X = np.delete(X, worst, axis=0)
            c, dev = _max_dev(X)
        p.members = members
        p.centroid = c

    for tid in newcomers:
        f = np.asarray(features[tid], dtype=np.float64).ravel()
        best, best_d = None, None
        for p in carried:
            d = float(np.sqrt(np.sum((p.centroid - f) ** 2)))
            if d <= eps_p and (best_d is None or d < best_d):
                best, best_d = p, d
        if best is None:
            leftovers.append(tid)
            continue
        X = _feature_matrix(features, best.members + [tid])
        c, dev = _max_dev(X)
        if dev.max() <= eps_p:
            best.members.append(tid)
            best.members.sort()
            best.centroid = c
        else:
            leftovers.append(tid)

    next_id = prev.next_id
    fresh: list[Partition] = []
    if leftovers:
        sub = partition_points({i: features[i] for i in leftovers}, eps_p, mode, t, next_id)
        fresh = sub.partitions
        next_id = sub.next_id

    everyone = sorted(carried + fresh, key=lambda p: p.id)
    for p in fresh:
        if p.merge_count:
            continue
        for q in everyone:
            if q is p or q.merge_count or not q.members:
                continue
            if float(np.sqrt(np.sum((q.centroid - p.centroid) ** 2))) <= eps_p:
                q.members = sorted(q.members + p.members)
                p.members = []
                q.centroid = _feature_matrix(features, q.members).mean(axis=0)
                q.merge_count = p.merge_count = 1
                break
    parts = [p for p in everyone if p.members]
    return PartitionSet(t, parts, next_id)


def single_partition(ids, timestamp: int, features: dict | None = None) -> PartitionSet:
    ids = sorted(ids)
    c = np.zeros(2)
    if features:
        c = _feature_matrix(features, ids).mean(axis=0)
    return PartitionSet(timestamp, [Partition(0, ids, c)], 1)


def max_deviation(pset: PartitionSet, features: dict) -> float:
    """Largest member-to-centroid distance, recomputing centroids from ``features``."""
    worst = 0.0
    for p in pset.partitions:
        _, dev = _max_dev(_feature_matrix(features, p.members))
        worst = max(worst, float(dev.max()))
    return worst
