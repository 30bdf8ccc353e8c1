"""Shared domain types, configuration and the summary container."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEGREES_PER_METER = 1.0 / 111_320.0

PARTITION_MODES = ("spatial", "autocorrelation", "single", "none")

# default eps_p per partition mode (coordinate units / AR-parameter units)
DEFAULT_EPS_P = {"spatial": 0.1, "autocorrelation": 0.01, "single": 0.1, "none": 0.1}


class InvariantError(RuntimeError):
    """An internal guarantee (error bound, disjointness, ...) was violated."""


@dataclass(frozen=True)
class TrajectoryPoint:
    x: float
    y: float
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"timestamp must be >= 1, got {self.t}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinate ({self.x}, {self.y})")


@dataclass
class Trajectory:
    id: int
    points: list[TrajectoryPoint]

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"trajectory id must be non-negative, got {self.id}")
        if not self.points:
            raise ValueError(f"trajectory {self.id} is empty")
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"trajectory {self.id}: timestamps not strictly increasing")

    def __len__(self):
        return len(self.points)

    @property
    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    @classmethod
    def from_xy(cls, tid: int, xy, t0: int = 1) -> "Trajectory":
        return cls(tid, [TrajectoryPoint(float(x), float(y), t0 + i) for i, (x, y) in enumerate(xy)])


@dataclass
class StreamBatch:
    """All trajectory points observed at one timestamp, keyed by trajectory id."""

    t: int
    entries: dict[int, tuple[float, float]]

    def ids(self) -> list[int]:
        return sorted(self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class Config:
    eps1: float = 0.001
    eps_p: Optional[float] = None
    eps_s: float = 0.1
    eps_c: float = 0.5
    eps_d: float = 0.5
    g_c: float = 100.0  # meters
    g_s: float = 50.0  # meters
    k: int = 2
    partition_mode: str = "spatial"
    units_per_meter: float = DEGREES_PER_METER
    use_cqc: bool = True
    # fixed per-timestamp codebook of 2**codebook_bits words; disables the eps1 bound
    codebook_bits: Optional[int] = None
    page_size: int = 1 << 20

    def __post_init__(self):
        if self.partition_mode not in PARTITION_MODES:
            raise ValueError(f"unknown partition_mode {self.partition_mode!r}")
        if self.eps_p is None:
            object.__setattr__(self, "eps_p", DEFAULT_EPS_P[self.partition_mode])
        for name in ("eps1", "eps_p", "eps_s", "eps_c", "eps_d", "g_c", "g_s", "units_per_meter"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.use_cqc and self.g_s > self.eps1_meters * (1 + 1e-12):
            raise ValueError(
                f"g_s ({self.g_s} m) must not exceed eps1 in meters ({self.eps1_meters:.3f} m)")
        if self.codebook_bits is not None:
            if not 0 <= self.codebook_bits <= 24:
                raise ValueError("codebook_bits must be in [0, 24]")
            if self.use_cqc:
                raise ValueError("a fixed codebook budget has no eps1 bound; disable CQC")
        if self.page_size < 64:
            raise ValueError("page_size too small")

    @property
    def eps1_meters(self) -> float:
        return self.eps1 / self.units_per_meter

    @property
    def g_c_units(self) -> float:
        return self.g_c * self.units_per_meter

    @property
    def g_s_units(self) -> float:
        return self.g_s * self.units_per_meter

    @property
    def predicts(self) -> bool:
        return self.partition_mode != "none"

    @property
    def error_bounded(self) -> bool:
        return self.codebook_bits is None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def replace(self, **kw) -> "Config":
        return dataclasses.replace(self, **kw)


@dataclass
class TrajectoryRecord:
    """Per-trajectory slice of the summary; entry n describes timestamp start + n."""

    start: int
    length: int
    partition: np.ndarray  # uint32, partition index within the timestamp's partition list
    codeword: np.ndarray  # uint32, index into the codebook
    cqc_bits: np.ndarray  # uint32, packed quadrant labels (root first)
    cqc_levels: np.ndarray  # uint8, number of levels in the code

    def __eq__(self, other):
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        return (self.start == other.start and self.length == other.length
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("partition", "codeword", "cqc_bits", "cqc_levels")))


@dataclass
class Summary:
    """Finalized output of summarization.

    ``coefficients[t - 1]`` is a ``(q_t, k)`` array with one coefficient vector per
    partition at timestamp ``t``; ``partition_ids[t - 1]`` holds the stable ids of
    those partitions. ``checkpoints`` maps a period start to the last ``k``
    reconstructed points (oldest first) of every trajectory alive at that start.
    """

    config: Config
    coefficients: list[np.ndarray] = field(default_factory=list)
    partition_ids: list[np.ndarray] = field(default_factory=list)
    codebook: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    trajectories: dict[int, TrajectoryRecord] = field(default_factory=dict)
    cqc_center: tuple[int, int] = (0, 0)  # (bits, levels) of the fixed centre-cell code
    checkpoints: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)
    index: Optional[object] = None  # index.TemporalIndex

    def end(self, tid: int) -> int:
        r = self.trajectories[tid]
        return r.start + r.length - 1

    @property
    def n_timestamps(self) -> int:
        return len(self.coefficients)

    @property
    def n_points(self) -> int:
        return sum(r.length for r in self.trajectories.values())

    def __eq__(self, other):
        if not isinstance(other, Summary):
            return NotImplemented
        if self.config != other.config or self.cqc_center != other.cqc_center:
            return False
        if len(self.coefficients) != len(other.coefficients):
            return False
        if not all(np.array_equal(a, b) for a, b in zip(self.coefficients, other.coefficients)):
            return False
        if not all(np.array_equal(a, b) for a, b in zip(self.partition_ids, other.partition_ids)):
            return False
        if not np.array_equal(self.codebook, other.codebook):
            return False
        if self.trajectories != other.trajectories:
            return False
        if self.checkpoints.keys() != other.checkpoints.keys():
            return False
        for ts, cps in self.checkpoints.items():
            ocps = other.checkpoints[ts]
            if cps.keys() != ocps.keys() or not all(np.array_equal(cps[i], ocps[i]) for i in cps):
                return False
        return self.index == other.index


def summary_size_bytes(summary: Summary) -> int:
    """Byte length of the serialized summary."""
    from .storage import serialize

    return len(serialize(summary))
