"""Dataset parsers, a seeded synthetic generator and stream batching.

Timestamps are per-trajectory sample indices: the i-th sample of every
trajectory gets t = i (1-based) regardless of wall-clock time.

Synthetic data uses numpy's PCG64 bit generator (``numpy.random.default_rng``)
seeded with the given integer. For each trajectory, in id order, it draws:
a start point uniform in ``[0, extent)^2``, then

* ``random_walk``: i.i.d. N(0, sigma^2) steps per axis;
* ``constant_velocity``: a heading uniform in [0, 2*pi) and a speed uniform in
  ``[speed/2, speed)``, plus N(0, sigma^2) jitter per point;
* ``ar``: an AR(2) process per axis on the offset from the start point with
  parameters (``ar1``, ``ar2``) and N(0, sigma^2) innovations, plus a drift;
* ``taxi``: a speed uniform in ``[speed/2, speed)`` along a heading that turns
  by +-90 degrees with probability 0.1 per step, with N(0, sigma^2) jitter.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import StreamBatch, Trajectory, TrajectoryPoint

log = logging.getLogger(__name__)

CANONICAL_HEADER = ["traj_id", "t", "x", "y"]
MOTIONS = ("random_walk", "constant_velocity", "ar", "taxi")
PORTO_HEADER = ["TRIP_ID", "CALL_TYPE", "ORIGIN_CALL", "ORIGIN_STAND", "TAXI_ID", "TIMESTAMP",
                "DAY_TYPE", "MISSING_DATA", "POLYLINE"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class DatasetSpec:
    format: str
    path: str | None = None
    min_length: int = 30
    max_trajectories: int | None = None
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format not in ("canonical_csv", "porto_csv", "geolife_plt", "synthetic"):
            raise ValueError(f"unknown dataset format {self.format!r}")
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")


@dataclass
class ParseReport:
    skipped: int = 0
    dropped_short: int = 0


def parse_canonical(path) -> list[Trajectory]:
    """Rows ``traj_id,t,x,y`` (header required); rows may appear in any order."""
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != CANONICAL_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(CANONICAL_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                tid, t = int(row[0]), int(row[1])
                x, y = float(row[2]), float(row[3])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field in {row}") from None
            if tid < 0 or t < 1 or not (math.isfinite(x) and math.isfinite(y)):
                raise DataError(f"{path}:{lineno}: invalid values {row}")
            pts = rows.setdefault(tid, {})
            if t in pts:
                raise DataError(f"{path}:{lineno}: duplicate row for trajectory {tid} at t={t}")
            pts[t] = (x, y)
    return [Trajectory(tid, [TrajectoryPoint(x, y, t) for t, (x, y) in sorted(pts.items())])
            for tid, pts in sorted(rows.items())]


def write_canonical(trajectories, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_HEADER)
        for tr in trajectories:
            for p in tr.points:
                w.writerow([tr.id, p.t, repr(float(p.x)), repr(float(p.y))])


def parse_porto(path, min_length: int = 30, max_trajectories: int | None = None,
                report: ParseReport | None = None) -> list[Trajectory]:
    """Porto taxi CSV: each row's POLYLINE ([[lon, lat], ...]) becomes one trajectory.

    Trajectory ids are assigned 0, 1, ... in file order over the kept rows.
    """
    report = report if report is not None else ParseReport()
    out: list[Trajectory] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "POLYLINE" not in reader.fieldnames:
            raise DataError(f"{path}: no POLYLINE column")
        for row in reader:
            try:
                poly = json.loads(row["POLYLINE"])
                pts = [(float(p[0]), float(p[1])) for p in poly]
                if not all(math.isfinite(a) and math.isfinite(b) for a, b in pts):
                    raise ValueError("non-finite coordinate")
            except (ValueError, TypeError, IndexError, KeyError):
                report.skipped += 1
                continue
            if len(pts) < min_length or not pts:
                report.dropped_short += 1
                continue
            out.append(Trajectory.from_xy(len(out), pts))
            if max_trajectories is not None and len(out) >= max_trajectories:
                break
    if report.skipped:
        log.warning("%s: skipped %d malformed rows", path, report.skipped)
    return out


def write_porto(trajectories, path) -> None:
    """Porto-style CSV (one POLYLINE per trajectory, [lon, lat] pairs); other columns are filler."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PORTO_HEADER)
        for tr in trajectories:
            poly = json.dumps([[float(p.x), float(p.y)] for p in tr.points])
            w.writerow([str(tr.id), "C", "", "", "0", "0", "A", "False", poly])


def parse_plt(path) -> list[tuple[float, float]]:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 6 or not lines[0].startswith("Geolife trajectory"):
        raise DataError(f"{path}: missing PLT header")
    pts = []
    for lineno, line in enumerate(lines[6:], start=7):
        if not line.strip():
            continue
        f = line.split(",")
        try:
            lat, lon = float(f[0]), float(f[1])
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: malformed PLT row") from None
        pts.append((lon, lat))
    return pts


def parse_geolife(directory, min_length: int = 1, max_trajectories: int | None = None,
                  report: ParseReport | None = None) -> list[Trajectory]:
    """One trajectory per ``.plt`` file (recursive, lexicographic path order); x=lon, y=lat."""
    report = report if report is not None else ParseReport()
    out: list[Trajectory] = []
    for path in sorted(Path(directory).rglob("*.plt")):
        try:
            pts = parse_plt(path)
        except DataError as exc:
            log.warning("%s", exc)
            report.skipped += 1
            continue
        if len(pts) < min_length or not pts:
            report.dropped_short += 1
            continue
        out.append(Trajectory.from_xy(len(out), pts))
        if max_trajectories is not None and len(out) >= max_trajectories:
            break
    return out


def synth_generate(n: int, steps: int, motion: str = "random_walk", sigma: float = 1.0,
                   extent: float = 1000.0, seed: int = 0, speed: float = 10.0,
                   ar1: float = 0.5, ar2: float = 0.3, drift: float = 0.0) -> list[Trajectory]:
    """Deterministic synthetic trajectories (see module docstring for the recipe)."""
    if motion not in MOTIONS:
        raise ValueError(f"unknown motion {motion!r}; choose from {MOTIONS}")
    if n < 0 or steps < 1:
        raise ValueError("need n >= 0 and steps >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for tid in range(n):
        start = rng.uniform(0.0, extent, size=2)
        if motion == "random_walk":
            steps_xy = rng.normal(0.0, sigma, size=(steps - 1, 2))
            xy = np.vstack([start, start + np.cumsum(steps_xy, axis=0)])
        elif motion == "constant_velocity":
            heading = rng.uniform(0.0, 2 * math.pi)
            v = rng.uniform(speed / 2, speed)
            vel = np.array([v * math.cos(heading), v * math.sin(heading)])
            i = np.arange(steps, dtype=np.float64)[:, None]
            xy = start + i * vel
            if sigma > 0:
                xy = xy + rng.normal(0.0, sigma, size=xy.shape)
        elif motion == "taxi":
            v = rng.uniform(speed / 2, speed)
            heading = rng.integers(0, 4)
            turns = rng.random(steps - 1) < 0.1
            side = rng.choice((-1, 1), size=steps - 1)
            hs = (heading + np.cumsum(np.where(turns, side, 0))) % 4
            unit = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])[hs]
            xy = np.vstack([start, start + np.cumsum(v * unit, axis=0)])
            if sigma > 0:
                xy = xy + rng.normal(0.0, sigma, size=xy.shape)
        else:
            d = np.zeros((steps, 2))
            eps = rng.normal(0.0, sigma, size=(steps, 2))
            for s in range(steps):
                d[s] = eps[s]
                if s >= 1:
                    d[s] += ar1 * d[s - 1]
                if s >= 2:
                    d[s] += ar2 * d[s - 2]
            xy = start + d + drift * np.arange(steps)[:, None]
        out.append(Trajectory.from_xy(tid, xy))
    return out


def porto_like_sample(n: int = 500, seed: int = 0, min_length: int = 30,
                      max_length: int = 120) -> list[Trajectory]:
    """Taxi traces around Porto (lon/lat, 15 s sampling) of varying length."""
    rng = np.random.default_rng(seed)
    base = synth_generate(n, max_length, "taxi", sigma=0.00003, extent=0.08, seed=seed,
                          speed=0.0015)
    out = []
    for tr in base:
        m = int(rng.integers(min_length, max_length + 1))
        xy = tr.xy[:m] + np.array([-8.66, 41.12])
        out.append(Trajectory.from_xy(tr.id, xy))
    return out


def to_batches(trajectories) -> list[StreamBatch]:
    """One batch per timestamp that has points, in ascending t."""
    by_t: dict[int, dict[int, tuple[float, float]]] = {}
    for tr in trajectories:
        for p in tr.points:
            entries = by_t.setdefault(p.t, {})
            if tr.id in entries:
                raise DataError(f"trajectory {tr.id} appears twice at t={p.t}")
            entries[tr.id] = (p.x, p.y)
    return [StreamBatch(t, by_t[t]) for t in sorted(by_t)]


def load_dataset(spec: DatasetSpec) -> list[Trajectory]:
    if spec.format == "canonical_csv":
        trs = parse_canonical(spec.path)
        trs = [t for t in trs if len(t) >= spec.min_length]
    elif spec.format == "porto_csv":
        trs = parse_porto(spec.path, spec.min_length, spec.max_trajectories)
    elif spec.format == "geolife_plt":
        trs = parse_geolife(spec.path, spec.min_length, spec.max_trajectories)
    else:
        trs = synth_generate(**spec.synth)
    if spec.max_trajectories is not None:
        trs = trs[: spec.max_trajectories]
    return trs
