"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import functools
import math
import os
import sys
import tempfile
import time
from fractions import Fraction

import numpy as np

from ppqtraj import Config, summarize
from ppqtraj.cli import main as cli_main
from ppqtraj.codec import decode_ids, encode_ids
from ppqtraj.core import DEGREES_PER_METER
from ppqtraj.cqc import CoordinateQuadtree, CqcCode, pad_sc, root_side
from ppqtraj.evaluation import compression_ratio, mae, oracle_replay
from ppqtraj.index import TemporalIndex, build_pi, cell_of
from ppqtraj.ingest import parse_porto, porto_like_sample, synth_generate, to_batches, write_porto
from ppqtraj.query import Decoder, strq_approx, strq_exact, tpq
from ppqtraj.storage import deserialize, serialize

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover - direct script run from elsewhere
    ACCEPTANCE_LINES = []

BOUND_SLACK = 1e-12


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


# corpora -----------------------------------------------------------------------

SYNTH = {
    "random_walk": dict(motion="random_walk", sigma=0.0003),
    "constant_velocity": dict(motion="constant_velocity", sigma=0.00005, speed=0.0005),
    "ar": dict(motion="ar", sigma=0.0001, drift=0.0002),
}


@functools.lru_cache(maxsize=None)
def corpus(name: str):
    if name == "porto":
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "porto_sample.csv")
            write_porto(porto_like_sample(500, seed=0), path)
            return parse_porto(path)
    kw = dict(SYNTH[name])
    return synth_generate(200, 100, kw.pop("motion"), extent=0.05, seed=1, **kw)


CORPORA = ("random_walk", "constant_velocity", "ar", "porto")


@functools.lru_cache(maxsize=None)
def summary_of(name: str, mode: str = "spatial"):
    """Summary after a serialize/deserialize round trip, plus the encoder's own output."""
    s, b = summarize(to_batches(corpus(name)), Config(partition_mode=mode),
                     keep_reconstruction=True)
    return deserialize(serialize(s)), b


def _deviation(a, b) -> np.ndarray:
    return np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])


# criteria ----------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    runs = [(n, "spatial") for n in CORPORA] + [(n, "autocorrelation") for n in SYNTH]
    worst, total, over = 0.0, 0, 0
    for name, mode in runs:
        s, b = summary_of(name, mode)
        dec = Decoder(s)
        eps1 = s.config.eps1
        for tr in corpus(name):
            r = dec.full_replay(tr.id, refine=False)
            if not np.array_equal(r, np.array(b.reconstructed[tr.id])):
                over += len(r)
            d = _deviation(tr.xy, r)
            over += int((d > eps1).sum())
            total += len(d)
            worst = max(worst, float(d.max()) / eps1)
    elapsed = time.perf_counter() - t0
    ok = over == 0 and elapsed < 60
    return ok, (f"{total} points over {len(runs)} runs, violations={over}, "
                f"max |T-T^|/eps1={worst:.6f}, {elapsed:.1f}s (limit 60s)")


def criterion_2():
    total, over, worst = 0, 0, 0.0
    for name in CORPORA:
        s, _ = summary_of(name)
        bound = math.sqrt(2) / 2 * s.config.g_s_units
        dec = Decoder(s)
        for tr in corpus(name):
            d = _deviation(tr.xy, dec.full_replay(tr.id))
            over += int((d > bound + BOUND_SLACK).sum())
            total += len(d)
            worst = max(worst, float(d.max()) / bound)
    return over == 0, (f"{total} refined points on {len(CORPORA)} corpora, violations={over}, "
                       f"max |T-T'|/bound={worst:.6f}")


def _true_center(width: int, height: int, col: int, row: int):
    side = root_side(width, height)
    if side == 1:
        return Fraction(0), Fraction(0)
    half = Fraction(side, 2)
    return col + Fraction(1, 2) - half, row + Fraction(1, 2) - half


def criterion_3():
    t0 = time.perf_counter()
    cells = fails = 0
    for n in range(1, 65):
        tree = CoordinateQuadtree(n, n)
        for col in range(n):
            for row in range(n):
                cx, cy = tree.decode2(tree.encode(col, row))
                if (Fraction(cx, 2), Fraction(cy, 2)) != _true_center(n, n, col, row):
                    fails += 1
                cells += 1
    five = CoordinateQuadtree(5, 5)
    anchors = (pad_sc((-3, 2)) == (-4, 4)
               and five.decode(CqcCode.from_string("001110")) == (-1.5, 0.5)
               and str(five.encode(1, 3)) == "001110")
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and anchors and elapsed < 30
    return ok, (f"{cells} cells of grids 1x1..64x64, failures={fails}, anchors "
                f"{'reproduced' if anchors else 'WRONG'}, {elapsed:.1f}s (limit 30s)")


def strq_queries(s, refined, trajectories, n: int, seed: int):
    """Mix of queries at refined points, at original points and uniform in the extent."""
    rng = np.random.default_rng(seed)
    ids = sorted(refined)
    allxy = np.vstack([tr.xy for tr in trajectories])
    lo, hi = allxy.min(axis=0), allxy.max(axis=0)
    t_max = max(s.end(i) for i in ids)
    by_id = {tr.id: tr for tr in trajectories}
    out = []
    for q in range(n):
        kind = q % 4
        if kind == 3:
            x, y = rng.uniform(lo, hi)
            t = int(rng.integers(1, t_max + 1))
        else:
            tid = ids[int(rng.integers(len(ids)))]
            m = int(rng.integers(len(refined[tid])))
            t = s.trajectories[tid].start + m
            base = refined[tid][m] if kind < 2 else by_id[tid].xy[m]
            x, y = base + (rng.normal(0, s.config.g_c_units / 2, 2) if kind == 1 else 0.0)
        out.append((float(x), float(y), t))
    return out


def refined_scan(refined, starts, x, y, t, g_c):
    qc = cell_of(x, y, g_c)
    out = []
    for tid, P in refined.items():
        m = t - starts[tid]
        if 0 <= m < len(P) and cell_of(P[m, 0], P[m, 1], g_c) == qc:
            out.append(tid)
    return sorted(out)


def criterion_4():
    t0 = time.perf_counter()
    mismatches, nonempty, per = 0, 0, []
    for k, name in enumerate(CORPORA):
        s, _ = summary_of(name)
        dec = Decoder(s)
        refined = {tid: dec.full_replay(tid) for tid in s.trajectories}
        starts = {tid: r.start for tid, r in s.trajectories.items()}
        bad = 0
        for x, y, t in strq_queries(s, refined, corpus(name), 10_000, seed=100 + k):
            got = strq_exact(s.index, s, x, y, t, dec)
            truth = refined_scan(refined, starts, x, y, t, s.index.g_c)
            bad += got != truth
            nonempty += bool(truth)
        mismatches += bad
        per.append(f"{name}={bad}")
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 300
    return ok, (f"4 x 10000 queries ({nonempty} with hits), set mismatches {', '.join(per)}, "
                f"recall=precision={'1.000' if not mismatches else '<1'}, "
                f"{elapsed:.1f}s (limit 300s)")


def drifting_stream():
    return synth_generate(150, 80, "random_walk", sigma=0.0003, extent=0.05, seed=3)


def fresh_pi_answer(positions, x, y, t, cfg):
    """Oracle: a partition index built from scratch for timestamp t alone."""
    if not positions:
        return []
    g_c = cfg.g_c_units
    pi = build_pi(positions, cfg.eps_s, g_c, t)
    qc = cell_of(x, y, g_c)
    if pi.region_of(*qc) < 0:
        return []
    return sorted(i for i, (px, py) in positions.items() if cell_of(px, py, g_c) == qc)


def criterion_5():
    trs = drifting_stream()
    cfg = Config()
    s, _ = summarize(to_batches(trs), cfg)
    idx = s.index
    batches = {b.t: b.entries for b in to_batches(trs)}
    rng = np.random.default_rng(5)
    allxy = np.vstack([tr.xy for tr in trs])
    lo, hi = allxy.min(axis=0), allxy.max(axis=0)
    bad = 0
    for q in range(1000):
        t = int(rng.integers(1, 81))
        pos = batches.get(t, {})
        if q % 3 == 2 or not pos:
            x, y = rng.uniform(lo, hi)
        else:
            ids = sorted(pos)
            x, y = np.asarray(pos[ids[int(rng.integers(len(ids)))]]) + rng.normal(0, 0.0005, 2)
        bad += strq_approx(idx, float(x), float(y), t) != fresh_pi_answer(pos, x, y, t, cfg)
    rebuilds = []
    for eps_d in (0.2, 0.4, 0.6, 0.8):
        ti = TemporalIndex(cfg.g_c_units, cfg.eps_s, cfg.eps_c, eps_d, cfg.page_size)
        for b in to_batches(trs):
            ti.update(b.t, b.entries)
        rebuilds.append(ti.rebuilds)
    monotone = all(b <= a for a, b in zip(rebuilds, rebuilds[1:]))
    ok = bad == 0 and idx.rebuilds >= 3 and idx.insertions >= 3 and monotone
    return ok, (f"1000 queries, mismatches={bad}; stream rebuilds={idx.rebuilds} "
                f"insertions={idx.insertions}; rebuilds over eps_d 0.2..0.8 = {rebuilds}")


def criterion_6():
    checked = identical = from_checkpoint = 0
    tpq_points = tpq_over = 0
    for k, name in enumerate(("random_walk", "porto")):
        s, _ = summary_of(name)
        dec = Decoder(s)
        oracle = oracle_replay(corpus(name), s.config)
        rng = np.random.default_rng(60 + k)
        ids = sorted(s.trajectories)
        for _ in range(500):
            tid = ids[int(rng.integers(len(ids)))]
            rec = s.trajectories[tid]
            l = int(rng.integers(1, min(50, rec.length) + 1))
            t0 = rec.start + int(rng.integers(0, rec.length - l + 1))
            got = dec.reconstruct_range(tid, t0, l)
            full = dec.full_replay(tid)[t0 - rec.start: t0 - rec.start + l]
            ref = oracle[tid][t0 - rec.start: t0 - rec.start + l]
            checked += 1
            identical += np.array_equal(got, full) and np.array_equal(got, ref)
            from_checkpoint += dec.replay_start(tid, t0)[0] > rec.start
        bound = math.sqrt(2) / 2 * s.config.g_s_units
        by_id = {tr.id: tr.xy for tr in corpus(name)}
        for l in (10, 20, 30, 40, 50):
            for _ in range(20):
                tid = ids[int(rng.integers(len(ids)))]
                rec = s.trajectories[tid]
                t0 = rec.start + int(rng.integers(0, rec.length))
                x, y = by_id[tid][t0 - rec.start]
                for hit, P in tpq(s.index, s, float(x), float(y), t0, l, dec).items():
                    start = s.trajectories[hit].start
                    d = _deviation(by_id[hit][t0 - start: t0 - start + len(P)], P)
                    tpq_points += len(d)
                    tpq_over += int((d > bound + BOUND_SLACK).sum())
    ok = identical == checked and from_checkpoint > 0 and tpq_over == 0
    return ok, (f"{identical}/{checked} reconstructions bit-identical to full and independent "
                f"replay ({from_checkpoint} started at a checkpoint); TPQ l=10..50: "
                f"{tpq_points} points, bound violations={tpq_over}")


def criterion_7():
    trs = synth_generate(200, 100, "constant_velocity", sigma=0.0003, extent=0.05, seed=2,
                         speed=0.0005)
    batches = to_batches(trs)
    orig = np.vstack([tr.xy for tr in trs])

    def run(cfg):
        s, _ = summarize(batches, cfg)
        dec = Decoder(s)
        rec = np.vstack([dec.full_replay(tr.id) for tr in trs])
        return s, mae(orig, rec, cfg.units_per_meter)

    mae_ok = True
    parts = []
    for bits in (2, 4, 6):
        m = {mode: run(Config(partition_mode=mode, use_cqc=False, codebook_bits=bits))[1]
             for mode in ("spatial", "autocorrelation", "none")}
        mae_ok &= m["spatial"] <= m["none"] and m["autocorrelation"] <= m["none"]
        parts.append(f"b={bits}: S={m['spatial']:.1f} A={m['autocorrelation']:.1f} "
                     f"Q={m['none']:.1f} m")
    meters = (200, 400, 600, 800, 1000)
    ratios = {}
    for mode in ("spatial", "autocorrelation"):
        ratios[mode] = [compression_ratio(trs, run(Config(
            partition_mode=mode, use_cqc=False, eps1=m * DEGREES_PER_METER))[0]) for m in meters]
    mono = all(all(b >= a for a, b in zip(r, r[1:])) for r in ratios.values())
    with_cqc = [compression_ratio(trs, summarize(batches, Config(eps1=m * DEGREES_PER_METER))[0])
                for m in meters]
    fmt = lambda r: "/".join(f"{v:.3f}" for v in r)  # noqa: E731
    return mae_ok and mono, ("MAE " + "; ".join(parts) + f"; ratio over 200..1000 m "
                             f"S-basic {fmt(ratios['spatial'])}, "
                             f"A-basic {fmt(ratios['autocorrelation'])} "
                             f"(with CQC, not asserted: {fmt(with_cqc)})")


def criterion_8():
    rng = np.random.default_rng(8)
    lost = oversized = dense_lists = 0
    for i in range(10_000):
        n = int(rng.integers(0, 300))
        if i % 2:
            ids = np.sort(rng.choice(1 << 40, size=n, replace=False)) if n else np.zeros(0, int)
        else:
            span = max(n, int(n * rng.uniform(1, 4)))
            ids = np.sort(rng.choice(span, size=n, replace=False)) + int(rng.integers(0, 1 << 20))
        ids = [int(v) for v in ids]
        buf = encode_ids(ids)
        lost += decode_ids(buf) != ids
        if i % 2 == 0 and n >= 8:
            dense_lists += 1
            oversized += len(buf) >= 8 * n
    ok = lost == 0 and oversized == 0
    return ok, (f"10000 lists, round-trip failures={lost}; {dense_lists} dense lists of >= 8 ids, "
                f"not smaller than 8 B/id: {oversized}")


def criterion_9():
    with tempfile.TemporaryDirectory() as d:
        data = os.path.join(d, "data.csv")
        sink = open(os.devnull, "w")
        codes = [cli_main(["synth", "--n", "60", "--steps", "50", "--seed", "9", "-o", data],
                          out=sink)]
        same = []
        for mode in ("ppq-s", "ppq-a", "epq", "q-traj"):
            outs = []
            for run in range(2):
                path = os.path.join(d, f"{mode}-{run}.ppqt")
                codes.append(cli_main(["summarize", data, "--mode", mode, "-o", path], out=sink))
                with open(path, "rb") as fh:
                    outs.append(fh.read())
            same.append(outs[0] == outs[1] and len(outs[0]) > 0)
        sink.close()
    ok = all(c == 0 for c in codes) and all(same)
    return ok, f"byte-identical repeat runs for ppq-s/ppq-a/epq/q-traj: {same}"


def criterion_10():
    worst = 0.0
    for motion, kw in (("random_walk", dict(sigma=0.0003)),
                       ("constant_velocity", dict(sigma=0.00005, speed=0.0005))):
        tr = synth_generate(1, 5000, motion, extent=0.05, seed=10, **kw)
        cfg = Config()
        s, b = summarize(to_batches(tr), cfg, keep_reconstruction=True)
        R = np.array(b.reconstructed[0])
        tail = _deviation(tr[0].xy[4899:5000], R[4899:5000])
        if not np.array_equal(Decoder(s).full_replay(0, refine=False), R):
            return False, f"{motion}: decoder and encoder disagree"
        worst = max(worst, float(tail.max()) / cfg.eps1)
    return worst <= 1.0, f"max error at steps 4900..5000 = {worst:.6f} eps1 (limit 1)"


CRITERIA = {
    1: ("eps1 bound", criterion_1),
    2: ("CQC refinement bound", criterion_2),
    3: ("CQC round trip", criterion_3),
    4: ("exact STRQ", criterion_4),
    5: ("TPI equals per-timestamp PI", criterion_5),
    6: ("checkpointed reconstruction", criterion_6),
    7: ("ablation trends", criterion_7),
    8: ("posting-list codec", criterion_8),
    9: ("determinism", criterion_9),
    10: ("closed-loop non-accumulation", criterion_10),
}


def check(n: int) -> None:
    title, fn = CRITERIA[n]
    ok, detail = fn()
    report(n, title, ok, detail)
    assert ok, detail


def test_criterion_01_eps1_bound():
    check(1)


def test_criterion_02_refinement_bound():
    check(2)


def test_criterion_03_cqc_round_trip():
    check(3)


def test_criterion_04_exact_strq():
    check(4)


def test_criterion_05_temporal_index():
    check(5)


def test_criterion_06_checkpoint_replay():
    check(6)


def test_criterion_07_ablation_trends():
    check(7)


def test_criterion_08_posting_codec():
    check(8)


def test_criterion_09_determinism():
    check(9)


def test_criterion_10_no_drift():
    check(10)


if __name__ == "__main__":
    failed = 0
    for n, (title, fn) in CRITERIA.items():
        ok, detail = fn()
        report(n, title, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
