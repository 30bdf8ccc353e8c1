"""Command-line front end: synth, summarize, query, eval, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from .core import DEGREES_PER_METER, Config, InvariantError
from .ingest import (DataError, parse_canonical, parse_geolife, parse_porto, synth_generate,
                     to_batches, write_canonical)
from .storage import FormatError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
MODES = {"ppq-s": "spatial", "ppq-a": "autocorrelation", "epq": "single", "q-traj": "none"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_dataset_args(p):
    p.add_argument("--format", choices=("canonical", "porto", "geolife"), default="canonical")
    p.add_argument("--min-length", type=int, default=None,
                   help="drop shorter trajectories (default 30 for porto/geolife, 1 otherwise)")
    p.add_argument("--max-trajectories", type=int, default=None)


def _add_config_args(p):
    d = Config()
    p.add_argument("--mode", choices=sorted(MODES), default="ppq-s")
    p.add_argument("--eps1", type=float, default=d.eps1, help="deviation bound, coordinate units")
    p.add_argument("--eps1-m", type=float, default=None, help="deviation bound in meters")
    p.add_argument("--eps-p", type=float, default=None, help="partition threshold")
    p.add_argument("--eps-s", type=float, default=d.eps_s)
    p.add_argument("--eps-c", type=float, default=d.eps_c)
    p.add_argument("--eps-d", type=float, default=d.eps_d)
    p.add_argument("--g-c", type=float, default=d.g_c, help="index cell size, meters")
    p.add_argument("--g-s", type=float, default=d.g_s, help="CQC cell size, meters")
    p.add_argument("-k", type=int, default=d.k)
    p.add_argument("--units-per-meter", type=float, default=DEGREES_PER_METER)
    p.add_argument("--no-cqc", action="store_true")
    p.add_argument("--codebook-bits", type=int, default=None,
                   help="fixed per-timestamp codebook of 2**bits words (no error bound)")
    p.add_argument("--page-size", type=int, default=d.page_size)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ppqtraj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="write a synthetic canonical CSV")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--motion", choices=("random_walk", "constant_velocity", "ar"),
                   default="random_walk")
    p.add_argument("--sigma", type=float, default=0.0003)
    p.add_argument("--extent", type=float, default=0.05)
    p.add_argument("--speed", type=float, default=0.0005)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("summarize", help="summarize a dataset into a PPQT file")
    p.add_argument("input")
    _add_dataset_args(p)
    _add_config_args(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--verify", action="store_true",
                   help="replay the written file and check every point against the input")

    p = sub.add_parser("query", help="run STRQ or TPQ against a summary")
    p.add_argument("summary")
    p.add_argument("kind", choices=("strq", "tpq"))
    p.add_argument("--x", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--l", type=int, default=1, help="path duration for tpq")
    p.add_argument("--batch", help="CSV of queries with columns x,y,t[,l]")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", dest="exact", action="store_true", default=True)
    g.add_argument("--approx", dest="exact", action="store_false")
    p.add_argument("--verify-raw", metavar="DATASET",
                   help="also require the original point (from DATASET) to lie in the cell")
    _add_dataset_args(p)

    p = sub.add_parser("eval", help="metrics of a summary against its dataset")
    p.add_argument("summary")
    p.add_argument("dataset")
    _add_dataset_args(p)
    p.add_argument("--mae", action="store_true")
    p.add_argument("--ratio", action="store_true")
    p.add_argument("--strq", type=int, default=0, metavar="N",
                   help="precision/recall of N random exact STRQs against refined points")
    p.add_argument("--io", type=int, default=0, metavar="N",
                   help="logical pages read by N random STRQs")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="print summary header and statistics")
    p.add_argument("summary")
    return ap


def config_from_args(a) -> Config:
    eps1 = a.eps1 if a.eps1_m is None else a.eps1_m * a.units_per_meter
    return Config(eps1=eps1, eps_p=a.eps_p, eps_s=a.eps_s, eps_c=a.eps_c, eps_d=a.eps_d,
                  g_c=a.g_c, g_s=a.g_s, k=a.k, partition_mode=MODES[a.mode],
                  units_per_meter=a.units_per_meter, use_cqc=not a.no_cqc,
                  codebook_bits=a.codebook_bits, page_size=a.page_size)


def load_trajectories(path, fmt, min_length=None, max_trajectories=None):
    if fmt == "canonical":
        trs = parse_canonical(path)
        if min_length is not None:
            trs = [t for t in trs if len(t) >= min_length]
    elif fmt == "porto":
        trs = parse_porto(path, 30 if min_length is None else min_length, max_trajectories)
    else:
        trs = parse_geolife(path, 30 if min_length is None else min_length, max_trajectories)
    if max_trajectories is not None:
        trs = trs[:max_trajectories]
    return trs


def _out(rows, header, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)


def cmd_synth(a, out) -> int:
    trs = synth_generate(a.n, a.steps, a.motion, sigma=a.sigma, extent=a.extent, seed=a.seed,
                         speed=a.speed)
    write_canonical(trs, a.output)
    print(f"wrote {sum(len(t) for t in trs)} points of {len(trs)} trajectories to {a.output}",
          file=out)
    return EXIT_OK


def cmd_summarize(a, out) -> int:
    from .builder import summarize
    from .storage import load, save

    try:
        cfg = config_from_args(a)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trs = load_trajectories(a.input, a.format, a.min_length, a.max_trajectories)
    t0 = time.perf_counter()
    summary, builder = summarize(to_batches(trs), cfg)
    elapsed = time.perf_counter() - t0
    size = save(summary, a.output)
    counts = [c for c in builder.partition_counts if c]
    print(f"trajectories={len(trs)} points={summary.n_points} timestamps={summary.n_timestamps}",
          file=out)
    print(f"codebook_size={len(summary.codebook)} partitions_max={max(counts, default=0)} "
          f"partitions_mean={np.mean(counts) if counts else 0:.2f}", file=out)
    print(f"periods={summary.index.n_periods} rebuilds={summary.index.rebuilds} "
          f"insertions={summary.index.insertions}", file=out)
    print(f"bytes={size} elapsed_s={elapsed:.3f}", file=out)
    if a.verify:
        from .query import Decoder

        dec = Decoder(load(a.output))
        bound = math.sqrt(2) / 2 * cfg.g_s_units if cfg.use_cqc else cfg.eps1
        worst = 0.0
        for tr in trs:
            raw = dec.full_replay(tr.id, refine=False)
            if cfg.error_bounded:
                d = np.hypot(*(tr.xy - raw).T).max()
                if d > cfg.eps1:
                    raise InvariantError(f"trajectory {tr.id}: deviation {d} exceeds eps1")
            if cfg.use_cqc:
                d = np.hypot(*(tr.xy - dec.full_replay(tr.id)).T).max()
                if d > bound + 1e-12:
                    raise InvariantError(f"trajectory {tr.id}: refined deviation {d} too large")
                worst = max(worst, d)
            else:
                worst = max(worst, float(np.hypot(*(tr.xy - raw).T).max()))
        print(f"verify=ok max_deviation_m={worst / cfg.units_per_meter:.3f}", file=out)
    return EXIT_OK


def _queries(a):
    if a.batch:
        with open(a.batch, newline="") as fh:
            rows = list(csv.DictReader(fh))
        try:
            return [(float(r["x"]), float(r["y"]), int(r["t"]), int(r.get("l") or a.l))
                    for r in rows]
        except (KeyError, ValueError) as exc:
            raise DataError(f"{a.batch}: bad query row ({exc})") from None
    if a.x is None or a.y is None or a.t is None:
        raise UsageError("give --x, --y and --t, or --batch")
    return [(a.x, a.y, a.t, a.l)]


def cmd_query(a, out) -> int:
    from .query import Decoder, strq_approx, strq_exact, tpq
    from .storage import load

    qs = _queries(a)
    s = load(a.summary)
    if s.index is None:
        raise DataError("summary has no index")
    dec = Decoder(s)
    raw = None
    if a.verify_raw:
        raw = {tr.id: tr for tr in load_trajectories(a.verify_raw, a.format, a.min_length,
                                                     a.max_trajectories)}
    w = csv.writer(out, lineterminator="\n")
    if a.kind == "strq":
        w.writerow(["query", "traj_id"])
    else:
        w.writerow(["query", "traj_id", "t", "x", "y"])
    for qi, (x, y, t, l) in enumerate(qs):
        if a.kind == "strq":
            if a.exact:
                vr = None
                if raw is not None:
                    vr = {i: _raw_at(raw, i, t) for i in raw if _raw_at(raw, i, t) is not None}
                ids = strq_exact(s.index, s, x, y, t, dec, verify_raw=vr)
            else:
                ids = strq_approx(s.index, x, y, t)
            for i in ids:
                w.writerow([qi, i])
        else:
            for i, P in sorted(tpq(s.index, s, x, y, t, l, dec).items()):
                for n, (px, py) in enumerate(P):
                    w.writerow([qi, i, t + n, repr(float(px)), repr(float(py))])
    return EXIT_OK


def _raw_at(raw, tid, t):
    tr = raw[tid]
    n = t - tr.points[0].t
    if 0 <= n < len(tr.points) and tr.points[n].t == t:
        return tr.points[n].x, tr.points[n].y
    return None


def cmd_eval(a, out) -> int:
    from .evaluation import (compression_ratio, instrumented_page_count, mae, oracle_strq,
                             page_io_count, points_at, precision_recall, refined_points)
    from .query import Decoder, strq_exact
    from .storage import load

    s = load(a.summary)
    trs = load_trajectories(a.dataset, a.format, a.min_length, a.max_trajectories)
    by_id = {tr.id: tr for tr in trs}
    if set(by_id) != set(s.trajectories) or any(
            len(by_id[i]) != s.trajectories[i].length for i in by_id):
        raise DataError("dataset does not match the summary (ids or lengths differ)")
    cfg = s.config
    dec = Decoder(s)
    header, row = [], []
    if a.mae or not (a.ratio or a.strq or a.io):
        orig = np.vstack([by_id[i].xy for i in sorted(by_id)])
        unref = np.vstack([dec.full_replay(i, refine=False) for i in sorted(by_id)])
        ref = np.vstack([dec.full_replay(i) for i in sorted(by_id)])
        header += ["mae_m", "mae_unrefined_m", "max_err_m"]
        row += [f"{mae(orig, ref, cfg.units_per_meter):.6f}",
                f"{mae(orig, unref, cfg.units_per_meter):.6f}",
                f"{np.hypot(*(orig - ref).T).max() / cfg.units_per_meter:.6f}"]
    if a.ratio:
        header.append("compression_ratio")
        row.append(f"{compression_ratio(trs, s):.6f}")
    rng = np.random.default_rng(a.seed)
    trace = []
    if a.strq or a.io:
        pts = [(tr.id, p) for tr in trs for p in tr.points]
        for j in rng.integers(0, len(pts), size=max(a.strq, a.io)):
            _, p = pts[j]
            trace.append((p.x, p.y, p.t))
    if a.strq:
        refined = refined_points(s, dec)
        starts = {i: r.start for i, r in s.trajectories.items()}
        P = R = 0.0
        for x, y, t in trace[: a.strq]:
            got = strq_exact(s.index, s, x, y, t, dec)
            truth = oracle_strq(points_at(refined, starts, t), x, y, s.index.g_c)
            p, r = precision_recall(got, truth)
            P += p
            R += r
        header += ["strq_precision", "strq_recall"]
        row += [f"{P / a.strq:.6f}", f"{R / a.strq:.6f}"]
    if a.io:
        tr_io = trace[: a.io]
        header += ["io_pages", "io_pages_checked"]
        row += [page_io_count(s.index, tr_io, s, exact=True),
                instrumented_page_count(s.index, tr_io, s, exact=True)]
    _out([row], header, out)
    return EXIT_OK


def cmd_inspect(a, out) -> int:
    from .storage import deserialize, section_sizes

    with open(a.summary, "rb") as fh:
        buf = fh.read()
    s = deserialize(buf)
    info = {
        "bytes": len(buf),
        "sections": section_sizes(buf),
        "config": s.config.to_dict(),
        "trajectories": len(s.trajectories),
        "points": s.n_points,
        "timestamps": s.n_timestamps,
        "codebook_size": len(s.codebook),
        "checkpoints": len(s.checkpoints),
        "periods": s.index.n_periods if s.index is not None else 0,
        "rebuilds": s.index.rebuilds if s.index is not None else 0,
        "insertions": s.index.insertions if s.index is not None else 0,
    }
    print(json.dumps(info, indent=2, sort_keys=True), file=out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "summarize": cmd_summarize, "query": cmd_query,
            "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return COMMANDS[a.command](a, out)
    except UsageError as exc:
        print(f"ppqtraj: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantError as exc:
        print(f"ppqtraj: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, FormatError, OSError, ValueError, KeyError) as exc:
        print(f"ppqtraj: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
