"""Time exact and approximate STRQ on a summary and count the index pages they touch."""
import argparse
import time

import numpy as np

from ppqtraj import Config, summarize
from ppqtraj.evaluation import (oracle_strq, page_io_count, points_at, precision_recall,
                                refined_points)
from ppqtraj.ingest import porto_like_sample, synth_generate, to_batches
from ppqtraj.query import Decoder, strq_approx, strq_exact


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", choices=("random_walk", "porto"), default="porto")
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--page-sizes", type=int, nargs="+", default=[4096, 16384, 1 << 20])
    a = ap.parse_args()

    if a.data == "porto":
        trs = porto_like_sample(a.n, a.seed)
    else:
        trs = synth_generate(a.n, 100, "random_walk", sigma=0.0003, extent=0.05, seed=a.seed)
    rng = np.random.default_rng(a.seed)
    pts = [p for tr in trs for p in tr.points]
    trace = [(pts[j].x, pts[j].y, pts[j].t) for j in rng.integers(0, len(pts), a.queries)]

    for page_size in a.page_sizes:
        s, _ = summarize(to_batches(trs), Config(page_size=page_size))
        dec = Decoder(s)
        refined = refined_points(s, dec)
        starts = {i: r.start for i, r in s.trajectories.items()}

        t0 = time.perf_counter()
        exact = [strq_exact(s.index, s, x, y, t, dec) for x, y, t in trace]
        t_exact = time.perf_counter() - t0
        t0 = time.perf_counter()
        approx = [strq_approx(s.index, x, y, t) for x, y, t in trace]
        t_approx = time.perf_counter() - t0

        pr_e, pr_a = np.zeros(2), np.zeros(2)
        for (x, y, t), e, ap_ in zip(trace, exact, approx):
            truth = oracle_strq(points_at(refined, starts, t), x, y, s.index.g_c)
            pr_e += precision_recall(e, truth)
            pr_a += precision_recall(ap_, truth)
        pr_e /= len(trace)
        pr_a /= len(trace)
        print(f"page_size={page_size} periods={s.index.n_periods} "
              f"index_bytes={len(s.index.blob)}")
        print(f"  exact : {1e3 * t_exact / len(trace):.3f} ms/query precision={pr_e[0]:.4f} "
              f"recall={pr_e[1]:.4f} pages={page_io_count(s.index, trace, s, exact=True)}")
        print(f"  approx: {1e3 * t_approx / len(trace):.3f} ms/query precision={pr_a[0]:.4f} "
              f"recall={pr_a[1]:.4f} pages={page_io_count(s.index, trace)}")


if __name__ == "__main__":
    main()
