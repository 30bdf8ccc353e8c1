"""Write a synthetic Porto-style taxi CSV (POLYLINE column, lon/lat pairs)."""
import argparse

from ppqtraj.ingest import porto_like_sample, write_porto


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="porto_sample.csv")
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-length", type=int, default=30)
    ap.add_argument("--max-length", type=int, default=120)
    a = ap.parse_args()
    trs = porto_like_sample(a.n, a.seed, a.min_length, a.max_length)
    write_porto(trs, a.output)
    print(f"wrote {len(trs)} trajectories ({sum(len(t) for t in trs)} points) to {a.output}")


if __name__ == "__main__":
    main()
