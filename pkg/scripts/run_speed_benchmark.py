"""Query latency versus database size on synthetic data.

Writes the per-size table and per-query samples as CSV, optionally a box
plot, and prints key-space statistics that explain how latency scales.

    python3 scripts/run_speed_benchmark.py --out results/speed
"""
import argparse
import logging
from pathlib import Path

from slidesearch.bench import BenchConfig, bench_spec, bench_speed
from slidesearch.synth import build_synthetic_database


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,5000,10000,50000,100000")
    ap.add_argument("--queries", type=int, default=100)
    ap.add_argument("--mode", choices=("slide", "patch"), default="slide")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/speed")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = BenchConfig(sizes=[int(s) for s in args.sizes.split(",")], n_queries=args.queries,
                      seed=args.seed, mode=args.mode)
    res = bench_speed(cfg)
    res.write_csv(out / f"latency_{args.mode}.csv")
    res.write_samples_csv(out / f"latency_{args.mode}_samples.csv")
    if args.plot:
        res.plot(out / f"latency_{args.mode}.png")

    spec = bench_spec(cfg)
    print(f"{'size':>8} {'keys':>6} {'per key':>8} {'median ms':>10} {'p95 ms':>8} {'max visits':>10}")
    for r in res.rows:
        db = build_synthetic_database(spec, r.size)
        per_key = db.n_records / max(1, len(db.table))
        print(f"{r.size:>8} {r.n_keys:>6} {per_key:>8.1f} {r.median_s * 1e3:>10.2f} "
              f"{r.p95_s * 1e3:>8.2f} {r.max_visits:>10}")
    print(f"median ratio max/min: {res.median_ratio:.2f} (visit bound {cfg.params.visit_bound})")


if __name__ == "__main__":
    main()
