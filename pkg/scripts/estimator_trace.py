"""Real per-fetch aggregate delay of one object against each estimator.

Uses the busiest object of a synthetic trace (or a CSV trace) under LRU and
writes the table plus a PNG when matplotlib is available.

    python3 scripts/estimator_trace.py --out-dir out/estimators
"""

import argparse
from pathlib import Path

from vacdh.experiments import ESTIMATOR_COLUMNS, estimator_table, write_rows
from vacdh.model import CacheConfig, LatencyModel, PolicyConfig
from vacdh.workload import MB, PoissonArrivals, SyntheticSpec, generate, ingest_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="out/estimators")
    ap.add_argument("--trace", help="CSV trace; default is a synthetic one")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--capacity-mb", type=int, default=500)
    ap.add_argument("--object", type=int)
    ap.add_argument("--plot", action="store_true", help="also write estimators.png (needs matplotlib)")
    args = ap.parse_args()
    out = Path(args.out_dir)

    if args.trace:
        trace = ingest_csv(args.trace)
    else:
        trace = generate(SyntheticSpec(arrival=PoissonArrivals(0.1), seed=args.seed))
    cfg = CacheConfig(args.capacity_mb * MB, PolicyConfig("LRU"), args.seed)
    obj, rows = estimator_table(trace, cfg, LatencyModel(10.0, 1e-7), args.object)
    write_rows(rows, out / "estimators.csv", ESTIMATOR_COLUMNS)
    print(f"object {obj}: {len(rows)} fetch windows")
    if args.plot and rows:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(8, 3.5))
        x = [r["fetch_index"] for r in rows]
        for col in ESTIMATOR_COLUMNS[1:]:
            ax.plot(x, [r[col] for r in rows], label=col, lw=1)
        ax.set_xlabel("fetch")
        ax.set_ylabel("aggregate delay (ms)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out / "estimators.png", dpi=120)


if __name__ == "__main__":
    main()
