"""Sensitivity of VA-CDH to omega and to the learning-window size.

    python3 scripts/sensitivity.py --out-dir out/sensitivity
"""

import argparse
from pathlib import Path

from vacdh.experiments import ExperimentSpec, sweep, write_rows
from vacdh.model import LatencyModel, PolicyConfig
from vacdh.workload import MB, PoissonArrivals, SyntheticSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="out/sensitivity")
    ap.add_argument("--num-requests", type=int, default=100_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--omegas", type=float, nargs="+", default=[0, 0.25, 0.5, 1, 2, 4])
    ap.add_argument("--windows", type=int, nargs="+", default=[1000, 5000, 10_000, 20_000, 50_000])
    args = ap.parse_args()
    out = Path(args.out_dir)

    spec = ExperimentSpec(
        workload=SyntheticSpec(args.num_requests, 100, 1.0, (MB, 100 * MB), PoissonArrivals(0.1)),
        capacities=[500 * MB],
        latency=LatencyModel(10.0, 1e-7),
        seeds=args.seeds,
    )
    base = PolicyConfig("VA_CDH", omega=1.0, window_size=10_000)
    for param, values in (("omega", args.omegas), ("window_size", args.windows)):
        rows, summary, _ = sweep(spec, param, values, base)
        write_rows(rows, out / f"sweep_{param}.csv")
        write_rows(summary, out / f"sweep_{param}_summary.csv")
        for r in summary:
            print(f"{param}={r['value']:<8g} mean improvement {r['improvement_mean']:+.4f}")


if __name__ == "__main__":
    main()
