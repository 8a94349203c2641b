"""Analytic aggregate-delay law vs. Monte Carlo over a grid of (lam, z).

    python3 scripts/validate_distribution.py
"""

import argparse
import json

from vacdh.analytics import check_distribution


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--ks-samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()

    grid = [(0.5, 10), (0.2, 5), (1, 2), (0.05, 10), (0.5, 4), (1, 10)]
    results = []
    for lam, z in grid:
        c = check_distribution(lam, z, args.samples, args.seed, args.ks_samples)
        results.append(c.to_dict())
        print(
            f"{'PASS' if c.passed else 'FAIL'} lam={lam:<5g} z={z:<4g} lam*z={lam * z:<4g} "
            f"norm={c.normalization_error:.1e} mean={c.mean_rel_error:.1e} var={c.var_rel_error:.1e} ks={c.ks:.4f}"
        )
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
