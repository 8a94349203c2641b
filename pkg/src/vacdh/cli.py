"""Command-line entry point.

Exit codes: 0 success, 1 a validation check failed, 2 bad input.
Log verbosity comes from the VACDH_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import analytics
from .experiments import (
    DEFAULT_CAPACITY,
    DEFAULT_SEEDS,
    ESTIMATOR_COLUMNS,
    ExperimentError,
    ExperimentSpec,
    archive_reports,
    compare,
    estimator_table,
    sweep,
    write_json,
    write_rows,
)
from .model import LATENCY_PRESETS, CacheConfig, LatencyModel, PolicyConfig, PolicyKind, load_config
from .workload import MB, ParetoArrivals, PoissonArrivals, SyntheticSpec, TraceFormatError, generate, ingest_csv, write_csv

log = logging.getLogger("vacdh")

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _common(p: argparse.ArgumentParser, workload: bool = True) -> None:
    p.add_argument("--config", help="JSON config file (capacity_bytes, latency.*, policy.*, seed, ...)")
    p.add_argument("--seed", type=int, action="append", help="random seed; repeat for several")
    p.add_argument("--out-dir", help="output directory (default: ./out/<command>)")
    if not workload:
        return
    p.add_argument("--capacity", type=int, action="append", help="cache capacity in bytes; repeatable")
    p.add_argument("--policy", action="append", help="policy kind (LRU, LRU_MAD, LAC, CALA, VA_CDH); repeatable")
    p.add_argument("--omega", type=float, help="VA-CDH standard-deviation weight")
    p.add_argument("--window-size", type=int, help="learning-window size S in requests")
    p.add_argument("--gamma", type=float, help="CALA mixing weight")
    p.add_argument("--latency-base-ms", type=float, help="constant part of the miss latency (ms)")
    p.add_argument("--latency-coeff", type=float, help="size-proportional part of the miss latency (ms/byte)")
    p.add_argument("--latency-preset", choices=sorted(LATENCY_PRESETS), help="named latency model")
    g = p.add_argument_group("workload")
    g.add_argument("--trace", help="CSV trace (time_ms,object_id,size_bytes) instead of a synthetic one")
    g.add_argument("--num-requests", type=int)
    g.add_argument("--num-objects", type=int)
    g.add_argument("--zipf", type=float, help="Zipf exponent")
    g.add_argument("--size-min", type=int, help="smallest object size (bytes)")
    g.add_argument("--size-max", type=int, help="largest object size (bytes)")
    g.add_argument("--arrival", choices=("poisson", "pareto"))
    g.add_argument("--rate", type=float, help="global request rate (1/ms)")
    g.add_argument("--pareto-shape", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vacdh", description="Delayed-hit cache experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="latency improvement of each policy over LRU")
    _common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--decision-log", action="store_true", help="also write per-eviction decision logs")

    p = sub.add_parser("estimators", help="real aggregate delay vs. estimators for one object")
    _common(p)
    p.add_argument("--object", help="object id (dense integer, or original key for CSV traces)")

    p = sub.add_parser("validate-dist", help="check the aggregate-delay law against Monte Carlo")
    _common(p, workload=False)
    p.add_argument("--lam", type=float, nargs="+", default=[0.5], help="arrival rates (1/ms)")
    p.add_argument("--z", type=float, nargs="+", default=[10.0], help="fetch latencies (ms)")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--ks-samples", type=int, default=100_000)

    p = sub.add_parser("sweep", help="sensitivity of VA-CDH to omega or the window size")
    _common(p)
    p.add_argument("--param", choices=("omega", "window_size"), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("gen-trace", help="write a synthetic trace as CSV")
    _common(p)
    p.add_argument("--output", help="CSV path (default: <out-dir>/trace.csv)")
    return parser


# --- argument resolution -------------------------------------------------------


def _get(cfg: dict, dotted: str, default=None):
    cur: Any = cfg
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


def _first(*vals):
    for v in vals:
        if v is not None:
            return v
    return None


def resolve_latency(args, cfg: dict) -> LatencyModel:
    if getattr(args, "latency_preset", None):
        base = LATENCY_PRESETS[args.latency_preset]
    else:
        base = LatencyModel(
            float(_get(cfg, "latency.base_ms", 10.0)),
            float(_get(cfg, "latency.coeff_ms_per_byte", 1e-7)),
        )
    return LatencyModel(
        _first(args.latency_base_ms, base.base_ms),
        _first(args.latency_coeff, base.coeff_ms_per_byte),
    )


def resolve_policies(args, cfg: dict, default_kinds: Sequence[str]) -> list[PolicyConfig]:
    kinds = args.policy or _get(cfg, "policies") or ([_get(cfg, "policy.kind")] if _get(cfg, "policy.kind") else None)
    kinds = kinds or list(default_kinds)
    omega = _first(args.omega, _get(cfg, "policy.omega"), 1.0)
    gamma = _first(args.gamma, _get(cfg, "policy.gamma"), 0.5)
    window = _first(args.window_size, _get(cfg, "policy.window_size"), 10_000)
    out = []
    for k in kinds:
        if isinstance(k, dict):
            out.append(PolicyConfig(k["kind"], float(k.get("omega", omega)), float(k.get("gamma", gamma)), int(k.get("window_size", window))))
        else:
            out.append(PolicyConfig(k, float(omega), float(gamma), int(window)))
    return out


def resolve_seeds(args, cfg: dict, default: Sequence[int]) -> list[int]:
    if args.seed:
        return list(args.seed)
    if "seeds" in cfg:
        return [int(s) for s in cfg["seeds"]]
    if "seed" in cfg:
        return [int(cfg["seed"])]
    return list(default)


def resolve_workload(args, cfg: dict) -> SyntheticSpec:
    w = cfg.get("workload", {}) or {}
    rate = float(_first(args.rate, w.get("rate"), 0.1))
    arrival = _first(args.arrival, w.get("arrival"), "poisson")
    if arrival == "poisson":
        arr = PoissonArrivals(rate)
    elif arrival == "pareto":
        arr = ParetoArrivals.load_matched(rate, float(_first(args.pareto_shape, w.get("pareto_shape"), 2.5)))
    else:
        raise InputError(f"unknown arrival process {arrival!r}")
    return SyntheticSpec(
        num_requests=int(_first(args.num_requests, w.get("num_requests"), 100_000)),
        num_objects=int(_first(args.num_objects, w.get("num_objects"), 100)),
        zipf_exponent=float(_first(args.zipf, w.get("zipf_exponent"), 1.0)),
        size_range=(
            int(_first(args.size_min, w.get("size_min"), 1 * MB)),
            int(_first(args.size_max, w.get("size_max"), 100 * MB)),
        ),
        arrival=arr,
    )


def resolve_capacities(args, cfg: dict) -> list[int]:
    if args.capacity:
        return list(args.capacity)
    if "capacities" in cfg:
        return [int(c) for c in cfg["capacities"]]
    return [int(cfg.get("capacity_bytes", DEFAULT_CAPACITY))]


def build_spec(args, cfg: dict, default_kinds: Sequence[str], default_seeds: Sequence[int]) -> ExperimentSpec:
    return ExperimentSpec(
        workload=resolve_workload(args, cfg),
        trace_csv=_first(args.trace, _get(cfg, "workload.trace_csv")),
        column_map=_get(cfg, "workload.column_map"),
        capacities=resolve_capacities(args, cfg),
        latency=resolve_latency(args, cfg),
        policies=resolve_policies(args, cfg, default_kinds),
        seeds=resolve_seeds(args, cfg, default_seeds),
        workers=getattr(args, "workers", 1),
    )


def _out_dir(args, cfg: dict) -> Path:
    out = Path(_first(args.out_dir, cfg.get("out_dir"), Path("out") / args.command))
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands ------------------------------------------------------------------


def cmd_compare(args, cfg) -> int:
    spec = build_spec(args, cfg, ("LRU_MAD", "LAC", "CALA", "VA_CDH"), DEFAULT_SEEDS)
    out = _out_dir(args, cfg)
    rows, summary, cells = compare(spec)
    write_rows(rows, out / "compare.csv")
    write_rows(summary, out / "compare_summary.csv")
    write_json(spec.describe(), out / "experiment.json")
    archive_reports(cells, out / "reports")
    if args.decision_log:
        from .engine import simulate, write_decisions_csv

        for seed, trace in spec.traces():
            for cap in spec.capacities:
                for pol in spec.with_lru():
                    decisions = []
                    simulate(trace, CacheConfig(cap, pol, seed), spec.latency, decisions=decisions)
                    write_decisions_csv(decisions, out / f"decisions_{pol.kind.value}_C{cap}_seed{seed}.csv")
    for r in summary:
        print(
            f"{r['policy']:<32} C={r['capacity_bytes']:>12} improvement mean={r['improvement_mean']:+.4f} "
            f"min={r['improvement_min']:+.4f} max={r['improvement_max']:+.4f}"
        )
    failed = [r for r in rows if r["error"]]
    return EXIT_FAILED if failed else EXIT_OK


def cmd_sweep(args, cfg) -> int:
    spec = build_spec(args, cfg, ("VA_CDH",), DEFAULT_SEEDS)
    base = next((p for p in spec.policies if p.kind is PolicyKind.VA_CDH), PolicyConfig(PolicyKind.VA_CDH))
    out = _out_dir(args, cfg)
    rows, summary, cells = sweep(spec, args.param, args.values, base)
    write_rows(rows, out / f"sweep_{args.param}.csv")
    write_rows(summary, out / f"sweep_{args.param}_summary.csv")
    write_json(spec.describe(), out / "experiment.json")
    archive_reports(cells, out / "reports")
    for r in summary:
        print(f"{args.param}={r['value']:<10g} C={r['capacity_bytes']:>12} improvement mean={r['improvement_mean']:+.4f}")
    return EXIT_FAILED if any(r["error"] for r in rows) else EXIT_OK


def cmd_estimators(args, cfg) -> int:
    spec = build_spec(args, cfg, ("LRU",), (0,))
    trace = spec.traces()[0][1]
    seed = spec.seeds[0]
    obj = None
    if args.object is not None:
        if trace.keys:
            if args.object not in trace.keys:
                raise InputError(f"unknown object {args.object!r}")
            obj = trace.keys.index(args.object)
        else:
            try:
                obj = int(args.object)
            except ValueError:
                raise InputError(f"object id must be an integer, got {args.object!r}") from None
    policy = spec.policies[0]
    config = CacheConfig(spec.capacities[0], policy, seed)
    try:
        obj, rows = estimator_table(trace, config, spec.latency, obj, omega=policy.omega)
    except ExperimentError as e:
        raise InputError(str(e)) from None
    out = _out_dir(args, cfg)
    write_rows(rows, out / "estimators.csv", ESTIMATOR_COLUMNS)
    write_json({**spec.describe(), "object_id": obj, "seed": seed, "windows": len(rows)}, out / "estimators.json")
    print(f"object {obj}: {len(rows)} fetch windows -> {out / 'estimators.csv'}")
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    seed = resolve_seeds(args, cfg, (0,))[0]
    pairs = [(lam, z) for lam in args.lam for z in args.z]
    for lam, z in pairs:
        if lam < 0 or z <= 0:
            raise InputError(f"need lam >= 0 and z > 0, got ({lam}, {z})")
        if lam * z > 20:
            raise InputError(f"lam*z = {lam * z:g} exceeds 20; truncation guarantee does not hold")
    if args.samples < 2:
        raise InputError("need at least 2 samples")
    checks = [analytics.check_distribution(lam, z, args.samples, seed, args.ks_samples) for lam, z in pairs]
    out = _out_dir(args, cfg)
    report = {
        "tolerances": {
            "normalization": analytics.NORMALIZATION_TOL,
            "mean_rel": analytics.MEAN_TOL,
            "var_rel": analytics.VAR_TOL,
            "ks": analytics.KS_TOL,
        },
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    write_json(report, out / "validate_dist.json")
    for c in checks:
        print(
            f"{'PASS' if c.passed else 'FAIL'} lam={c.lam:g} z={c.z:g} norm_err={c.normalization_error:.2e} "
            f"mean_err={c.mean_rel_error:.2e} var_err={c.var_rel_error:.2e} ks={c.ks:.4f}"
        )
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_gen_trace(args, cfg) -> int:
    seed = resolve_seeds(args, cfg, (0,))[0]
    spec = dataclasses.replace(resolve_workload(args, cfg), seed=seed)
    trace = generate(spec)
    path = Path(args.output) if args.output else _out_dir(args, cfg) / "trace.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(trace, path)
    print(f"wrote {len(trace)} requests to {path}")
    return EXIT_OK


COMMANDS = {
    "compare": cmd_compare,
    "estimators": cmd_estimators,
    "validate-dist": cmd_validate,
    "sweep": cmd_sweep,
    "gen-trace": cmd_gen_trace,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("VACDH_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except (InputError, ExperimentError, TraceFormatError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
