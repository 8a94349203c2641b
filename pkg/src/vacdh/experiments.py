"""Experiment drivers behind the CLI: comparisons, sweeps, estimator dumps."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .analytics import AsIfMissDelays, cala_estimate, lac_estimate
from .engine import CellResult, run_matrix, simulate
from .model import CacheConfig, LatencyModel, PolicyConfig, PolicyKind, RunConfig, Trace
from .policies import estimate_lambda
from .workload import MB, PoissonArrivals, SyntheticSpec, generate, ingest_csv

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_CAPACITY = 500 * MB


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """One experiment grid: workload x capacities x policies x seeds."""

    workload: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    trace_csv: str | None = None
    column_map: dict[str, str] | None = None
    capacities: list[int] = field(default_factory=lambda: [DEFAULT_CAPACITY])
    latency: LatencyModel = field(default_factory=lambda: LatencyModel(10.0, 1e-7))
    policies: list[PolicyConfig] = field(
        default_factory=lambda: [PolicyConfig(PolicyKind.LRU_MAD), PolicyConfig(PolicyKind.VA_CDH)]
    )
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.policies:
            raise ExperimentError("at least one policy is required")
        if not self.seeds:
            raise ExperimentError("at least one seed is required")
        if not self.capacities:
            raise ExperimentError("at least one capacity is required")
        if self.workload is None and self.trace_csv is None:
            raise ExperimentError("need a synthetic workload or a CSV trace")

    def with_lru(self) -> list[PolicyConfig]:
        """Policy list with LRU first; LRU is the improvement denominator."""
        rest = [p for p in self.policies if p.kind is not PolicyKind.LRU]
        return [PolicyConfig(PolicyKind.LRU)] + rest

    def traces(self) -> list[tuple[int, Trace]]:
        if self.trace_csv is not None:
            tr = ingest_csv(self.trace_csv, self.column_map)
            return [(s, tr) for s in self.seeds]
        out = []
        for s in self.seeds:
            spec = dataclasses.replace(self.workload, seed=s)
            tr = generate(spec)
            out.append((s, tr))
        return out

    def describe(self) -> dict[str, Any]:
        w = None
        if self.workload is not None and self.trace_csv is None:
            w = dataclasses.asdict(self.workload)
            w["arrival"] = {"process": type(self.workload.arrival).__name__, **dataclasses.asdict(self.workload.arrival)}
            w["size_range"] = list(self.workload.size_range)
        return {
            "workload": w,
            "trace_csv": self.trace_csv,
            "capacities": self.capacities,
            "latency": dataclasses.asdict(self.latency),
            "policies": [p.to_dict() for p in self.policies],
            "seeds": self.seeds,
        }


def latency_improvement(lru_latency: float, other_latency: float) -> float:
    """Relative latency reduction against LRU: (Lat_LRU - Lat_A) / Lat_LRU."""
    if lru_latency <= 0:
        return 0.0 if other_latency == lru_latency else -math.inf
    return (lru_latency - other_latency) / lru_latency


def _run_grid(spec: ExperimentSpec, policies: Sequence[PolicyConfig]) -> list[tuple[int, CellResult]]:
    out = []
    for seed, trace in spec.traces():
        cfgs = [
            RunConfig(CacheConfig(cap, pol, seed), spec.latency) for cap in spec.capacities for pol in policies
        ]
        for cell in run_matrix([trace], cfgs, workers=spec.workers):
            out.append((seed, cell))
    return out


def _lru_totals(cells: Iterable[tuple[int, CellResult]]) -> dict[tuple[int, int], float]:
    base = {}
    for seed, cell in cells:
        cfg = cell.config.cache
        if cfg.policy.kind is PolicyKind.LRU and cell.ok:
            base[(seed, cfg.capacity)] = cell.report.total_latency
    return base


def _row(seed: int, cell: CellResult, base: dict) -> dict[str, Any]:
    cfg = cell.config.cache
    key = (seed, cfg.capacity)
    row = {
        "policy": cfg.policy.label,
        "kind": cfg.policy.kind.value,
        "omega": cfg.policy.omega,
        "gamma": cfg.policy.gamma,
        "window_size": cfg.policy.window_size,
        "capacity_bytes": cfg.capacity,
        "seed": seed,
    }
    if not cell.ok:
        row.update(total_latency_ms="", hits="", misses="", delayed_hits="", improvement="", error=cell.error)
        return row
    r = cell.report
    if key not in base:
        raise ExperimentError(f"no LRU run for seed={seed}, capacity={cfg.capacity}; cannot compute improvement")
    row.update(
        total_latency_ms=r.total_latency,
        hits=r.hits,
        misses=r.misses,
        delayed_hits=r.delayed_hits,
        improvement=latency_improvement(base[key], r.total_latency),
        error="",
    )
    return row


def summarize(rows: Sequence[dict[str, Any]], group: Sequence[str]) -> list[dict[str, Any]]:
    """Mean/min/max improvement per group, over seeds."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        if r["improvement"] == "":
            continue
        groups.setdefault(tuple(r[g] for g in group), []).append(r["improvement"])
    out = []
    for key, vals in groups.items():
        d = dict(zip(group, key))
        d.update(
            n_seeds=len(vals),
            improvement_mean=math.fsum(vals) / len(vals),
            improvement_min=min(vals),
            improvement_max=max(vals),
        )
        out.append(d)
    return out


def compare(spec: ExperimentSpec) -> tuple[list[dict], list[dict], list[tuple[int, CellResult]]]:
    """Run every policy (plus LRU) over capacities and seeds.

    Returns per-cell rows, per-(policy, capacity) summaries across seeds,
    and the raw cell results.
    """
    cells = _run_grid(spec, spec.with_lru())
    base = _lru_totals(cells)
    rows = [_row(seed, cell, base) for seed, cell in cells]
    summary = summarize(rows, ("policy", "capacity_bytes"))
    return rows, summary, cells


SWEEP_PARAMS = ("omega", "window_size")


def sweep(
    spec: ExperimentSpec,
    param: str,
    values: Sequence[float],
    base_policy: PolicyConfig | None = None,
) -> tuple[list[dict], list[dict], list[tuple[int, CellResult]]]:
    """Vary one VA-CDH parameter; report improvement over LRU per value."""
    if param not in SWEEP_PARAMS:
        raise ExperimentError(f"can only sweep {SWEEP_PARAMS}, not {param!r}")
    if len(values) < 2:
        raise ExperimentError("a sweep needs at least two values")
    base_policy = base_policy or PolicyConfig(PolicyKind.VA_CDH, omega=1.0, window_size=10_000)
    policies = []
    for v in values:
        if param == "window_size":
            if int(v) != v or v < 1:
                raise ExperimentError(f"window sizes must be positive integers, got {v}")
            policies.append(dataclasses.replace(base_policy, window_size=int(v)))
        else:
            if v < 0:
                raise ExperimentError(f"omega must be non-negative, got {v}")
            policies.append(dataclasses.replace(base_policy, omega=float(v)))
    cells = _run_grid(spec, [PolicyConfig(PolicyKind.LRU)] + policies)
    base = _lru_totals(cells)
    rows = []
    for seed, cell in cells:
        if cell.config.cache.policy.kind is PolicyKind.LRU:
            continue
        row = _row(seed, cell, base)
        row = {"parameter": param, "value": row[param], **row}
        rows.append(row)
    summary = summarize(rows, ("parameter", "value", "capacity_bytes"))
    return rows, summary, cells


# --- estimator comparison ------------------------------------------------------


ESTIMATOR_COLUMNS = (
    "fetch_index",
    "real_aggdelay",
    "mad_est",
    "lac_est",
    "cala_est",
    "vacdh_mean",
    "vacdh_mean_plus_sigma",
)


def busiest_object(trace: Sequence) -> int:
    """Object with the highest arrival rate ((count - 1) / active span); ties to smaller id."""
    first: dict[int, float] = {}
    last: dict[int, float] = {}
    count: dict[int, int] = {}
    for r in trace:
        first.setdefault(r.object_id, r.time)
        last[r.object_id] = r.time
        count[r.object_id] = count.get(r.object_id, 0) + 1
    if not count:
        raise ExperimentError("empty trace")

    def rate(o):
        span = last[o] - first[o]
        if count[o] < 2:
            return 0.0
        return math.inf if span == 0 else (count[o] - 1) / span

    return min(count, key=lambda o: (-rate(o), o))


def estimator_table(
    trace: Trace,
    config: CacheConfig,
    latency: LatencyModel,
    object_id: int | None = None,
    omega: float = 1.0,
) -> tuple[int, list[dict[str, float]]]:
    """Per fetch window of one object: the real aggregate delay against each estimator.

    The rate used by LAC and VA-CDH is the object's whole-trace estimate, so
    those columns are constant; MAD and CALA use the as-if-miss history
    available when each fetch starts.
    """
    if object_id is None:
        object_id = busiest_object(trace)
    own = [i for i, r in enumerate(trace) if r.object_id == object_id]
    if not own:
        raise ExperimentError(f"object {object_id} does not occur in the trace")
    report = simulate(trace, config, latency)
    windows = [w for w in report.windows if w.object_id == object_id]
    if not windows:
        log.warning("object %d never missed; estimator table is empty", object_id)
        return object_id, []
    gaps = [trace[b].time - trace[a].time for a, b in zip(own, own[1:])]
    lam = estimate_lambda(gaps)
    z0 = windows[0].z
    mad = AsIfMissDelays(z0)
    pos = 0
    rows = []
    gamma = config.policy.gamma
    for n, w in enumerate(windows):
        while pos < len(own) and own[pos] < w.miss_index:
            mad.observe(trace[own[pos]].time)
            pos += 1
        z = w.z
        mad.z = z
        mad_est = mad.mean(w.start)
        mean = z * (1 + lam * z / 2)
        rows.append(
            {
                "fetch_index": n,
                "real_aggdelay": w.latency,
                "mad_est": mad_est,
                "lac_est": lac_estimate(lam, z),
                "cala_est": cala_estimate(mad_est, z, gamma),
                "vacdh_mean": mean,
                "vacdh_mean_plus_sigma": mean + z * math.sqrt(lam * z / 3),
            }
        )
    return object_id, rows


# --- output helpers -------------------------------------------------------------


def write_rows(rows: Sequence[dict[str, Any]], path: str | Path, columns: Sequence[str] | None = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_json(data: Any, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def archive_reports(cells: Sequence[tuple[int, CellResult]], out_dir: str | Path) -> None:
    """One JSON file per cell, so every table row can be recomputed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed, cell in cells:
        cfg = cell.config.cache
        pol = cfg.policy
        name = f"{pol.kind.value}_w{pol.omega:g}_g{pol.gamma:g}_S{pol.window_size}_C{cfg.capacity}_seed{seed}.json"
        payload = {"config": cell.config.to_dict(), "trace": cell.trace_name, "error": cell.error}
        if cell.ok:
            payload["report"] = cell.report.to_dict()
        write_json(payload, out / name)


def default_spec() -> ExperimentSpec:
    return ExperimentSpec(workload=SyntheticSpec(arrival=PoissonArrivals(0.1)))
