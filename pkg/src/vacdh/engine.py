"""Trace replay against a cache with outstanding fetches.

A request for a resident object is a hit (latency 0). A request for an
object whose fetch is outstanding is a delayed hit and waits for the
remaining fetch time. Anything else misses, pays the full fetch latency
``z`` and starts a fetch that completes at ``t + z``. Evictions happen only
when a fetch completes and the object must be admitted.

At equal timestamps fetch completions are processed before requests, so a
request landing exactly on a completion is an ordinary hit.
"""

from __future__ import annotations

import csv
import heapq
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .model import CacheConfig, LatencyModel, RunConfig, Trace, TraceRecord, check_sorted
from .policies import CapacityError, Policy, make_policy

log = logging.getLogger(__name__)

HIT, MISS, DELAYED = "hit", "miss", "delayed"


@dataclass
class FetchWindow:
    """One outstanding fetch: opened by a miss, closed when the object lands."""

    object_id: int
    start: float
    done: float
    z: float
    miss_index: int
    delayed_hits: int = 0
    latency: float = 0.0  # miss latency plus every delayed-hit latency, in arrival order


@dataclass
class ObjectSummary:
    requests: int = 0
    hits: int = 0
    misses: int = 0
    delayed_hits: int = 0
    latency: float = 0.0


@dataclass
class SimReport:
    trace_name: str
    capacity: int
    policy: dict[str, Any]
    latency_model: dict[str, float]
    seed: int
    num_requests: int = 0
    hits: int = 0
    misses: int = 0
    delayed_hits: int = 0
    evictions: int = 0
    total_latency: float = 0.0
    latencies: list[float] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    windows: list[FetchWindow] = field(default_factory=list)
    per_object: dict[int, ObjectSummary] = field(default_factory=dict)

    def to_dict(self, include_requests: bool = False, include_windows: bool = False) -> dict[str, Any]:
        d = {
            "trace": self.trace_name,
            "capacity_bytes": self.capacity,
            "policy": self.policy,
            "latency": self.latency_model,
            "seed": self.seed,
            "num_requests": self.num_requests,
            "counts": {"hits": self.hits, "misses": self.misses, "delayed_hits": self.delayed_hits},
            "evictions": self.evictions,
            "total_latency_ms": self.total_latency,
            "per_object": {str(k): asdict(v) for k, v in sorted(self.per_object.items())},
        }
        if include_requests:
            d["latencies_ms"] = self.latencies
            d["kinds"] = self.kinds
        if include_windows:
            d["windows"] = [asdict(w) for w in self.windows]
        return d

    def to_json(self, path: str | Path | None = None, **kwargs) -> str:
        text = json.dumps(self.to_dict(**kwargs), sort_keys=True, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def write_request_csv(self, trace: Sequence[TraceRecord], path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["request_index", "time_ms", "object_id", "kind", "latency_ms"])
            for i, (rec, kind, lat) in enumerate(zip(trace, self.kinds, self.latencies)):
                w.writerow([i, repr(rec.time), rec.object_id, kind, repr(lat)])


@dataclass(frozen=True)
class Decision:
    time: float
    admitted: int
    victim: int
    rank: float
    mean_term: float
    sigma_term: float
    residual: float
    size: int


def write_decisions_csv(decisions: Iterable[Decision], path: str | Path) -> None:
    cols = list(Decision.__dataclass_fields__)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for d in decisions:
            w.writerow([getattr(d, c) for c in cols])


def validate_trace(trace: Sequence[TraceRecord], capacity: int) -> None:
    check_sorted(trace)
    big = max((r.size for r in trace), default=0)
    if big >= capacity:
        raise ValueError(f"object size {big} is not below cache capacity {capacity}")


def simulate(
    trace: Sequence[TraceRecord],
    config: CacheConfig,
    latency: LatencyModel,
    policy: Policy | None = None,
    *,
    check_invariants: bool = False,
    decisions: list[Decision] | None = None,
    trace_name: str | None = None,
) -> SimReport:
    """Replay ``trace`` and account every request's latency.

    ``check_invariants`` re-verifies the capacity and residency invariants
    after every event. Pass a list as ``decisions`` to collect one
    :class:`Decision` per evicted object.
    """
    validate_trace(trace, config.capacity)
    if policy is None:
        policy = make_policy(config.policy, latency)
    capacity = config.capacity
    report = SimReport(
        trace_name=trace_name or getattr(trace, "name", "trace"),
        capacity=capacity,
        policy=config.policy.to_dict(),
        latency_model=asdict(latency),
        seed=config.seed,
    )
    resident: dict[int, int] = {}
    used = 0
    in_flight: dict[int, FetchWindow] = {}
    pending: list[tuple[float, int, int]] = []  # (done, sequence, object id)
    seq = 0
    latencies = report.latencies
    kinds = report.kinds
    per_object = report.per_object
    windows = report.windows

    def check():
        assert used == sum(resident.values()) <= capacity, "capacity invariant broken"
        assert not resident.keys() & in_flight.keys(), "object both resident and in flight"

    def complete(done: float, oid: int) -> None:
        nonlocal used
        w = in_flight.pop(oid)
        size = trace[w.miss_index].size
        needed = used + size - capacity
        if needed > 0:
            try:
                victims = policy.choose_victims(resident, needed, done)
            except CapacityError as e:
                raise CapacityError(f"at t={done}: admitting object {oid}: {e}") from None
            for vid, score in victims:
                used -= resident.pop(vid)
                policy.on_evict(vid, done)
                report.evictions += 1
                if decisions is not None:
                    decisions.append(
                        Decision(done, oid, vid, score.value, score.mean_term, score.sigma_term, score.residual, score.size)
                    )
        resident[oid] = size
        used += size
        policy.on_admit(oid, done)
        windows.append(w)
        if check_invariants:
            check()

    for idx, rec in enumerate(trace):
        t = rec.time
        while pending and pending[0][0] <= t:
            done, _, oid = heapq.heappop(pending)
            complete(done, oid)
        policy.on_request(rec)
        oid = rec.object_id
        summ = per_object.get(oid)
        if summ is None:
            summ = per_object[oid] = ObjectSummary()
        summ.requests += 1
        if oid in resident:
            lat = 0.0
            kinds.append(HIT)
            summ.hits += 1
        else:
            w = in_flight.get(oid)
            if w is not None:
                lat = w.done - t
                w.latency += lat
                w.delayed_hits += 1
                kinds.append(DELAYED)
                summ.delayed_hits += 1
            else:
                z = latency(rec.size)
                w = FetchWindow(oid, t, t + z, z, idx, latency=z)
                in_flight[oid] = w
                heapq.heappush(pending, (w.done, seq, oid))
                seq += 1
                policy.on_fetch_start(oid, t)
                lat = z
                kinds.append(MISS)
                summ.misses += 1
        summ.latency += lat
        latencies.append(lat)
        if check_invariants:
            check()
    while pending:
        done, _, oid = heapq.heappop(pending)
        complete(done, oid)

    report.num_requests = len(latencies)
    report.hits = kinds.count(HIT)
    report.misses = kinds.count(MISS)
    report.delayed_hits = kinds.count(DELAYED)
    report.total_latency = math.fsum(latencies)
    return report


@dataclass
class CellResult:
    trace_name: str
    config: RunConfig
    report: SimReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_cell(args: tuple[Trace, RunConfig]) -> CellResult:
    trace, cfg = args
    try:
        rep = simulate(trace, cfg.cache, cfg.latency, trace_name=trace.name)
    except Exception as e:  # a failed cell must not abort the grid
        log.error("cell %s / %s failed: %s", trace.name, cfg.cache.policy.label, e)
        return CellResult(trace.name, cfg, error=f"{type(e).__name__}: {e}")
    return CellResult(trace.name, cfg, rep)


def run_matrix(traces: Sequence[Trace], configs: Sequence[RunConfig], workers: int = 1) -> list[CellResult]:
    """Simulate every (trace, config) pair; results come back in grid order."""
    cells = [(tr, cfg) for tr in traces for cfg in configs]
    if workers <= 1 or len(cells) <= 1:
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, cells))
