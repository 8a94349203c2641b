"""Synthetic trace generation and CSV trace ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping

import numpy as np

from .model import Trace, TraceRecord

log = logging.getLogger(__name__)

MB = 1_000_000


@dataclass(frozen=True)
class PoissonArrivals:
    rate: float = 0.1  # requests per ms, whole stream

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Poisson rate must be positive, got {self.rate}")

    @property
    def mean_gap(self) -> float:
        return 1.0 / self.rate

    def gaps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(self.mean_gap, size=n)


@dataclass(frozen=True)
class ParetoArrivals:
    """Classical Pareto inter-arrival gaps, ``P(X > x) = (scale / x) ** shape``."""

    shape: float = 2.5
    scale: float = 6.0  # load-matched to PoissonArrivals()

    def __post_init__(self):
        if not self.shape > 1:
            raise ValueError(f"Pareto shape must exceed 1 for a finite mean, got {self.shape}")
        if not self.scale > 0:
            raise ValueError(f"Pareto scale must be positive, got {self.scale}")

    @classmethod
    def load_matched(cls, rate: float, shape: float = 2.5) -> "ParetoArrivals":
        """Pareto gaps with the same mean as Poisson arrivals at ``rate``."""
        return cls(shape=shape, scale=(shape - 1.0) / (shape * rate))

    @property
    def mean_gap(self) -> float:
        return self.shape * self.scale / (self.shape - 1.0)

    def gaps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # numpy's pareto() is the Lomax form; shift by one to get the classical one
        return self.scale * (1.0 + rng.pareto(self.shape, size=n))


@dataclass(frozen=True)
class SyntheticSpec:
    num_requests: int = 100_000
    num_objects: int = 100
    zipf_exponent: float = 1.0
    size_range: tuple[int, int] = (1 * MB, 100 * MB)
    arrival: PoissonArrivals | ParetoArrivals = field(default_factory=PoissonArrivals)
    seed: int = 0

    def __post_init__(self):
        problems = []
        if int(self.num_requests) != self.num_requests or self.num_requests < 1:
            problems.append(f"num_requests must be a positive integer (got {self.num_requests})")
        if int(self.num_objects) != self.num_objects or self.num_objects < 1:
            problems.append(f"num_objects must be a positive integer (got {self.num_objects})")
        if not self.zipf_exponent > 0:
            problems.append(f"zipf_exponent must be positive (got {self.zipf_exponent})")
        lo, hi = self.size_range
        if lo < 1 or hi < lo:
            problems.append(f"size_range must satisfy 1 <= min <= max (got {self.size_range})")
        if problems:
            raise ValueError("invalid SyntheticSpec: " + "; ".join(problems))
        object.__setattr__(self, "size_range", (int(lo), int(hi)))


def zipf_pmf(num_objects: int, exponent: float) -> np.ndarray:
    """Rank-frequency Zipf weights; entry ``r`` is the probability of rank ``r + 1``."""
    w = np.arange(1, num_objects + 1, dtype=float) ** (-exponent)
    return w / w.sum()


def generate(spec: SyntheticSpec) -> Trace:
    """Generate a trace: global arrival process, i.i.d. Zipf object draws.

    Object ``0`` is the most popular. Each object's size is drawn once,
    uniformly over ``spec.size_range``, and reused for all its requests.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.size_range
    sizes = rng.integers(lo, hi + 1, size=spec.num_objects)
    objects = rng.choice(spec.num_objects, size=spec.num_requests, p=zipf_pmf(spec.num_objects, spec.zipf_exponent))
    gaps = spec.arrival.gaps(rng, spec.num_requests)
    times = np.cumsum(gaps)
    # exponential draws can round to 0; keep timestamps strictly increasing
    for i in np.flatnonzero(np.diff(times) <= 0) + 1:
        times[i] = np.nextafter(max(times[i], times[i - 1]), np.inf)
    records = [
        TraceRecord(t, o, s)
        for t, o, s in zip(times.tolist(), objects.tolist(), sizes[objects].tolist())
    ]
    return Trace(records, name=f"synthetic-seed{spec.seed}")


class TraceFormatError(ValueError):
    pass


DEFAULT_COLUMNS = {"time": "time_ms", "id": "object_id", "size": "size_bytes"}


def ingest_csv(
    path: str | Path,
    column_map: Mapping[str, str] | None = None,
    on_decreasing: Literal["fail", "clamp"] = "fail",
) -> Trace:
    """Read a CSV trace with a header row into a :class:`Trace`.

    ``column_map`` maps the logical fields ``time``, ``id`` and ``size`` to
    header names. String ids are remapped to dense integers in order of first
    appearance. A timestamp smaller than its predecessor either raises
    (``"fail"``) or is raised to the predecessor's value (``"clamp"``).
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    if on_decreasing not in ("fail", "clamp"):
        raise ValueError(f"on_decreasing must be 'fail' or 'clamp', got {on_decreasing!r}")

    records: list[TraceRecord] = []
    ids: dict[str, int] = {}
    clamped = 0
    # newline="" lets csv handle both LF and CRLF
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            log.warning("%s: empty trace file", path)
            return Trace([], [], name=Path(path).stem)
        header = [h.strip() for h in header]
        try:
            ti, ii, si = (header.index(cols[k]) for k in ("time", "id", "size"))
        except ValueError:
            raise TraceFormatError(
                f"{path}: header {header} lacks one of the columns {cols}"
            ) from None
        width = max(ti, ii, si)
        prev = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= width:
                raise TraceFormatError(f"{path}:{line}: expected at least {width + 1} columns, got {len(row)}")
            try:
                t = float(row[ti])
                size = int(row[si])
            except ValueError as e:
                raise TraceFormatError(f"{path}:{line}: {e}") from None
            if not t >= 0 or t == float("inf"):
                raise TraceFormatError(f"{path}:{line}: bad timestamp {row[ti]!r}")
            if size <= 0:
                raise TraceFormatError(f"{path}:{line}: size must be positive, got {size}")
            if prev is not None and t < prev:
                if on_decreasing == "fail":
                    raise TraceFormatError(f"{path}:{line}: timestamp {t} decreases (previous {prev})")
                t = prev
                clamped += 1
            key = row[ii].strip()
            oid = ids.setdefault(key, len(ids))
            records.append(TraceRecord(t, oid, size))
            prev = t
    if clamped:
        log.warning("%s: clamped %d decreasing timestamps", path, clamped)
    if not records:
        log.warning("%s: trace has no records", path)
    return Trace(records, list(ids), name=Path(path).stem)


def write_csv(trace: Trace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([DEFAULT_COLUMNS["time"], DEFAULT_COLUMNS["id"], DEFAULT_COLUMNS["size"]])
        keys = trace.keys
        for r in trace.records:
            w.writerow([repr(r.time), keys[r.object_id] if keys else r.object_id, r.size])
