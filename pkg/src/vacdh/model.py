"""Shared domain types: trace records, the fetch-latency model and configs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence


class PolicyKind(str, Enum):
    LRU = "LRU"
    LRU_MAD = "LRU_MAD"
    LAC = "LAC"
    CALA = "CALA"
    VA_CDH = "VA_CDH"

    @classmethod
    def parse(cls, value: "str | PolicyKind") -> "PolicyKind":
        if isinstance(value, PolicyKind):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown policy kind {value!r}; expected one of "
                f"{', '.join(k.value for k in cls)}"
            ) from None


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One request: arrival time (ms), dense object id, object size (bytes)."""

    time: float
    object_id: int
    size: int

    def __post_init__(self):
        if not self.time >= 0:
            raise ValueError(f"time must be non-negative, got {self.time}")
        if self.size <= 0:
            raise ValueError(f"size must be positive, got {self.size}")


@dataclass
class Trace:
    """An ordered request stream plus the sidecar map back to original keys.

    ``keys[i]`` is the original (string) key of dense object id ``i``; it is
    empty for synthetic traces.
    """

    records: list[TraceRecord]
    keys: list[str] = field(default_factory=list)
    name: str = "trace"

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def max_size(self) -> int:
        return max((r.size for r in self.records), default=0)

    @property
    def num_objects(self) -> int:
        return len({r.object_id for r in self.records})


def check_sorted(records: Sequence[TraceRecord]) -> None:
    prev = None
    for i, r in enumerate(records):
        if prev is not None and r.time < prev:
            raise ValueError(
                f"trace not time-sorted at index {i}: {r.time} < {prev}"
            )
        prev = r.time


@dataclass(frozen=True)
class LatencyModel:
    """Deterministic miss latency ``z(size) = base_ms + coeff_ms_per_byte * size``."""

    base_ms: float = 10.0
    coeff_ms_per_byte: float = 0.0

    def __post_init__(self):
        if self.base_ms < 0 or self.coeff_ms_per_byte < 0:
            raise ValueError("latency parameters must be non-negative")
        if self.base_ms == 0 and self.coeff_ms_per_byte == 0:
            raise ValueError("latency model would give zero fetch latency")

    def __call__(self, size: int) -> float:
        return fetch_latency(self, size)


def fetch_latency(model: LatencyModel, size: int) -> float:
    if size <= 0:
        raise ValueError(f"object size must be positive, got {size}")
    return model.base_ms + model.coeff_ms_per_byte * size


# Named presets; the coefficient is spelled out because it has no canonical value.
LATENCY_PRESETS: dict[str, LatencyModel] = {
    "L10_c0": LatencyModel(10.0, 0.0),
    "L10_c1e-7": LatencyModel(10.0, 1e-7),
    "L10_c5e-7": LatencyModel(10.0, 5e-7),
    "L10_c1e-6": LatencyModel(10.0, 1e-6),
}


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.VA_CDH
    omega: float = 1.0
    gamma: float = 0.5
    window_size: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        if not self.omega >= 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if int(self.window_size) != self.window_size or self.window_size < 1:
            raise ValueError(
                f"window_size must be a positive integer, got {self.window_size}"
            )

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.VA_CDH:
            return f"VA_CDH(omega={self.omega:g},S={self.window_size})"
        if self.kind is PolicyKind.CALA:
            return f"CALA(gamma={self.gamma:g})"
        if self.kind is PolicyKind.LAC:
            return f"LAC(S={self.window_size})"
        return self.kind.value

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "omega": self.omega,
            "gamma": self.gamma,
            "window_size": self.window_size,
        }


@dataclass(frozen=True)
class CacheConfig:
    capacity: int
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    seed: int = 0

    def __post_init__(self):
        if int(self.capacity) != self.capacity or self.capacity <= 0:
            raise ValueError(f"capacity must be a positive integer, got {self.capacity}")

    def to_dict(self) -> dict[str, Any]:
        return {"capacity_bytes": self.capacity, "policy": self.policy.to_dict(), "seed": self.seed}


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation needs, as read from a config file."""

    cache: CacheConfig
    latency: LatencyModel

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        lat = data.get("latency", {}) or {}
        pol = data.get("policy", {}) or {}
        if "capacity_bytes" not in data:
            raise ValueError("config is missing capacity_bytes")
        policy = PolicyConfig(
            kind=pol.get("kind", PolicyKind.VA_CDH),
            omega=float(pol.get("omega", 1.0)),
            gamma=float(pol.get("gamma", 0.5)),
            window_size=int(pol.get("window_size", 10_000)),
        )
        return cls(
            cache=CacheConfig(
                capacity=int(data["capacity_bytes"]),
                policy=policy,
                seed=int(data.get("seed", 0)),
            ),
            latency=LatencyModel(
                base_ms=float(lat.get("base_ms", 10.0)),
                coeff_ms_per_byte=float(lat.get("coeff_ms_per_byte", 0.0)),
            ),
        )

    def to_dict(self) -> dict[str, Any]:
        d = self.cache.to_dict()
        d["latency"] = asdict(self.latency)
        return d


def load_config(path: str | Path) -> dict[str, Any]:
    """Read a JSON config file into a plain dict."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top-level config must be a JSON object")
    return data
