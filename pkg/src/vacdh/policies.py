"""Eviction policies for caches with delayed hits.

Every policy keeps the same per-object bookkeeping (last arrival, windowed
inter-arrival samples, estimated arrival rate) and differs only in how it
turns that state into a rank. Lower rank means evicted first.

VA-CDH ranks an object by ``(E[D] + omega * sigma[D]) / (R * s)`` where
``E[D] = z (1 + lam z / 2)`` and ``sigma[D] = z sqrt(lam z / 3)`` are the
aggregate-delay mean and standard deviation under Poisson arrivals, ``R`` is
the time since the last request and ``s`` the object size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .analytics import AsIfMissDelays, cala_estimate, lac_estimate
from .model import LatencyModel, PolicyConfig, PolicyKind, TraceRecord

# Floor on the residual-time estimate (ms), so ranks stay finite at R = 0.
RESIDUAL_FLOOR = 1e-3


class CapacityError(RuntimeError):
    """Not enough evictable bytes to admit an object."""


@dataclass(frozen=True)
class RankScore:
    value: float
    mean_term: float = 0.0
    sigma_term: float = 0.0
    residual: float = 0.0
    size: int = 0


def estimate_lambda(samples: Sequence[float]) -> float:
    """Arrival rate as the reciprocal of the mean inter-arrival gap.

    No samples gives 0 (cold start: no invented popularity).
    """
    if not samples:
        return 0.0
    mean_gap = math.fsum(samples) / len(samples)
    return 1.0 / max(mean_gap, RESIDUAL_FLOOR)


def estimate_residual(now: float, last_arrival: float) -> float:
    if now < last_arrival:
        raise ValueError(f"now={now} precedes last arrival {last_arrival}")
    return max(now - last_arrival, RESIDUAL_FLOOR)


def rank_va_cdh(lam: float, z: float, residual: float, size: float, omega: float) -> RankScore:
    if residual <= 0 or size <= 0:
        raise ValueError(f"residual and size must be positive, got R={residual}, s={size}")
    if z <= 0 or omega < 0 or lam < 0:
        raise ValueError(f"need z > 0, omega >= 0, lam >= 0 (z={z}, omega={omega}, lam={lam})")
    mean_term = z * (1 + lam * z / 2)
    sigma_term = omega * z * math.sqrt(lam * z / 3)
    return RankScore((mean_term + sigma_term) / (residual * size), mean_term, sigma_term, residual, size)


def rank_mean_only(lam: float, z: float, residual: float, size: float) -> float:
    """Rank using only the expected aggregate delay."""
    return z * (1 + lam * z / 2) / (residual * size)


def rank_baseline(
    kind: PolicyKind | str,
    *,
    z: float = 0.0,
    residual: float = 1.0,
    size: float = 1.0,
    lam: float = 0.0,
    last_access: float = 0.0,
    agg_delay: float | None = None,
    gamma: float = 0.5,
) -> RankScore:
    """Rank for the baseline policies; all but LRU share the ``R * s`` normalization."""
    kind = PolicyKind.parse(kind)
    if kind is PolicyKind.LRU:
        return RankScore(last_access)
    if residual <= 0 or size <= 0:
        raise ValueError(f"residual and size must be positive, got R={residual}, s={size}")
    if kind is PolicyKind.LRU_MAD:
        est = z if agg_delay is None else agg_delay
    elif kind is PolicyKind.LAC:
        est = lac_estimate(lam, z)
    elif kind is PolicyKind.CALA:
        est = cala_estimate(z if agg_delay is None else agg_delay, z, gamma)
    else:
        raise ValueError(f"{kind.value} is not a baseline policy")
    return RankScore(est / (residual * size), est, 0.0, residual, size)


class Candidate(NamedTuple):
    rank: float
    last_access: float
    object_id: int
    size: int


def select_victims(candidates: Iterable[Candidate], needed: int) -> list[Candidate]:
    """Evict minimum-rank objects until at least ``needed`` bytes are freed.

    Ties go to the least recently used object, then the smaller id.
    """
    if needed <= 0:
        return []
    victims = []
    freed = 0
    for c in sorted(candidates):
        victims.append(c)
        freed += c.size
        if freed >= needed:
            return victims
    raise CapacityError(f"cannot free {needed} bytes; only {freed} evictable")


@dataclass
class ObjectState:
    object_id: int
    size: int
    z: float
    last_arrival: float
    samples: list[float] = field(default_factory=list)  # gaps seen in the current window
    lambda_hat: float = 0.0
    in_flight: bool = False
    fetch_started_at: float = math.nan
    mad: AsIfMissDelays | None = None


class LearningWindow:
    """Tumbling window over the global request stream: fills to ``capacity``, then restarts."""

    __slots__ = ("capacity", "entries")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"window size must be positive, got {capacity}")
        self.capacity = capacity
        self.entries: list[tuple[float, int]] = []

    def push(self, time: float, object_id: int) -> bool:
        """Add a request; True when the window just became full."""
        self.entries.append((time, object_id))
        return len(self.entries) >= self.capacity

    def clear(self) -> None:
        self.entries.clear()


class Policy:
    """Shared per-object bookkeeping; subclasses provide :meth:`score`."""

    kind: PolicyKind
    tracks_mad = False

    def __init__(self, config: PolicyConfig, latency: LatencyModel):
        self.config = config
        self.latency = latency
        self.objects: dict[int, ObjectState] = {}
        self.window = LearningWindow(config.window_size)
        self.now = -math.inf
        self.reestimations = 0

    # -- request-driven updates

    def on_request(self, rec: TraceRecord) -> None:
        if rec.time < self.now:
            raise ValueError(f"request at {rec.time} arrives before {self.now}")
        self.now = rec.time
        st = self.objects.get(rec.object_id)
        if st is None:
            st = ObjectState(rec.object_id, rec.size, self.latency(rec.size), rec.time)
            if self.tracks_mad:
                st.mad = AsIfMissDelays(st.z)
            self.objects[rec.object_id] = st
        else:
            st.samples.append(rec.time - st.last_arrival)
            st.last_arrival = rec.time
            if rec.size != st.size:
                st.size = rec.size
                st.z = self.latency(rec.size)
                if st.mad is not None:
                    st.mad.z = st.z
        if st.mad is not None:
            st.mad.observe(rec.time)
        if self.window.push(rec.time, rec.object_id):
            self.on_window_full()

    def on_window_full(self) -> None:
        """Re-estimate rates from this window's samples, then restart the window."""
        seen = {oid for _, oid in self.window.entries}
        for oid in sorted(seen):
            st = self.objects[oid]
            if st.samples:
                st.lambda_hat = estimate_lambda(st.samples)
                st.samples = []
        self.window.clear()
        self.reestimations += 1

    # -- engine lifecycle callbacks

    def on_fetch_start(self, object_id: int, now: float) -> None:
        st = self.objects[object_id]
        st.in_flight = True
        st.fetch_started_at = now

    def on_admit(self, object_id: int, now: float) -> None:
        st = self.objects[object_id]
        st.in_flight = False
        st.fetch_started_at = math.nan

    def on_evict(self, object_id: int, now: float) -> None:
        pass

    # -- ranking

    def score(self, object_id: int, now: float) -> RankScore:
        raise NotImplementedError

    def choose_victims(self, resident: Mapping[int, int], needed: int, now: float) -> list[tuple[int, RankScore]]:
        """Pick resident objects to evict so that ``needed`` bytes are freed."""
        if needed <= 0:
            return []
        scores = {}
        cands = []
        for oid, size in resident.items():
            st = self.objects[oid]
            if st.in_flight:
                continue
            sc = self.score(oid, now)
            scores[oid] = sc
            cands.append(Candidate(sc.value, st.last_arrival, oid, size))
        return [(c.object_id, scores[c.object_id]) for c in select_victims(cands, needed)]

    def _residual(self, st: ObjectState, now: float) -> float:
        return estimate_residual(now, st.last_arrival)


class LRUPolicy(Policy):
    kind = PolicyKind.LRU

    def score(self, object_id, now):
        return rank_baseline(PolicyKind.LRU, last_access=self.objects[object_id].last_arrival)


class LRUMADPolicy(Policy):
    kind = PolicyKind.LRU_MAD
    tracks_mad = True

    def score(self, object_id, now):
        st = self.objects[object_id]
        return rank_baseline(
            self.kind, z=st.z, residual=self._residual(st, now), size=st.size, agg_delay=st.mad.mean(now)
        )


class LACPolicy(Policy):
    kind = PolicyKind.LAC

    def score(self, object_id, now):
        st = self.objects[object_id]
        return rank_baseline(self.kind, z=st.z, residual=self._residual(st, now), size=st.size, lam=st.lambda_hat)


class CALAPolicy(Policy):
    kind = PolicyKind.CALA
    tracks_mad = True

    def score(self, object_id, now):
        st = self.objects[object_id]
        return rank_baseline(
            self.kind,
            z=st.z,
            residual=self._residual(st, now),
            size=st.size,
            agg_delay=st.mad.mean(now),
            gamma=self.config.gamma,
        )


class VACDHPolicy(Policy):
    kind = PolicyKind.VA_CDH

    def score(self, object_id, now):
        st = self.objects[object_id]
        return rank_va_cdh(st.lambda_hat, st.z, self._residual(st, now), st.size, self.config.omega)


POLICIES: dict[PolicyKind, type[Policy]] = {
    PolicyKind.LRU: LRUPolicy,
    PolicyKind.LRU_MAD: LRUMADPolicy,
    PolicyKind.LAC: LACPolicy,
    PolicyKind.CALA: CALAPolicy,
    PolicyKind.VA_CDH: VACDHPolicy,
}


def make_policy(config: PolicyConfig, latency: LatencyModel) -> Policy:
    return POLICIES[config.kind](config, latency)
