"""Naive reference simulator used as an oracle for the engine.

Written without the engine's data structures: state is plain lists, due
fetches are found by scanning, and every rank is recomputed from the raw
request history (learning windows are fixed blocks of S requests).
Quadratic, so only for small traces.
"""

import math

FLOOR = 1e-3


def _lambda_hat(times, objs, gaps, processed, obj, S):
    """Rate from the latest completed block of S requests with a gap sample for obj."""
    blocks = processed // S
    for b in range(blocks - 1, -1, -1):
        samples = [gaps[j] for j in range(b * S, (b + 1) * S) if objs[j] == obj and gaps[j] is not None]
        if samples:
            return 1.0 / max(math.fsum(samples) / len(samples), FLOOR)
    return 0.0


def naive_simulate(trace, capacity, base_ms, coeff, kind="LRU", omega=1.0, S=10):
    times = [r.time for r in trace]
    objs = [r.object_id for r in trace]
    sizes = [r.size for r in trace]
    gaps = []
    for j in range(len(trace)):
        prev = [i for i in range(j) if objs[i] == objs[j]]
        gaps.append(times[j] - times[prev[-1]] if prev else None)

    def z_of(size):
        return base_ms + coeff * size

    resident = []  # [object, size]
    fetches = []  # [done, seq, object, size]
    latencies = []
    seq = 0

    def rank(obj, now, processed):
        last = max(times[j] for j in range(processed) if objs[j] == obj)
        if kind == "LRU":
            return last
        size = [s for o, s in resident if o == obj][0]
        z = z_of(size)
        lam = _lambda_hat(times, objs, gaps, processed, obj, S)
        r = max(now - last, FLOOR)
        return (z * (1 + lam * z / 2) + omega * z * math.sqrt(lam * z / 3)) / (r * size)

    def last_access(obj, processed):
        return max(times[j] for j in range(processed) if objs[j] == obj)

    def complete_due(until, processed):
        while True:
            due = [f for f in fetches if until is None or f[0] <= until]
            if not due:
                return
            f = min(due, key=lambda f: (f[0], f[1]))
            fetches.remove(f)
            done, _, obj, size = f
            while sum(s for _, s in resident) + size > capacity:
                victim = min(resident, key=lambda e: (rank(e[0], done, processed), last_access(e[0], processed), e[0]))
                resident.remove(victim)
            resident.append([obj, size])

    for idx in range(len(trace)):
        t, obj, size = times[idx], objs[idx], sizes[idx]
        complete_due(t, idx)
        if any(o == obj for o, _ in resident):
            latencies.append(0.0)
            continue
        f = [f for f in fetches if f[2] == obj]
        if f:
            latencies.append(f[0][0] - t)
            continue
        z = z_of(size)
        fetches.append([t + z, seq, obj, size])
        seq += 1
        latencies.append(z)
    return latencies
