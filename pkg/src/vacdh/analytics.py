"""Aggregate-delay statistics under Poisson arrivals.

The aggregate delay of one fetch window is the miss latency ``z`` plus the
remaining fetch time of every request that joins the outstanding fetch.
With Poisson arrivals at rate ``lam`` the number of joiners is
Poisson(``lam * z``) and, given ``k`` joiners, the delay is ``z`` plus a sum
of ``k`` independent Uniform(0, z) terms (a shifted, scaled Irwin-Hall law).

Also here: the prior-work estimators (MAD, LAC, CALA), the offline
aggregate delay of a concrete trace, the Monte Carlo sampler used as the
oracle for all distribution checks, and a KS statistic that copes with the
atom at ``z``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .model import TraceRecord

TAIL_TOL = 1e-12
GAUSSIAN_K_THRESHOLD = 50


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be non-negative, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


# --- Poisson counts ---------------------------------------------------------


def poisson_count_pmf(k: int, lam: float, z: float) -> float:
    """P(k arrivals during a fetch of length ``z`` at rate ``lam``)."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    mu = lam * z
    if mu == 0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1))


def truncation_index(mu: float, tol: float = TAIL_TOL) -> int:
    """Smallest ``k`` with P(N > k) < tol for N ~ Poisson(mu), capped at 10*mu + 50."""
    if mu == 0:
        return 0
    cap = int(math.ceil(10 * mu + 50))
    k = int(mu)
    while k < cap and special.pdtrc(k, mu) >= tol:
        k += 1
    # walk back in case the mode start overshot
    while k > 0 and special.pdtrc(k - 1, mu) < tol:
        k -= 1
    return k


@dataclass(frozen=True)
class DelayDistribution:
    """Aggregate-delay law for rate ``lam`` (1/ms) and fetch latency ``z`` (ms)."""

    lam: float
    z: float
    k_max: int = field(default=-1)
    gaussian_threshold: int = GAUSSIAN_K_THRESHOLD

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not self.z > 0:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.k_max < 0:
            object.__setattr__(self, "k_max", truncation_index(self.mu))

    @property
    def mu(self) -> float:
        return self.lam * self.z

    @property
    def atom(self) -> float:
        return math.exp(-self.mu)

    @property
    def tail_mass(self) -> float:
        """Probability mass of the mixture components dropped by truncation."""
        return float(special.pdtrc(self.k_max, self.mu)) if self.mu > 0 else 0.0

    def weights(self) -> np.ndarray:
        """Poisson weights P(N = k) for k = 0..k_max."""
        return np.array([poisson_count_pmf(k, self.lam, self.z) for k in range(self.k_max + 1)])


# --- Irwin-Hall pieces ------------------------------------------------------


def conditional_pdf(d: float, k: int, z: float, gaussian_threshold: int = GAUSSIAN_K_THRESHOLD) -> float:
    """Density of the aggregate delay at ``d`` given ``k >= 1`` joining requests.

    The alternating Irwin-Hall sum is evaluated in exact rational arithmetic,
    so there is no cancellation error; the result is the correctly rounded
    float. Above ``gaussian_threshold`` the normal approximation is used.
    """
    if k < 1:
        raise ValueError("conditional_pdf needs k >= 1; k = 0 is the atom at z")
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    if d < z or d > (k + 1) * z:
        return 0.0
    if k > gaussian_threshold:
        return _normal_pdf(d, *_gauss_params(k, z))
    df, zf = Fraction(d), Fraction(z)
    a, b = df.numerator, df.denominator
    c, e = zf.numerator, zf.denominator
    # d - (j+1) z = (a e - (j+1) c b) / (b e)
    top = min(math.floor(df / zf) - 1, k)
    total = 0
    for j in range(top + 1):
        term = math.comb(k, j) * (a * e - (j + 1) * c * b) ** (k - 1)
        total += -term if j & 1 else term
    num = total * e**k
    den = (b * e) ** (k - 1) * c**k * math.factorial(k - 1)
    return num / den


def conditional_cdf_exact(d: float, k: int, z: float) -> float:
    """P(D <= d | k joiners) from the alternating Irwin-Hall CDF sum, exactly."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if d <= z:
        return 0.0
    if d >= (k + 1) * z:
        return 1.0
    x = (Fraction(d) - Fraction(z)) / Fraction(z)
    total = sum(
        (-1) ** j * math.comb(k, j) * (x - j) ** k for j in range(math.floor(x) + 1)
    )
    return float(total / math.factorial(k))


def irwin_hall_table(x: np.ndarray, k_top: int, cumulative: bool = False) -> np.ndarray:
    """Irwin-Hall density (or CDF) of orders 1..k_top evaluated at ``x``.

    Row ``k - 1`` of the result holds order ``k``. Uses the B-spline
    recursion, whose terms are all non-negative on the support, so it is
    stable for any order.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((k_top,) + x.shape)
    if k_top == 0:
        return out
    shifts = np.arange(k_top, dtype=float).reshape((-1,) + (1,) * x.ndim)
    y = x - shifts  # y[j] = x - j
    if cumulative:
        level = np.clip(y, 0.0, 1.0)
    else:
        level = ((y >= 0.0) & (y < 1.0)).astype(float)
    out[0] = level[0]
    for m in range(2, k_top + 1):
        n = k_top - m + 1
        ym = y[:n]
        left, right = level[:n], level[1 : n + 1]
        if cumulative:
            # (m - y) may go negative off-support; right term is then 1 and left is 1
            level = (ym * left + (m - ym) * right) / m
        else:
            level = (ym * left + (m - ym) * right) / (m - 1)
        out[m - 1] = level[0]
    if cumulative:
        np.clip(out, 0.0, 1.0, out=out)
    else:
        np.maximum(out, 0.0, out=out)
    return out


def _gauss_params(k: int, z: float) -> tuple[float, float]:
    m = conditional_moments(k, z)
    return m.mean, m.std


def _normal_pdf(x, mean, sd):
    return np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


def _normal_cdf(x, mean, sd):
    return 0.5 * special.erfc(-(x - mean) / (sd * math.sqrt(2)))


# --- mixture ----------------------------------------------------------------


def _component_table(d: np.ndarray, dist: DelayDistribution, cumulative: bool) -> np.ndarray:
    k_max, z = dist.k_max, dist.z
    k_ih = min(k_max, dist.gaussian_threshold)
    rows = np.zeros((k_max,) + d.shape)
    if k_ih:
        tab = irwin_hall_table((d - z) / z, k_ih, cumulative=cumulative)
        rows[:k_ih] = tab if cumulative else tab / z
    for k in range(k_ih + 1, k_max + 1):
        mean, sd = _gauss_params(k, z)
        rows[k - 1] = _normal_cdf(d, mean, sd) if cumulative else _normal_pdf(d, mean, sd)
    return rows


def mixture_pdf(d, dist: DelayDistribution) -> tuple[float, np.ndarray | float]:
    """Return ``(atom_weight, continuous_density(d))``.

    The atom ``exp(-lam z)`` at ``d = z`` is reported on its own and never
    folded into the density.
    """
    arr = np.asarray(d, dtype=float)
    if dist.k_max == 0:
        dens = np.zeros_like(arr)
    else:
        w = dist.weights()[1:]
        rows = _component_table(arr, dist, cumulative=False)
        dens = np.tensordot(w, rows, axes=1)
        dens = np.where(arr < dist.z, 0.0, dens)
    return dist.atom, (float(dens) if np.ndim(d) == 0 else dens)


def mixture_cdf(d, dist: DelayDistribution, left: bool = False):
    """P(D <= d) (or P(D < d) with ``left=True``) for the truncated mixture."""
    arr = np.asarray(d, dtype=float)
    atom_on = arr > dist.z if left else arr >= dist.z
    out = np.where(atom_on, dist.atom, 0.0)
    if dist.k_max:
        w = dist.weights()[1:]
        rows = _component_table(arr, dist, cumulative=True)
        cont = np.tensordot(w, rows, axes=1)
        out = out + np.where(arr < dist.z, 0.0, cont)
    return float(out) if np.ndim(d) == 0 else out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _unit_segments(dist: DelayDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on each [m z, (m+1) z], m = 1..k_max.

    The conditional densities are polynomials of degree < k on each such
    segment, so 64 nodes integrate them exactly for k <= 128.
    """
    z = dist.z
    segs = np.arange(1, dist.k_max + 1, dtype=float) * z
    half = z / 2
    nodes = (segs[:, None] + half) + half * _GL_NODES[None, :]
    weights = np.broadcast_to(half * _GL_WEIGHTS, nodes.shape)
    return nodes.ravel(), np.ascontiguousarray(weights).ravel()


def continuous_mass(dist: DelayDistribution) -> float:
    """Integral of the continuous part of the mixture density."""
    if dist.k_max == 0:
        return 0.0
    nodes, weights = _unit_segments(dist)
    _, dens = mixture_pdf(nodes, dist)
    return float(np.dot(weights, dens))


def quadrature_moments(dist: DelayDistribution) -> MomentPair:
    """Mean and variance of the mixture by quadrature over its density."""
    z, atom = dist.z, dist.atom
    if dist.k_max == 0:
        return MomentPair(z, 0.0)
    nodes, weights = _unit_segments(dist)
    _, dens = mixture_pdf(nodes, dist)
    mass = atom + float(np.dot(weights, dens))
    m1 = (atom * z + float(np.dot(weights, dens * nodes))) / mass
    m2 = (atom * (z - m1) ** 2 + float(np.dot(weights, dens * (nodes - m1) ** 2))) / mass
    return MomentPair(m1, m2)


def conditional_quadrature_moments(k: int, z: float) -> MomentPair:
    """Mean and variance of the k-joiner conditional law by quadrature over its density."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.arange(k, dtype=float)[:, None] + (1 + _GL_NODES[None, :]) / 2  # in [0, k]
    w = np.broadcast_to(_GL_WEIGHTS / 2, x.shape)
    x, w = x.ravel(), w.ravel()
    dens = irwin_hall_table(x, k)[k - 1]
    d = z + z * x  # d-space density is dens / z, and dd = z dx
    mass = float(np.dot(w, dens))
    mean = float(np.dot(w, dens * d)) / mass
    var = float(np.dot(w, dens * (d - mean) ** 2)) / mass
    return MomentPair(mean, var)


# --- moments ----------------------------------------------------------------


def conditional_moments(k: int, z: float) -> MomentPair:
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return MomentPair(z * (1 + k / 2), k * z * z / 12)


def delay_moments(lam: float, z: float) -> MomentPair:
    if not lam >= 0 or not z > 0:
        raise ValueError(f"need lam >= 0 and z > 0, got lam={lam}, z={z}")
    return MomentPair(z * (1 + lam * z / 2), z**3 * lam / 3)


def gaussian_approx(k: int, z: float) -> MomentPair:
    """Normal(mean, variance) parameters approximating the k-joiner conditional law."""
    if k < 1:
        raise ValueError("gaussian_approx needs k >= 1")
    return conditional_moments(k, z)


# --- Monte Carlo ------------------------------------------------------------


def sample_aggregate_delay(lam: float, z: float, rng: np.random.Generator) -> float:
    """One draw: k ~ Poisson(lam z), then z + sum of k Uniform(0, z)."""
    k = int(rng.poisson(lam * z))
    if k == 0:
        return z
    return z + z * float(rng.random(k).sum())


def sample_aggregate_delays(lam: float, z: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent draws, vectorized; same law as :func:`sample_aggregate_delay`."""
    counts = rng.poisson(lam * z, size=n)
    total = int(counts.sum())
    if total == 0:
        return np.full(n, float(z))
    u = rng.random(total)
    owner = np.repeat(np.arange(n), counts)
    return z + z * np.bincount(owner, weights=u, minlength=n)


def ks_statistic(samples: np.ndarray, cdf: Callable, cdf_left: Callable | None = None) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``.

    ``cdf_left(x)`` must give P(X < x) when the law has atoms; without it the
    law is taken to be continuous. Ties in ``samples`` are handled exactly.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    vals, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f_right = np.asarray(cdf(vals), dtype=float)
    f_left = np.asarray(cdf_left(vals), dtype=float) if cdf_left is not None else f_right
    return float(max(np.max(np.abs(upper - f_right)), np.max(np.abs(lower - f_left))))


# --- offline aggregate delay -------------------------------------------------


def expost_aggregate_delay(
    trace: Sequence[TraceRecord],
    miss_time: float,
    object_id: int,
    z: float,
    miss_index: int | None = None,
) -> float:
    """Aggregate delay of the fetch window opened by a miss at ``miss_time``.

    Each later request for ``object_id`` arriving no later than
    ``miss_time + z`` adds its remaining fetch time. Pass ``miss_index`` to
    count requests by trace position, which also covers requests sharing the
    miss timestamp; otherwise only strictly later timestamps count.
    """
    done = miss_time + z
    if miss_index is None:
        start = bisect.bisect_right(trace, miss_time, key=lambda r: r.time)
    else:
        start = miss_index + 1
    total = z
    for i in range(start, len(trace)):
        r = trace[i]
        if r.time > done:
            break
        if r.object_id == object_id:
            total += done - r.time
    return total


# --- prior-work estimators ---------------------------------------------------


def mad_estimate(history: Iterable[float], z: float) -> float:
    """Mean of past per-fetch aggregate delays; ``z`` when there is no history."""
    h = list(history)
    if not h:
        return z
    return sum(h) / len(h)


def lac_estimate(lam: float, z: float) -> float:
    return (1 + 1 / (1 + lam * z)) * z / 2


def cala_estimate(agg_delay_mean: float, z: float, gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return (1 - gamma) * agg_delay_mean + gamma * z * z


class AsIfMissDelays:
    """Online MAD bookkeeping for one object.

    Every request is treated as if it missed: it opens a virtual fetch window
    of length ``z`` that collects the remaining fetch time of later requests.
    A window's delay enters the running mean once the clock passes its end.
    """

    __slots__ = ("z", "open", "total", "count")

    def __init__(self, z: float):
        self.z = z
        self.open: list[list[float]] = []  # [window end, accumulated delay]
        self.total = 0.0
        self.count = 0

    def _close_until(self, now: float, inclusive: bool) -> None:
        keep = 0
        for w in self.open:
            if w[0] < now or (inclusive and w[0] <= now):
                self.total += w[1]
                self.count += 1
            else:
                self.open[keep] = w
                keep += 1
        del self.open[keep:]

    def observe(self, t: float) -> None:
        self._close_until(t, inclusive=False)
        for w in self.open:
            w[1] += w[0] - t
        self.open.append([t + self.z, self.z])

    def mean(self, now: float) -> float:
        self._close_until(now, inclusive=True)
        if self.count == 0:
            return self.z
        return self.total / self.count


# --- validation ---------------------------------------------------------------


@dataclass
class DistributionCheck:
    lam: float
    z: float
    n_samples: int
    seed: int
    normalization_error: float
    mean_rel_error: float
    var_rel_error: float
    ks: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


NORMALIZATION_TOL = 1e-6
MEAN_TOL = 0.005
VAR_TOL = 0.02
KS_TOL = 0.01


def _rel(est: float, exact: float) -> float:
    if exact == 0:
        return abs(est)
    return abs(est - exact) / abs(exact)


def check_distribution(lam: float, z: float, n_samples: int, seed: int = 0, ks_samples: int | None = None) -> DistributionCheck:
    """Normalization, Monte Carlo moments and KS distance for one (lam, z)."""
    dist = DelayDistribution(lam, z)
    norm_err = abs(dist.atom + continuous_mass(dist) - 1.0)
    rng = np.random.default_rng(seed)
    xs = sample_aggregate_delays(lam, z, n_samples, rng)
    exact = delay_moments(lam, z)
    mean_err = _rel(float(xs.mean()), exact.mean)
    var_err = _rel(float(xs.var(ddof=1)) if n_samples > 1 else 0.0, exact.variance)
    ks_xs = xs[: ks_samples] if ks_samples else xs
    ks = ks_statistic(
        ks_xs,
        lambda v: mixture_cdf(v, dist),
        lambda v: mixture_cdf(v, dist, left=True),
    )
    passed = (
        norm_err <= NORMALIZATION_TOL and mean_err <= MEAN_TOL and var_err <= VAR_TOL and ks <= KS_TOL
    )
    return DistributionCheck(lam, z, n_samples, seed, norm_err, mean_err, var_err, ks, passed)
