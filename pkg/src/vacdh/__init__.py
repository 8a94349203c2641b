"""Delayed-hit cache simulation and the variance-aware VA-CDH eviction policy."""

from .analytics import (
    DelayDistribution,
    MomentPair,
    cala_estimate,
    conditional_moments,
    conditional_pdf,
    delay_moments,
    expost_aggregate_delay,
    gaussian_approx,
    lac_estimate,
    mad_estimate,
    mixture_cdf,
    mixture_pdf,
    poisson_count_pmf,
    sample_aggregate_delay,
)
from .engine import SimReport, run_matrix, simulate
from .model import CacheConfig, LatencyModel, PolicyConfig, PolicyKind, RunConfig, Trace, TraceRecord, fetch_latency
from .policies import estimate_lambda, estimate_residual, make_policy, rank_baseline, rank_va_cdh, select_victims
from .workload import ParetoArrivals, PoissonArrivals, SyntheticSpec, generate, ingest_csv

__all__ = [
    "CacheConfig",
    "DelayDistribution",
    "LatencyModel",
    "MomentPair",
    "ParetoArrivals",
    "PoissonArrivals",
    "PolicyConfig",
    "PolicyKind",
    "RunConfig",
    "SimReport",
    "SyntheticSpec",
    "Trace",
    "TraceRecord",
    "cala_estimate",
    "conditional_moments",
    "conditional_pdf",
    "delay_moments",
    "estimate_lambda",
    "estimate_residual",
    "expost_aggregate_delay",
    "fetch_latency",
    "gaussian_approx",
    "generate",
    "ingest_csv",
    "lac_estimate",
    "mad_estimate",
    "make_policy",
    "mixture_cdf",
    "mixture_pdf",
    "poisson_count_pmf",
    "rank_baseline",
    "rank_va_cdh",
    "run_matrix",
    "sample_aggregate_delay",
    "select_victims",
    "simulate",
]
