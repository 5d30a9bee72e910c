"""Resampling and percentile-bootstrap quantiles of the excess-mass statistic.

The bootstrap distribution of delta_m is formed by recomputing the statistic
on resamples drawn with replacement; quantiles use the literal empirical
infimum rule, so every reported quantile is an observed replicate value.
Replicates get independent counter-based streams derived from (seed, index),
making results independent of evaluation order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DensityShapeError
from .excess import delta_m
from .rng import STAGE_RESAMPLE, stream
from .sample import Sample


@dataclass(frozen=True)
class ResamplePlan:
    """How to draw bootstrap replicates: count, resample size, seed."""

    n_boot: int
    m_sub: int = None
    seed: int = 0

    def __post_init__(self):
        if self.n_boot < 1:
            raise ValueError("need at least one replicate")

    def resolve_size(self, n):
        m = n if self.m_sub is None else int(self.m_sub)
        if not 1 <= m <= n:
            raise ValueError("resample size must satisfy 1 <= m_sub <= n")
        return m


@dataclass(frozen=True)
class BootstrapDistribution:
    """Sorted replicate values of a statistic, with failures counted."""

    statistic_name: str
    values: np.ndarray
    failures: int
    plan: ResamplePlan

    def __post_init__(self):
        if self.values.size + self.failures != self.plan.n_boot:
            raise ValueError("replicates + failures must equal the plan size")


@dataclass(frozen=True)
class QuantileEstimate:
    alpha: float
    t_hat: float


def resample(sample, m_sub, rng):
    """m_sub uniform draws with replacement, re-sorted."""
    if not 1 <= m_sub <= sample.n:
        raise ValueError("resample size must satisfy 1 <= m_sub <= n")
    return Sample.from_values(rng.choice(sample.values, size=int(m_sub), replace=True))


def bootstrap_delta_distribution(sample, m, plan):
    """Bootstrap distribution of delta_m over resamples per the plan."""
    m_sub = plan.resolve_size(sample.n)
    vals = []
    failures = 0
    for b in range(plan.n_boot):
        rs = resample(sample, m_sub, stream(plan.seed, STAGE_RESAMPLE, b))
        try:
            vals.append(delta_m(rs, m).delta)
        except DensityShapeError:
            failures += 1
    return BootstrapDistribution(
        statistic_name=f"delta_{m}",
        values=np.sort(np.asarray(vals)),
        failures=failures,
        plan=plan,
    )


def percentile_quantile(dist, alpha):
    """Empirical infimum rule: smallest t with bootstrap CDF >= alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    values = dist.values
    if values.size == 0:
        raise ValueError("no replicate values to take a quantile of")
    rank = int(np.ceil(alpha * values.size)) - 1
    return QuantileEstimate(alpha=float(alpha), t_hat=float(values[max(rank, 0)]))


def delta_quantile_targets(sample, m, plan, alphas):
    """Map alpha -> bootstrap quantile of delta_m, one shared replicate set."""
    dist = bootstrap_delta_distribution(sample, m, plan)
    return {float(a): percentile_quantile(dist, a).t_hat for a in alphas}, dist
