"""One-way analysis of variance with an in-module F distribution.

The F tail probability is computed through the regularized incomplete beta
function, evaluated with the continued-fraction expansion (modified Lentz
method). No statistics library is required at runtime; external
implementations are used only as independent checks in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 500


@dataclass
class GroupSummary:
    """Sufficient statistics of one sample group."""

    count: int
    mean: float
    variance: float  # sample variance, n - 1 in the denominator
    label: str = ""

    def __post_init__(self) -> None:
        if self.count < 2:
            raise ValueError("each group needs at least two observations")
        if self.variance < 0.0:
            raise ValueError("variance must be >= 0")

    @property
    def total(self) -> float:
        return self.count * self.mean


@dataclass
class AnovaResult:
    groups: list[GroupSummary]
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    f_stat: float
    p_value: float
    f_crit: float
    alpha: float = 0.05

    @property
    def ms_between(self) -> float:
        return self.ss_between / self.df_between

    @property
    def ms_within(self) -> float:
        return self.ss_within / self.df_within

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def summarize(samples, label: str = "") -> GroupSummary:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("samples must be a 1-d sequence of length >= 2")
    return GroupSummary(
        count=int(x.size),
        mean=float(x.mean()),
        variance=float(x.var(ddof=1)),
        label=label,
    )


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz method."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # The continued fraction converges fast only on its own side of the
    # mean of the distribution; use the symmetry relation on the other side.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_cdf(x: float, df1: float, df2: float) -> float:
    """P(F <= x) for an F distribution with df1, df2 degrees of freedom."""
    if df1 <= 0.0 or df2 <= 0.0:
        raise ValueError("degrees of freedom must be > 0")
    if x <= 0.0:
        return 0.0
    u = df1 * x / (df1 * x + df2)
    return regularized_incomplete_beta(df1 / 2.0, df2 / 2.0, u)


def f_inverse_cdf(p: float, df1: float, df2: float) -> float:
    """Quantile of the F distribution by bracketing and bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    hi = 1.0
    while f_cdf(hi, df1, df2) < p:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("quantile bracket expansion failed")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_cdf(mid, df1, df2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def one_way_anova(groups, alpha: float = 0.05) -> AnovaResult:
    """One-way fixed-effects analysis of variance.

    groups: list of GroupSummary, or list of raw 1-d sample sequences.

    Between-group sum of squares uses the grand mean of all observations;
    within-group sum of squares pools the sample variances weighted by
    n_i - 1. p is the upper tail of F at the observed statistic and f_crit
    the (1 - alpha) quantile.
    """
    summaries: list[GroupSummary] = []
    for g in groups:
        if isinstance(g, GroupSummary):
            summaries.append(g)
        else:
            summaries.append(summarize(g))
    if len(summaries) < 2:
        raise ValueError("need at least two groups")

    n_total = sum(g.count for g in summaries)
    grand_mean = sum(g.total for g in summaries) / n_total
    ss_between = sum(g.count * (g.mean - grand_mean) ** 2 for g in summaries)
    ss_within = sum((g.count - 1) * g.variance for g in summaries)
    df_between = len(summaries) - 1
    df_within = n_total - len(summaries)
    if df_within < 1:
        raise ValueError("not enough observations for the within-group term")
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within <= 0.0:
        raise ValueError("within-group variance is zero; F is undefined")
    f_stat = ms_between / ms_within
    p_value = 1.0 - f_cdf(f_stat, df_between, df_within)
    f_crit = f_inverse_cdf(1.0 - alpha, df_between, df_within)
    return AnovaResult(
        groups=summaries,
        ss_between=ss_between,
        ss_within=ss_within,
        df_between=df_between,
        df_within=df_within,
        f_stat=f_stat,
        p_value=p_value,
        f_crit=f_crit,
        alpha=alpha,
    )
