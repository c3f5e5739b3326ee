"""Normality and two-sample distribution tests for scenario comparisons."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

ALPHA = 0.05
# Critical value of the small-sample adjusted case-3 statistic at 5 %.
AD_CRITICAL_5PCT = 0.752


class DegenerateSample(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: tuple[int, ...]
    reject_at_5pct: bool
    adjusted: float | None = None
    critical_value: float | None = None

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "n": list(self.n),
                "reject_at_5pct": self.reject_at_5pct, "adjusted": self.adjusted,
                "critical_value": self.critical_value}


def _ad_pvalue(a2star: float) -> float:
    # piecewise fit for the case-3 adjusted statistic (D'Agostino and Stephens)
    if a2star >= 150.0:
        # the quadratic fit turns upward past its minimum near 153
        return 0.0
    if a2star >= 0.6:
        p = math.exp(1.2937 - 5.709 * a2star + 0.0186 * a2star ** 2)
    elif a2star >= 0.34:
        p = math.exp(0.9177 - 4.279 * a2star - 1.38 * a2star ** 2)
    elif a2star >= 0.2:
        p = 1 - math.exp(-8.318 + 42.796 * a2star - 59.938 * a2star ** 2)
    else:
        p = 1 - math.exp(-13.436 + 101.14 * a2star - 223.73 * a2star ** 2)
    return min(1.0, max(0.0, p))


def anderson_darling(sample) -> TestResult:
    """Anderson-Darling test of normality with mean and variance estimated.

    ``statistic`` is A^2; the decision compares the adjusted
    A*^2 = A^2 (1 + 0.75/n + 2.25/n^2) with its 5 % critical value.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 8:
        raise ValueError(f"Anderson-Darling needs at least 8 observations, got {n}")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DegenerateSample("sample has zero variance")
    z = (x - x.mean()) / sd
    i = np.arange(1, n + 1)
    log_cdf = special.log_ndtr(z)
    log_sf = special.log_ndtr(-z[::-1])
    a2 = float(-n - np.sum((2 * i - 1) * (log_cdf + log_sf)) / n)
    a2s = a2 * (1 + 0.75 / n + 2.25 / n ** 2)
    return TestResult(a2, _ad_pvalue(a2s), (n,), a2s > AD_CRITICAL_5PCT, a2s, AD_CRITICAL_5PCT)


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution.

    Uses 2 sum (-1)^(k-1) exp(-2 k^2 lam^2) for lam >= 1 and the
    theta-function form of the CDF below, where that series converges fast.
    """
    if lam < 0.05:
        # the CDF is below 1e-200 here
        return 1.0
    if lam < 1.0:
        c = -math.pi ** 2 / (8.0 * lam * lam)
        cdf = math.sqrt(2 * math.pi) / lam * sum(math.exp((2 * k - 1) ** 2 * c) for k in range(1, 8))
        return min(1.0, max(0.0, 1.0 - cdf))
    s = sum((1 if k % 2 else -1) * math.exp(-2.0 * k * k * lam * lam) for k in range(1, 12))
    return min(1.0, max(0.0, 2.0 * s))


def ks_two_sample(a, b) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / na
    fb = np.searchsorted(b, grid, side="right") / nb
    d = float(np.max(np.abs(fa - fb)))
    en = na * nb / (na + nb)
    p = kolmogorov_sf(math.sqrt(en) * d)
    return TestResult(d, p, (na, nb), p < ALPHA)


def describe(sample) -> dict:
    x = np.asarray(sample, dtype=float)
    return {"n": int(len(x)), "mean": float(x.mean()) if len(x) else 0.0,
            "std": float(x.std(ddof=1)) if len(x) > 1 else 0.0,
            "min": float(x.min()) if len(x) else 0.0, "max": float(x.max()) if len(x) else 0.0,
            "median": float(np.median(x)) if len(x) else 0.0}
