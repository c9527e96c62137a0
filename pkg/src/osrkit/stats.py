"""Accuracy metrics, descriptive statistics and the bootstrap mean test."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_SEED = 2008


@dataclass(frozen=True)
class AccuracyTriple:
    mmre: float
    msd: float
    mad: float
    n: int

    def get(self, metric: str) -> float:
        return getattr(self, metric.lower())


def accuracy(pairs) -> AccuracyTriple:
    """MMRE, MSD and MAD of ``(actual, estimate)`` pairs.

    >>> accuracy([(100, 110), (200, 150)])
    AccuracyTriple(mmre=0.175, msd=1300.0, mad=30.0, n=2)
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        raise ValueError("accuracy of an empty list")
    actual, estimate = arr[:, 0], arr[:, 1]
    if np.any(actual == 0):
        raise ValueError("relative error undefined for a zero actual value")
    err = np.abs(actual - estimate)
    return AccuracyTriple(
        mmre=float(np.mean(err / np.abs(actual))),
        msd=float(np.mean(err ** 2)),
        mad=float(np.mean(err)),
        n=len(arr),
    )


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation between order statistics at position p*(n-1)."""
    n = len(sorted_values)
    pos = p * (n - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    if frac == 0:
        return float(sorted_values[lo])
    return float(sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]))


@dataclass(frozen=True)
class BoxSummary:
    """Five-number summary plus mean and population standard deviation."""

    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    sd: float
    n: int

    CSV_HEADER = "variable,n,min,q1,median,q3,max,mean,sd"

    def csv_row(self, variable: str) -> str:
        cells = [self.min, self.q1, self.median, self.q3, self.max, self.mean, self.sd]
        return ",".join([variable, str(self.n)] + [f"{c:.6g}" for c in cells])


def describe(values: Sequence[float]) -> BoxSummary:
    xs = sorted(float(v) for v in values)
    if not xs:
        raise ValueError("describe of an empty list")
    mean = math.fsum(xs) / len(xs)
    sd = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))
    if xs[0] == xs[-1]:
        mean, sd = xs[0], 0.0
    return BoxSummary(
        min=xs[0], q1=quantile(xs, 0.25), median=quantile(xs, 0.5),
        q3=quantile(xs, 0.75), max=xs[-1], mean=mean, sd=sd, n=len(xs),
    )


@dataclass(frozen=True)
class BootstrapConfig:
    draws: int = 1000
    alpha: float = 0.05
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


class BootstrapResult(NamedTuple):
    p_value: float
    significant: bool


def bootstrap_pvalue(a: Sequence[float], b: Sequence[float], draws: int, seed: int) -> float:
    """Two-sided bootstrap p-value for equal means.

    Each sample is centred on its own mean and its residuals are inflated
    by sqrt(n / (n - 1)) so their spread is unbiased; both resamples are
    drawn with replacement from the pooled residuals, keeping the original
    sizes.
    The statistic is the absolute difference of means, and the p-value is
    add-one smoothed so it never drops below ``1 / (draws + 1)``. The
    result depends only on the two multisets and the seed.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) < 2 or len(b) < 2:
        raise ValueError("bootstrap test needs at least two values per sample")
    # canonical order makes the result exactly symmetric in (a, b)
    if (len(a), a.tolist()) > (len(b), b.tolist()):
        a, b = b, a
    mean_a, mean_b = a.mean(), b.mean()
    observed = abs(mean_a - mean_b)
    pooled = np.concatenate([(a - mean_a) * math.sqrt(len(a) / (len(a) - 1)),
                             (b - mean_b) * math.sqrt(len(b) / (len(b) - 1))])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(pooled), size=(draws, len(a) + len(b)))
    resampled = pooled[idx]
    stats = np.abs(resampled[:, :len(a)].mean(axis=1) - resampled[:, len(a):].mean(axis=1))
    # absorb rounding noise so identical samples give p = 1
    tol = 1e-12 * max(1.0, float(np.abs(pooled).max()), abs(mean_a), abs(mean_b))
    exceed = int(np.count_nonzero(stats >= observed - tol))
    return (exceed + 1) / (draws + 1)


def bootstrap_diff_test(a, b, cfg: BootstrapConfig = BootstrapConfig()) -> BootstrapResult:
    p = bootstrap_pvalue(a, b, cfg.draws, cfg.seed)
    return BootstrapResult(p, p <= cfg.alpha)
