"""Paired t-test, Cohen's d, Shapiro-Wilk and percentile bootstrap.

The Student-t distribution is evaluated through a continued-fraction
regularized incomplete beta function; Shapiro-Wilk follows Royston's
polynomial approximations (Applied Statistics algorithm R94).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Callable

import numpy as np

from .errors import ConstantDifferences, TooFew, TooMany

_NORMAL = NormalDist()


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf2(t: float, dof: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)``."""
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def t_cdf(t: float, dof: float) -> float:
    tail = 0.5 * t_sf2(t, dof)
    return 1.0 - tail if t > 0 else tail


def t_ppf(q: float, dof: float) -> float:
    """Quantile of Student's t by bisection on :func:`t_cdf`."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while t_cdf(lo, dof) > q:
        lo *= 2.0
    while t_cdf(hi, dof) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, dof) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    dof: int
    mean_diff: float
    cohens_d: float

    def to_dict(self) -> dict:
        return asdict(self)


def cohens_d(a, b) -> float:
    """Paired effect size: mean of differences over their SD (ddof=1)."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    sd = d.std(ddof=1)
    if not sd > 0:
        raise ConstantDifferences("paired differences have zero variance")
    return float(d.mean() / sd)


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test of ``a - b`` against zero."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise TooFew("paired t-test needs at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    if not sd > 0:
        raise ConstantDifferences("paired differences have zero variance")
    n = d.size
    mean = d.mean()
    t = mean / (sd / math.sqrt(n))
    return TTestResult(float(t), float(t_sf2(t, n - 1)), n - 1, float(mean), float(mean / sd))


# Royston's polynomial coefficients (AS R94), lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(c, x):
    return sum(ci * x ** i for i, ci in enumerate(c))


@dataclass(frozen=True)
class ShapiroResult:
    w: float
    p: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def shapiro_coefficients(n: int) -> np.ndarray:
    """Royston's approximation to the expected normal order-statistic weights."""
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    summ2 = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = m / math.sqrt(summ2)
    an = a[-1] + _poly(_C1, u)
    if n > 5:
        an1 = a[-2] + _poly(_C2, u)
        phi = (summ2 - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an ** 2 - 2 * an1 ** 2)
        a = m / math.sqrt(phi)
        a[-1], a[-2] = an, an1
        a[0], a[1] = -an, -an1
    else:
        phi = (summ2 - 2 * m[-1] ** 2) / (1 - 2 * an ** 2)
        a = m / math.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(x) -> ShapiroResult:
    """Shapiro-Wilk W and its upper-tail p-value for 3 <= n <= 5000."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    n = x.size
    if n < 3:
        raise TooFew("Shapiro-Wilk needs at least 3 observations")
    if n > 5000:
        raise TooMany("Shapiro-Wilk approximation is valid up to n = 5000")
    ss = float(np.sum((x - x.mean()) ** 2))
    if not ss > 0:
        raise ConstantDifferences("Shapiro-Wilk is undefined for constant data")
    a = shapiro_coefficients(n)
    w = min(float((a @ x) ** 2 / ss), 1.0)
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return ShapiroResult(w, float(min(max(p, 0.0), 1.0)), n)
    y = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return ShapiroResult(w, 1e-99, n)
        if y == -math.inf:
            return ShapiroResult(w, 1.0, n)
        y = -math.log(gamma - y)
        mu, sigma = _poly(_C3, n), math.exp(_poly(_C4, n))
    else:
        if y == -math.inf:
            return ShapiroResult(w, 1.0, n)
        ln = math.log(n)
        mu, sigma = _poly(_C5, ln), math.exp(_poly(_C6, ln))
    p = _NORMAL.cdf((mu - y) / sigma)
    return ShapiroResult(w, float(p), n)


@dataclass(frozen=True)
class BootstrapCI:
    low: float
    high: float
    estimate: float
    n_resamples: int
    level: float

    def to_dict(self) -> dict:
        return asdict(self)


def bootstrap_ci(x, statistic: Callable = np.mean, n_resamples: int = 1000,
                 level: float = 0.95, seed: int = 42) -> BootstrapCI:
    """Percentile bootstrap interval; ``statistic`` must accept ``axis``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise TooFew("bootstrap needs at least 2 observations")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_resamples, x.size))
    reps = statistic(x[idx], axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [alpha, 1.0 - alpha])
    return BootstrapCI(float(lo), float(hi), float(statistic(x)), n_resamples, level)
