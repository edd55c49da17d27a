"""Pearson chi-square, one-way ANOVA, descriptive stats, and heart-rate math.

The tail probabilities are computed from scratch: the chi-square upper tail
via the regularized incomplete gamma function (series for x < a+1, Lentz
continued fraction otherwise) and the F upper tail via the regularized
incomplete beta continued fraction. Both target absolute error below 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 600


class StatsError(ValueError):
    pass


class DegenerateTableError(StatsError):
    pass


class InsufficientDataError(StatsError):
    pass


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _lower_gamma_series(a: float, x: float) -> float:
    # P(a, x) by series, converges fast for x < a + 1
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _upper_gamma_cf(a: float, x: float) -> float:
    # Q(a, x) by modified Lentz continued fraction, for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_cf(a, x)


def _beta_cf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta (modified Lentz)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def regularized_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return regularized_gamma_q(df / 2.0, x / 2.0)


def f_sf(x: float, df1: int, df2: int) -> float:
    """Upper tail of the F distribution."""
    if df1 < 1 or df2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x <= 0.0:
        return 1.0
    return regularized_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x))


# ---------------------------------------------------------------------------
# Tests and summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int | tuple[int, int]
    p_value: float
    method: str
    degenerate: bool = False


@dataclass(frozen=True)
class ContingencyTable:
    counts: tuple[tuple[int, ...], ...]
    row_labels: tuple[str, ...] = ()
    col_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        rows = tuple(tuple(int(c) for c in row) for row in self.counts)
        object.__setattr__(self, "counts", rows)
        if len(rows) < 2 or any(len(r) < 2 for r in rows):
            raise StatsError("table must be at least 2x2")
        if len({len(r) for r in rows}) != 1:
            raise StatsError("ragged table")
        if any(c < 0 for r in rows for c in r):
            raise StatsError("counts must be non-negative")
        if sum(c for r in rows for c in r) <= 0:
            raise StatsError("table total must be positive")
        if not self.row_labels:
            object.__setattr__(self, "row_labels", tuple(f"row{i}" for i in range(len(rows))))
        if not self.col_labels:
            object.__setattr__(self, "col_labels", tuple(f"col{j}" for j in range(len(rows[0]))))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.counts), len(self.counts[0])

    def row_totals(self) -> list[int]:
        return [sum(r) for r in self.counts]

    def col_totals(self) -> list[int]:
        return [sum(r[j] for r in self.counts) for j in range(self.shape[1])]

    def subtable(self, rows: Sequence[int]) -> "ContingencyTable":
        return ContingencyTable(
            counts=tuple(self.counts[i] for i in rows),
            row_labels=tuple(self.row_labels[i] for i in rows),
            col_labels=self.col_labels,
        )


def chi_square(table: ContingencyTable) -> TestResult:
    """Pearson chi-square test of independence (no continuity correction)."""
    r, c = table.shape
    row_tot, col_tot = table.row_totals(), table.col_totals()
    total = sum(row_tot)
    if any(t == 0 for t in row_tot) or any(t == 0 for t in col_tot):
        raise DegenerateTableError("zero marginal: expected counts undefined")
    stat = 0.0
    for i in range(r):
        for j in range(c):
            expected = row_tot[i] * col_tot[j] / total
            diff = table.counts[i][j] - expected
            stat += diff * diff / expected
    df = (r - 1) * (c - 1)
    return TestResult(stat, df, chi2_sf(stat, df), "pearson-chi-square")


@dataclass(frozen=True)
class PairwiseResult:
    rows: tuple[int, int]
    labels: tuple[str, str]
    raw: TestResult
    adjusted_p: float


def chi_square_posthoc(
    table: ContingencyTable, pairs: Sequence[tuple[int, int]]
) -> list[PairwiseResult]:
    """Pairwise chi-square on row pairs with Bonferroni adjustment."""
    if not pairs:
        raise StatsError("at least one pair required")
    results = []
    k = len(pairs)
    for i, j in pairs:
        raw = chi_square(table.subtable([i, j]))
        results.append(
            PairwiseResult(
                rows=(i, j),
                labels=(table.row_labels[i], table.row_labels[j]),
                raw=raw,
                adjusted_p=min(1.0, raw.p_value * k),
            )
        )
    return results


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    """Fixed-effect one-way ANOVA F test."""
    if len(groups) < 2:
        raise StatsError("at least two groups required")
    if any(len(g) < 2 for g in groups):
        raise StatsError("each group needs at least two samples")
    k = len(groups)
    ns = [len(g) for g in groups]
    n_total = sum(ns)
    means = [sum(g) / len(g) for g in groups]
    grand = sum(sum(g) for g in groups) / n_total
    ss_between = sum(n * (m - grand) ** 2 for n, m in zip(ns, means))
    ss_within = sum(sum((x - m) ** 2 for x in g) for g, m in zip(groups, means))
    df = (k - 1, n_total - k)
    if ss_within == 0.0:
        if ss_between == 0.0:
            return TestResult(0.0, df, 1.0, "one-way-anova")
        return TestResult(math.inf, df, 0.0, "one-way-anova", degenerate=True)
    f = (ss_between / df[0]) / (ss_within / df[1])
    return TestResult(f, df, f_sf(f, df[0], df[1]), "one-way-anova")


@dataclass(frozen=True)
class Descriptive:
    mean: float
    sd: float
    se: float
    n: int
    degenerate: bool = False


def descriptive(samples: Sequence[float]) -> Descriptive:
    """Mean, sample SD (n-1 denominator), and SE = SD/sqrt(n)."""
    n = len(samples)
    if n < 1:
        raise InsufficientDataError("at least one sample required")
    mean = sum(samples) / n
    if n == 1:
        return Descriptive(mean, 0.0, 0.0, 1, degenerate=True)
    var = sum((x - mean) ** 2 for x in samples) / (n - 1)
    sd = math.sqrt(var)
    return Descriptive(mean, sd, sd / math.sqrt(n), n)


@dataclass(frozen=True)
class HeartRate:
    mean_interval_s: float
    rate_hz: float
    n_beats: int


def heart_rate(beat_times_s: Sequence[float]) -> HeartRate:
    """Mean inter-beat interval, (t_last - t_first)/(n - 1), plus its reciprocal.

    Both readings are reported because recorded tables label the values in Hz
    while the defining formula yields seconds per beat; neither interpretation
    is discarded here.
    """
    n = len(beat_times_s)
    if n < 2:
        raise InsufficientDataError("need at least two beats")
    times = sorted(beat_times_s)
    interval = (times[-1] - times[0]) / (n - 1)
    if interval <= 0.0:
        raise InsufficientDataError("beat times must span a positive duration")
    return HeartRate(mean_interval_s=interval, rate_hz=1.0 / interval, n_beats=n)
