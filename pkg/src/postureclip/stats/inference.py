"""Hypothesis tests used in the study analysis. All p-values are two-sided."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Sequence

from ..errors import DomainError, LengthMismatch, TooFewSamples, ZeroMarginal, ZeroVariance
from .distributions import chi2_sf, kolmogorov_sf, normal_cdf, t_sf_two_sided

# sd below this fraction of the data scale is treated as exactly zero
_REL_ZERO = 64 * 2.0**-52


@dataclass(frozen=True)
class StatResult:
    statistic: float
    df: float | None
    p_value: float
    n: int | tuple[int, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.n, tuple):
            d["n"] = list(self.n)
        return d


class TVariant(str, Enum):
    POOLED = "POOLED"
    WELCH = "WELCH"


def mean(x: Sequence[float]) -> float:
    return math.fsum(x) / len(x)


def variance(x: Sequence[float], m: float | None = None) -> float:
    """Unbiased (n - 1) variance, two-pass."""
    m = mean(x) if m is None else m
    return math.fsum((v - m) ** 2 for v in x) / (len(x) - 1)


def _is_zero_sd(sd: float, data: Sequence[float]) -> bool:
    scale = max((abs(v) for v in data), default=0.0)
    return sd <= _REL_ZERO * scale


def _floats(x) -> list[float]:
    return [float(v) for v in x]


def paired_t_test(pre: Sequence[float], post: Sequence[float]) -> StatResult:
    """t on differences ``post - pre``; negative t means values went down."""
    pre, post = _floats(pre), _floats(post)
    if len(pre) != len(post):
        raise LengthMismatch(f"paired samples differ in length: {len(pre)} vs {len(post)}")
    n = len(pre)
    if n < 2:
        raise TooFewSamples("paired t-test needs n >= 2")
    d = [b - a for a, b in zip(pre, post)]
    md = mean(d)
    sd = math.sqrt(variance(d, md))
    if _is_zero_sd(sd, d):
        raise ZeroVariance("differences are constant; t is undefined")
    t = md / (sd / math.sqrt(n))
    return StatResult(t, n - 1, t_sf_two_sided(t, n - 1), n)


def two_sample_t_test(a: Sequence[float], b: Sequence[float], variant: TVariant | str = TVariant.WELCH) -> StatResult:
    a, b = _floats(a), _floats(b)
    variant = TVariant(variant.upper() if isinstance(variant, str) else variant)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewSamples("each group needs at least 2 values")
    ma, mb = mean(a), mean(b)
    va, vb = variance(a, ma), variance(b, mb)
    if _is_zero_sd(math.sqrt(va), a) and _is_zero_sd(math.sqrt(vb), b):
        raise ZeroVariance("both groups are constant")
    if variant is TVariant.POOLED:
        df = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    t = (ma - mb) / se
    return StatResult(t, df, t_sf_two_sided(t, df), (na, nb))


def _as_2x2(table) -> tuple[tuple[float, float], tuple[float, float]]:
    flat = [float(v) for row in table for v in (row if isinstance(row, (list, tuple)) else [row])]
    if len(flat) != 4:
        raise DomainError("a 2x2 table needs exactly four counts")
    if any(v < 0 for v in flat):
        raise DomainError("counts must be non-negative")
    return (flat[0], flat[1]), (flat[2], flat[3])


def chi_square_2x2(table) -> StatResult:
    """Pearson chi-square of independence, no continuity correction.

    ``table`` is ``((a, b), (c, d))`` or the flat ``(a, b, c, d)``.
    """
    obs = _as_2x2(table)
    rows = [sum(r) for r in obs]
    cols = [obs[0][j] + obs[1][j] for j in range(2)]
    total = sum(rows)
    if min(rows) <= 0 or min(cols) <= 0:
        raise ZeroMarginal(f"table has an empty row or column: {obs}")
    x2 = 0.0
    for i in range(2):
        for j in range(2):
            e = rows[i] * cols[j] / total
            x2 += (obs[i][j] - e) ** 2 / e
    return StatResult(x2, 1, chi2_sf(x2, 1), int(total))


def pearson_r(x: Sequence[float], y: Sequence[float]) -> StatResult:
    x, y = _floats(x), _floats(y)
    if len(x) != len(y):
        raise LengthMismatch(f"x and y differ in length: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise TooFewSamples("pearson_r needs n >= 3")
    mx, my = mean(x), mean(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(v * v for v in dx)
    syy = math.fsum(v * v for v in dy)
    if _is_zero_sd(math.sqrt(sxx / (n - 1)), x) or _is_zero_sd(math.sqrt(syy / (n - 1)), y):
        raise ZeroVariance("correlation undefined for a constant variable")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    df = n - 2
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
        p = t_sf_two_sided(t, df)
    return StatResult(r, df, p, n)


def ks_statistic(x: Sequence[float], cdf: Callable[[float], float]) -> float:
    """sup |F_n - F| over the sample, checking both sides of every jump."""
    xs = sorted(_floats(x))
    n = len(xs)
    d = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        f = cdf(xs[i])
        d = max(d, j / n - f, f - i / n)
        i = j
    return d


def ks_normality_test(x: Sequence[float]) -> StatResult:
    """One-sample KS against a normal fitted with the sample mean and sd.

    The p-value is the classical Kolmogorov one, which does not account for
    the parameters being estimated from the same data (Lilliefors did); it
    is therefore conservative.
    """
    x = _floats(x)
    n = len(x)
    if n < 5:
        raise TooFewSamples("KS normality check needs n >= 5")
    m = mean(x)
    sd = math.sqrt(variance(x, m))
    if _is_zero_sd(sd, x):
        raise ZeroVariance("sample is constant")
    d = ks_statistic(x, lambda v: normal_cdf((v - m) / sd))
    return StatResult(d, None, kolmogorov_sf(d * math.sqrt(n)), n)
