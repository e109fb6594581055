"""Distribution functions behind the p-values.

Only ``math`` is used: incomplete beta and gamma by continued fractions and
series, the normal CDF through ``erfc``, and the Kolmogorov limit law by
its two classical series.
"""

from __future__ import annotations

import math

from ..errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000
KOLMOGOROV_TERM_TOL = 1e-12


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"non-finite input {v!r}")


def _betacf(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete beta continued fraction."""
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
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise DomainError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, one_minus_x: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``one_minus_x`` may be given when the caller can form 1 - x without
    cancellation (t and F statistics can).
    """
    _check_finite(a, b, x)
    if a <= 0 or b <= 0:
        raise DomainError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"betainc needs x in [0, 1], got {x}")
    y = 1.0 - x if one_minus_x is None else one_minus_x
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise DomainError("incomplete gamma series did not converge")


def _gamma_cf(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = _TINY if abs(d) < _TINY else d
        c = b + an / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise DomainError("incomplete gamma continued fraction did not converge")


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    _check_finite(a, x)
    if a <= 0:
        raise DomainError("gammainc needs a > 0")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_finite(a, x)
    if a <= 0:
        raise DomainError("gammainc needs a > 0")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def normal_cdf(z: float) -> float:
    _check_finite(z)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _check_df(df: float) -> None:
    _check_finite(df)
    if df <= 0:
        raise DomainError(f"degrees of freedom must be > 0, got {df}")


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    _check_finite(t)
    _check_df(df)
    t2 = t * t
    return betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def t_cdf(t: float, df: float) -> float:
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


def chi2_cdf(x: float, df: float) -> float:
    _check_finite(x)
    _check_df(df)
    return gammainc_lower(df / 2.0, x / 2.0)


def chi2_sf(x: float, df: float) -> float:
    _check_finite(x)
    _check_df(df)
    return gammainc_upper(df / 2.0, x / 2.0)


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the Kolmogorov limit distribution.

    Alternating series 2 * sum (-1)^(k-1) exp(-2 k^2 lam^2), stopped once a
    term drops below 1e-12. Below lam = 1 that series converges slowly and
    cancels badly, so the complementary Jacobi-theta form of the CDF is
    used there instead.
    """
    _check_finite(lam)
    if lam < 0.05:
        return 1.0  # 1 - sf is below 1e-50 here
    if lam < 1.0:
        c = math.pi * math.pi / (8.0 * lam * lam)
        total = 0.0
        k = 1
        while True:
            term = math.exp(-(2 * k - 1) ** 2 * c)
            total += term
            if term < KOLMOGOROV_TERM_TOL * 1e-4 or k > 100:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * total))
    total = 0.0
    k = 1
    while True:
        term = 2.0 * math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < KOLMOGOROV_TERM_TOL:
            break
        k += 1
    return min(1.0, max(0.0, total))


def kolmogorov_cdf(lam: float) -> float:
    return 1.0 - kolmogorov_sf(lam)
