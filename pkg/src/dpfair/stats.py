"""Summaries, pooled two-sample t-tests and OLS regression with F-tests.

Tail probabilities of the Student-t and F distributions both go through the
regularized incomplete beta function :func:`betainc_regularized`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

ALPHA = 0.05


class SingularDesignError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a summary needs n >= 2")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")


@dataclass(frozen=True)
class TTestResult:
    mean_difference: float
    t_statistic: float
    df: int
    p_value: float
    infinite_t: bool = False

    @property
    def significant_at_05(self) -> bool:
        return self.p_value < ALPHA


@dataclass(frozen=True)
class RegressionResult:
    coefficients: np.ndarray
    r_squared: float
    f_statistic: float
    df_model: int
    df_residual: int
    p_value: float
    residuals: np.ndarray | None = None


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b)."""
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    return float(betainc(a, b, x))


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc_regularized(df / 2, 0.5, df / (df + t * t))


def f_upper_p(f: float, df1: float, df2: float) -> float:
    """P(F > f) for F ~ F(df1, df2)."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_regularized(df2 / 2, df1 / 2, df2 / (df2 + df1 * f))


def summarize(values: Sequence[float]) -> SampleSummary:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("need at least two values to summarize")
    return SampleSummary(int(values.size), float(values.mean()), float(values.std(ddof=1)))


def pooled_t_test(a: SampleSummary, b: SampleSummary) -> TTestResult:
    """Student's two-sample t-test with pooled variance (df = n1 + n2 - 2)."""
    df = a.n + b.n - 2
    diff = a.mean - b.mean
    pooled_var = ((a.n - 1) * a.sd**2 + (b.n - 1) * b.sd**2) / df
    se = math.sqrt(pooled_var * (1 / a.n + 1 / b.n))
    if se == 0:
        if diff == 0:
            return TTestResult(0.0, 0.0, df, 1.0)
        return TTestResult(diff, math.copysign(math.inf, diff), df, 0.0, infinite_t=True)
    t = diff / se
    return TTestResult(diff, t, df, t_two_sided_p(t, df))


def t_test_samples(x: Sequence[float], y: Sequence[float]) -> TTestResult:
    return pooled_t_test(summarize(x), summarize(y))


def ols_fit(design, response) -> RegressionResult:
    """Least squares via QR; ``design`` must contain its own intercept column."""
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("response length does not match the design")
    if n <= p:
        raise SingularDesignError(f"need more rows than columns, got {n}x{p}")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise SingularDesignError("design matrix is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    ss_res = float(resid @ resid)
    centred = y - y.mean()
    ss_tot = float(centred @ centred)
    df_model, df_resid = p - 1, n - p
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else 0.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    if r2 >= 1.0:
        f = math.inf
    else:
        f = (r2 / df_model) / ((1.0 - r2) / df_resid)
    return RegressionResult(coef, r2, f, df_model, df_resid, f_upper_p(f, df_model, df_resid), resid)


def dummy_design(factors: dict[str, Sequence]) -> tuple[np.ndarray, list[str]]:
    """Intercept plus treatment-coded dummies for each named factor.

    The first sorted level of every factor is the reference and gets no
    column.
    """
    n = len(next(iter(factors.values())))
    cols, names = [np.ones(n)], ["intercept"]
    for name, values in factors.items():
        values = list(values)
        if len(values) != n:
            raise ValueError("factors differ in length")
        for level in sorted(set(values))[1:]:
            cols.append(np.array([v == level for v in values], dtype=np.float64))
            names.append(f"{name}={level:g}" if isinstance(level, float) else f"{name}={level}")
    return np.column_stack(cols), names
