"""Numerical kernel: Student t and normal distribution functions, and a
one-covariate logistic regression fitted by IRLS.

Everything here is pure and reentrant. The t distribution functions accept
scalars or numpy arrays (broadcast together) so the simulation engine can
evaluate thousands of p-values per call through the same code path as the
single-dataset tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateDataError, DomainError

__all__ = [
    "LogisticFit",
    "betainc_reg",
    "fit_logistic_1d",
    "logistic_loglik",
    "normal_cdf",
    "normal_quantile",
    "t_cdf",
    "t_quantile",
    "t_sf",
    "two_sided_p",
]

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 20000

_lgamma = np.frompyfunc(math.lgamma, 1, 1)


def _lbeta(a, b):
    return (_lgamma(a) + _lgamma(b) - _lgamma(a + b)).astype(float)


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b), modified Lentz, vectorised.

    Converges quickly for x < (a + 1) / (a + b + 2); callers route the other
    regime through the symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_TINY, _CF_TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_TINY, _CF_TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def betainc_reg(a, b, x, xc=None):
    """Regularised incomplete beta I_x(a, b).

    ``xc`` may carry 1 - x computed without cancellation; it is used for the
    complementary branch and the (1 - x)**b prefactor.
    """
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    xc = 1.0 - x if xc is None else np.broadcast_to(np.asarray(xc, dtype=float), x.shape)
    out = np.empty(x.shape)
    lo = x <= 0.0
    hi = xc <= 0.0
    out[lo] = 0.0
    out[hi] = 1.0
    mid = ~(lo | hi)
    if mid.any():
        am, bm, xm, xcm = a[mid], b[mid], x[mid], xc[mid]
        log_front = am * np.log(xm) + bm * np.log(xcm) - _lbeta(am, bm)
        direct = xm < (am + 1.0) / (am + bm + 2.0)
        res = np.empty(xm.shape)
        if direct.any():
            i = direct
            res[i] = np.exp(log_front[i]) * _betacf(am[i], bm[i], xm[i]) / am[i]
        if (~direct).any():
            j = ~direct
            res[j] = 1.0 - np.exp(log_front[j]) * _betacf(bm[j], am[j], xcm[j]) / bm[j]
        out[mid] = res
    return out


def _check_t_args(x, df):
    x = np.asarray(x, dtype=float)
    df = np.asarray(df, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("t distribution argument must be finite")
    if not np.all(df > 0) or not np.all(np.isfinite(df)):
        raise DomainError("degrees of freedom must be positive and finite")
    return x, df


def _scalar_or_array(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def t_sf(x, df):
    """Upper tail P(T > x) for Student's t with ``df`` degrees of freedom."""
    xa, dfa = _check_t_args(x, df)
    xa, dfa = np.broadcast_arrays(xa, dfa)
    t2 = xa * xa
    # P(|T| > |x|) = I_{df/(df+x^2)}(df/2, 1/2)
    tail = betainc_reg(dfa / 2.0, 0.5, dfa / (dfa + t2), t2 / (dfa + t2))
    out = np.where(xa > 0, 0.5 * tail, 1.0 - 0.5 * tail)
    return _scalar_or_array(out, x, df)


def t_cdf(x, df):
    """P(T <= x) for Student's t, via the regularised incomplete beta function."""
    xa, dfa = _check_t_args(x, df)
    xa, dfa = np.broadcast_arrays(xa, dfa)
    t2 = xa * xa
    tail = betainc_reg(dfa / 2.0, 0.5, dfa / (dfa + t2), t2 / (dfa + t2))
    out = np.where(xa > 0, 1.0 - 0.5 * tail, 0.5 * tail)
    return _scalar_or_array(out, x, df)


def two_sided_p(statistic, df):
    """2 * P(T > |statistic|), evaluated on the tail directly."""
    xa, dfa = _check_t_args(statistic, df)
    xa, dfa = np.broadcast_arrays(xa, dfa)
    t2 = xa * xa
    out = betainc_reg(dfa / 2.0, 0.5, dfa / (dfa + t2), t2 / (dfa + t2))
    return _scalar_or_array(out, statistic, df)


def t_quantile(p: float, df: float) -> float:
    """Inverse of :func:`t_cdf` by bisection; used for critical values."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549671010584216e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Acklam's rational approximation as the starting point, polished by
    Newton steps against ``erfc`` (two suffice from the approximation).
    The upper half is mapped onto the lower half so the Newton residual is
    always computed where the CDF has full relative precision.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    for _ in range(3):
        step = (normal_cdf(x) - p) * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x -= step
        if abs(step) <= 1e-15 * abs(x):
            break
    return x


@dataclass(frozen=True)
class LogisticFit:
    """P(y = 1 | x) = logistic(intercept + slope * x)."""

    intercept: float
    slope: float
    converged: bool
    iterations: int

    def predict(self, x):
        eta = self.intercept + self.slope * np.asarray(x, dtype=float)
        out = 0.5 * (1.0 + np.tanh(0.5 * eta))
        return float(out) if np.ndim(x) == 0 else out


def logistic_loglik(intercept: float, slope: float, xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    eta = intercept + slope * xs
    return float(np.sum(ys * eta - np.logaddexp(0.0, eta)))


_RIDGE = 1e-10
_MAX_ITER = 100
_STEP_TOL = 1e-8


def _separated(xs, ys) -> bool:
    x1 = xs[ys == 1]
    x0 = xs[ys == 0]
    return x0.max() <= x1.min() or x1.max() <= x0.min()


def fit_logistic_1d(xs, ys) -> LogisticFit:
    """Maximum-likelihood logistic regression on a single covariate via IRLS."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError("xs and ys must be one-dimensional and of equal length")
    if not np.all(np.isin(ys, (0.0, 1.0))):
        raise DomainError("ys must be 0/1")
    if np.unique(xs).size < 2:
        raise DegenerateDataError("need at least two distinct covariate values")
    ybar = ys.mean()
    if ybar in (0.0, 1.0):
        raise DegenerateDataError("all responses are equal; the slope is not identifiable")
    if _separated(xs, ys):
        raise ConvergenceError("perfect separation: the maximum-likelihood estimate does not exist")

    design = np.column_stack([np.ones_like(xs), xs])
    beta = np.array([math.log(ybar / (1.0 - ybar)), 0.0])
    for it in range(1, _MAX_ITER + 1):
        eta = design @ beta
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        w = p * (1.0 - p)
        grad = design.T @ (ys - p)
        hess = (design * w[:, None]).T @ design + _RIDGE * np.eye(2)
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < _STEP_TOL:
            return LogisticFit(float(beta[0]), float(beta[1]), True, it)
    raise ConvergenceError(f"IRLS did not converge within {_MAX_ITER} iterations")
