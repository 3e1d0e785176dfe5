"""Mean-difference tests for partially matched pre/post data.

Four tests are provided, all under an equal-variance assumption:

* ``two_sample_t``  -- pooled two-sample t over all pre and post values.
* ``paired_t``      -- paired t on the matched subset only.
* ``quantile_t``    -- correlated-samples t over all values, plugging in a
  lower Fisher-z confidence bound for the correlation of the matched subset.
* ``pearson_t``     -- the same statistic with the plain Pearson correlation.

``correlated_t`` exposes the known-correlation statistic directly.

The formula helpers prefixed ``batch_`` operate on the last axis of numpy
arrays; the simulation engine calls them on thousands of datasets at once and
the single-dataset functions below call them on one, so both paths share the
arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateDataError,
    DomainError,
    InsufficientDataError,
    InsufficientMatchedError,
)
from .stat_core import normal_quantile, t_cdf, two_sided_p

MIN_MATCHED_QUANTILE = 4
MIN_MATCHED_PEARSON = 3
MIN_MATCHED_PAIRED = 2


class Method(str, enum.Enum):
    TWO_SAMPLE = "two_sample"
    MATCHED_PAIRED = "paired"
    QUANTILE_T = "quantile"
    PEARSON_T = "pearson"
    CORRELATED_KNOWN_RHO = "known_rho"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    Method.TWO_SAMPLE: "Two-sample T",
    Method.MATCHED_PAIRED: "Matched, paired T",
    Method.QUANTILE_T: "Quantile-based T'",
    Method.PEARSON_T: "Pearson-based T'",
    Method.CORRELATED_KNOWN_RHO: "Correlated T' (known rho)",
}

ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True, eq=False)
class PartiallyMatchedDataset:
    """n pre and n post responses of which the first m are linked pairs.

    ``matched`` has shape (m, 2) with columns (pre, post); the unmatched
    arms have equal length u, so n = m + u.
    """

    matched: np.ndarray
    unmatched_pre: np.ndarray
    unmatched_post: np.ndarray

    def __post_init__(self):
        matched = np.asarray(self.matched, dtype=float).reshape(-1, 2)
        pre = np.asarray(self.unmatched_pre, dtype=float).reshape(-1)
        post = np.asarray(self.unmatched_post, dtype=float).reshape(-1)
        if pre.size != post.size:
            raise DomainError(
                f"unmatched arms differ in size ({pre.size} pre vs {post.size} post)"
            )
        if matched.shape[0] + pre.size < 2:
            raise InsufficientDataError("need at least 2 responses per arm")
        for arr in (matched, pre, post):
            if not np.all(np.isfinite(arr)):
                raise DomainError("all values must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "matched", matched)
        object.__setattr__(self, "unmatched_pre", pre)
        object.__setattr__(self, "unmatched_post", post)

    @classmethod
    def from_arrays(cls, pre, post, m: int) -> "PartiallyMatchedDataset":
        """Treat the first ``m`` positions of equal-length ``pre``/``post`` as linked."""
        pre = np.asarray(pre, dtype=float)
        post = np.asarray(post, dtype=float)
        if pre.shape != post.shape:
            raise DomainError("pre and post must have the same length")
        if not 0 <= m <= pre.size:
            raise DomainError(f"matched count {m} outside [0, {pre.size}]")
        return cls(np.column_stack([pre[:m], post[:m]]), pre[m:], post[m:])

    @property
    def m(self) -> int:
        return self.matched.shape[0]

    @property
    def u(self) -> int:
        return self.unmatched_pre.size

    @property
    def n(self) -> int:
        return self.m + self.u

    @property
    def pre(self) -> np.ndarray:
        return np.concatenate([self.matched[:, 0], self.unmatched_pre])

    @property
    def post(self) -> np.ndarray:
        return np.concatenate([self.matched[:, 1], self.unmatched_post])

    @property
    def pairs(self) -> np.ndarray:
        return self.matched

    @property
    def prop_matched(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class SummaryStats:
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    n: int

    @classmethod
    def of(cls, ds: PartiallyMatchedDataset) -> "SummaryStats":
        x, y = ds.pre, ds.post
        return cls(float(x.mean()), float(y.mean()),
                   float(x.var(ddof=1)), float(y.var(ddof=1)), ds.n)


@dataclass(frozen=True)
class CorrelationEstimate:
    r: float
    q: float
    z: float
    se_z: float
    r_q: float
    m: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    method: Method
    rho_used: Optional[float] = None
    alternative: str = "two-sided"

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "rho_used": self.rho_used,
            "alternative": self.alternative,
        }


# -- array kernels ----------------------------------------------------------

def batch_pearson(x, y):
    """Product-moment correlation along the last axis. NaN where undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean(axis=-1, keepdims=True)
    yc = y - y.mean(axis=-1, keepdims=True)
    sxy = np.sum(xc * yc, axis=-1)
    sxx = np.sum(xc * xc, axis=-1)
    syy = np.sum(yc * yc, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = sxy / np.sqrt(sxx * syy)
    # rounding can push |r| a hair past 1 for collinear data
    return np.clip(r, -1.0, 1.0)


def batch_fisher_lower(r, m, q):
    """tanh(arctanh(r) - z_{1-q} / sqrt(m - 3)); NaN where |r| = 1 or m < 4."""
    z_crit = normal_quantile(1.0 - q)
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.arctanh(np.where(np.abs(r) < 1.0, r, np.nan))
        se = 1.0 / np.sqrt(np.where(m > 3, m - 3.0, np.nan))
        return np.tanh(z - z_crit * se)


def batch_correlated_stat(mean_x, mean_y, var_x, var_y, n, rho):
    """(mean_x - mean_y) / sqrt((var_x + var_y) / n * (1 - rho))."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return (mean_x - mean_y) / np.sqrt((var_x + var_y) / n * (1.0 - rho))


def batch_paired_stat(d_mean, d_var, m):
    with np.errstate(invalid="ignore", divide="ignore"):
        return d_mean / np.sqrt(d_var / m)


# -- single-dataset API -----------------------------------------------------

def _p_value(statistic: float, df: float, alternative: str) -> float:
    if alternative == "two-sided":
        return two_sided_p(abs(statistic), df)
    if alternative == "greater":
        return 1.0 - t_cdf(statistic, df)
    if alternative == "less":
        return t_cdf(statistic, df)
    raise DomainError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("pairs must be a sequence of (x, y)")
    return arr


def pearson_cor(pairs: Sequence[Tuple[float, float]]) -> float:
    arr = _as_pairs(pairs)
    if arr.shape[0] < 2:
        raise InsufficientMatchedError("Pearson correlation needs at least 2 pairs")
    x, y = arr[:, 0], arr[:, 1]
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateDataError("zero variance in a coordinate; correlation undefined")
    return float(batch_pearson(x, y))


def quantile_cor(pairs, q: float) -> CorrelationEstimate:
    """Lower one-sided Fisher-z bound on the correlation at confidence 1 - q."""
    arr = _as_pairs(pairs)
    m = arr.shape[0]
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile must lie in (0, 1), got {q!r}")
    if m < MIN_MATCHED_QUANTILE:
        raise InsufficientMatchedError(
            f"quantile correlation needs at least {MIN_MATCHED_QUANTILE} matched pairs, got {m}"
        )
    r = pearson_cor(arr)
    if abs(r) >= 1.0:
        raise DegenerateDataError("|r| = 1: Fisher z transform is unbounded")
    z = math.atanh(r)
    se_z = 1.0 / math.sqrt(m - 3)
    r_q = float(batch_fisher_lower(r, m, q))
    return CorrelationEstimate(r=r, q=q, z=z, se_z=se_z, r_q=r_q, m=m)


def _correlated(ds, rho, method, alternative):
    s = SummaryStats.of(ds)
    if s.var_x + s.var_y <= 0.0:
        raise DegenerateDataError("pooled variance is zero")
    stat = float(batch_correlated_stat(s.mean_x, s.mean_y, s.var_x, s.var_y, s.n, rho))
    df = 2 * s.n - 2
    return TestResult(stat, df, _p_value(stat, df, alternative), method, rho, alternative)


def two_sample_t(ds: PartiallyMatchedDataset, alternative: str = "two-sided") -> TestResult:
    """Pooled two-sample t on all pre and post values; matching is ignored."""
    return _correlated(ds, 0.0, Method.TWO_SAMPLE, alternative)


def correlated_t(ds: PartiallyMatchedDataset, rho: float,
                 alternative: str = "two-sided") -> TestResult:
    """Correlated-samples t with a known correlation ``rho``; df = 2n - 2."""
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho!r}")
    return _correlated(ds, rho, Method.CORRELATED_KNOWN_RHO, alternative)


def paired_t(pairs, alternative: str = "two-sided") -> TestResult:
    arr = _as_pairs(pairs.matched if isinstance(pairs, PartiallyMatchedDataset) else pairs)
    m = arr.shape[0]
    if m < MIN_MATCHED_PAIRED:
        raise InsufficientMatchedError(f"paired t needs at least {MIN_MATCHED_PAIRED} pairs, got {m}")
    d = arr[:, 0] - arr[:, 1]
    d_var = float(d.var(ddof=1))
    if d_var <= 0.0:
        raise DegenerateDataError("differences have zero variance")
    stat = float(batch_paired_stat(float(d.mean()), d_var, m))
    df = m - 1
    return TestResult(stat, df, _p_value(stat, df, alternative), Method.MATCHED_PAIRED, None,
                      alternative)


def quantile_t(ds: PartiallyMatchedDataset, q: float,
               alternative: str = "two-sided") -> TestResult:
    """Correlated t over all n pairs with rho set to the matched-subset r_q."""
    est = quantile_cor(ds.matched, q)
    res = _correlated(ds, est.r_q, Method.QUANTILE_T, alternative)
    return res


def pearson_t(ds: PartiallyMatchedDataset, alternative: str = "two-sided") -> TestResult:
    if ds.m < MIN_MATCHED_PEARSON:
        # two pairs give r in {-1, 0, 1} only
        raise InsufficientMatchedError(
            f"Pearson-based T' needs at least {MIN_MATCHED_PEARSON} matched pairs, got {ds.m}"
        )
    r = pearson_cor(ds.matched)
    if abs(r) >= 1.0:
        raise DegenerateDataError("|r| = 1 in the matched subset")
    return _correlated(ds, r, Method.PEARSON_T, alternative)


def run_test(ds: PartiallyMatchedDataset, method: Method, *, q: Optional[float] = None,
             rho: Optional[float] = None, alternative: str = "two-sided") -> TestResult:
    method = Method(method)
    if method is Method.TWO_SAMPLE:
        return two_sample_t(ds, alternative)
    if method is Method.MATCHED_PAIRED:
        return paired_t(ds.matched, alternative)
    if method is Method.QUANTILE_T:
        if q is None:
            raise DomainError("quantile method requires q")
        return quantile_t(ds, q, alternative)
    if method is Method.PEARSON_T:
        return pearson_t(ds, alternative)
    if rho is None:
        raise DomainError("known-rho method requires rho")
    return correlated_t(ds, rho, alternative)
