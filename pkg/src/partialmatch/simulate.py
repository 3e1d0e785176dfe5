"""Deterministic Monte Carlo engine.

Bivariate normal datasets are generated run by run. Run ``i`` of a scenario
draws from its own Philox stream whose key is derived from ``(seed,
scenario)`` and whose counter starts at ``i`` in the high word, so a run's
data never depends on how runs are scheduled. Runs are processed in blocks of
``RUNS_PER_BLOCK``; a block returns per-run outcome flags and the caller
concatenates them in block order and sums integer tallies. The results are
therefore identical for any worker count.

A scenario is ``(n, delta, rho_spec)``. Matched proportions, quantiles and
methods are all evaluated on the same datasets, which gives common random
numbers across every comparison within a scenario.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, EmptyResultError, MissingGridEntryError
from .grid import QUANTILE_GRID, QuantileGrid
from .stat_core import fit_logistic_1d, two_sided_p
from .ttests import (
    MIN_MATCHED_PAIRED,
    MIN_MATCHED_PEARSON,
    MIN_MATCHED_QUANTILE,
    Method,
    PartiallyMatchedDataset,
    batch_correlated_stat,
    batch_fisher_lower,
    batch_paired_stat,
    batch_pearson,
)

RhoSpec = Union[float, Tuple[float, float]]

DEFAULT_RUNS = 10_000
DEFAULT_ALPHA = 0.05
DEFAULT_SEED = 20240917
DEFAULT_RHO_RANGE = (0.1, 0.9)
RUNS_PER_BLOCK = 500
CURVE_RHOS = tuple(round(0.10 + 0.01 * k, 2) for k in range(81))


@dataclass(frozen=True)
class BivariateParams:
    mu_x: float = 0.0
    mu_y: float = 0.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise DomainError("standard deviations must be positive")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho!r}")

    @property
    def delta(self) -> float:
        return self.mu_x - self.mu_y


def _check_rho_spec(rho: RhoSpec) -> RhoSpec:
    if isinstance(rho, (tuple, list)):
        lo, hi = (float(v) for v in rho)
        if not -1.0 < lo <= hi < 1.0:
            raise DomainError(f"rho range must satisfy -1 < lo <= hi < 1, got {rho!r}")
        return (lo, hi)
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho!r}")
    return rho


def matched_count(n: int, prop: float) -> int:
    """floor(prop * n), guarded against representation error (0.29 * 100)."""
    if not 0.0 <= prop <= 1.0:
        raise DomainError(f"matched proportion must lie in [0, 1], got {prop!r}")
    return int(math.floor(prop * n + 1e-9))


@dataclass(frozen=True)
class SimulationConfig:
    n: int
    prop_matched: float
    rho: RhoSpec = DEFAULT_RHO_RANGE
    delta: float = 0.0
    n_runs: int = DEFAULT_RUNS
    seed: int = DEFAULT_SEED
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if self.n_runs < 1:
            raise DomainError("n_runs must be at least 1")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")
        matched_count(self.n, self.prop_matched)
        object.__setattr__(self, "rho", _check_rho_spec(self.rho))

    @property
    def m(self) -> int:
        return matched_count(self.n, self.prop_matched)


@dataclass(frozen=True)
class SimulationSummary:
    rejection_rate: float
    mc_se: float
    n_effective: int
    n_rejected: int
    n_runs: int
    method: Method
    q: Optional[float] = None

    @classmethod
    def from_counts(cls, n_rejected, n_effective, n_runs, method, q=None):
        if n_effective == 0:
            raise EmptyResultError(f"{Method(method).value}: no estimable runs")
        rate = n_rejected / n_effective
        return cls(rate, math.sqrt(rate * (1.0 - rate) / n_effective), int(n_effective),
                   int(n_rejected), int(n_runs), Method(method), q)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "rejection_rate": self.rejection_rate,
            "mc_se": self.mc_se,
            "n_effective": self.n_effective,
            "n_rejected": self.n_rejected,
            "n_runs": self.n_runs,
            "q": self.q,
        }


# -- random streams ---------------------------------------------------------

def _scenario_tag(*parts) -> int:
    text = "|".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def scenario_key(seed: int, n: int, delta: float, rho: RhoSpec) -> np.ndarray:
    """Two-word Philox key for one scenario."""
    if seed < 0:
        raise DomainError("seed must be non-negative")
    tag = _scenario_tag("bvn", int(n), float(delta), rho)
    return np.random.SeedSequence(seed, spawn_key=(tag,)).generate_state(2, np.uint64)


def run_stream(key: np.ndarray, run_index: int) -> np.random.Generator:
    """Independent generator for one run: the run index occupies the high counter word."""
    counter = np.array([0, 0, 0, run_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _draw_pairs(gen: np.random.Generator, params: BivariateParams, n: int):
    z = gen.standard_normal((n, 2))
    x = params.mu_x + params.sigma_x * z[:, 0]
    y = params.mu_y + params.sigma_y * (
        params.rho * z[:, 0] + math.sqrt(1.0 - params.rho ** 2) * z[:, 1])
    return x, y


def sample_dataset(params: BivariateParams, n: int, prop_matched: float,
                   stream: np.random.Generator) -> PartiallyMatchedDataset:
    """n bivariate normal pairs; the first floor(prop * n) are the matched ones."""
    x, y = _draw_pairs(stream, params, n)
    return PartiallyMatchedDataset.from_arrays(x, y, matched_count(n, prop_matched))


def _draw_run(key, run_index, n, delta, rho):
    gen = run_stream(key, run_index)
    r = gen.uniform(rho[0], rho[1]) if isinstance(rho, tuple) else rho
    x, y = _draw_pairs(gen, BivariateParams(mu_x=delta, rho=r), n)
    return r, x, y


def scenario_dataset(seed, n, delta, rho, run_index, prop_matched):
    """Rebuild the dataset the engine used for one run of a scenario."""
    rho = _check_rho_spec(rho)
    r, x, y = _draw_run(scenario_key(seed, n, delta, rho), run_index, n, float(delta), rho)
    return r, PartiallyMatchedDataset.from_arrays(x, y, matched_count(n, prop_matched))


# -- block evaluation ---------------------------------------------------------

@dataclass(frozen=True)
class PlanEntry:
    """One test applied to every run: ``m`` matched pairs, optional quantile."""

    method: Method
    m: int
    q: Optional[float] = None

    def estimable(self) -> bool:
        need = {
            Method.MATCHED_PAIRED: MIN_MATCHED_PAIRED,
            Method.PEARSON_T: MIN_MATCHED_PEARSON,
            Method.QUANTILE_T: MIN_MATCHED_QUANTILE,
        }.get(self.method, 0)
        return self.m >= need


@dataclass(frozen=True)
class _BlockTask:
    seed: int
    n: int
    delta: float
    rho: RhoSpec
    start: int
    stop: int
    plan: Tuple[PlanEntry, ...]
    alpha: float


def _reject(stat, df, alpha):
    est = np.isfinite(stat)
    rej = np.zeros(stat.shape, dtype=bool)
    if est.any():
        rej[est] = two_sided_p(np.abs(stat[est]), df) < alpha
    return est, rej


def evaluate_block(x: np.ndarray, y: np.ndarray, rhos: np.ndarray,
                   plan: Sequence[PlanEntry], alpha: float):
    """Apply every plan entry to a (runs, n) block. Returns (estimable, rejected), each (P, runs)."""
    runs, n = x.shape
    mx, my = x.mean(axis=1), y.mean(axis=1)
    vx, vy = x.var(axis=1, ddof=1), y.var(axis=1, ddof=1)
    est = np.zeros((len(plan), runs), dtype=bool)
    rej = np.zeros((len(plan), runs), dtype=bool)
    pearson_cache: Dict[int, np.ndarray] = {}

    def matched_r(m):
        if m not in pearson_cache:
            r = batch_pearson(x[:, :m], y[:, :m])
            pearson_cache[m] = np.where(np.abs(r) < 1.0, r, np.nan)
        return pearson_cache[m]

    for i, entry in enumerate(plan):
        if not entry.estimable():
            continue
        method = entry.method
        if method is Method.MATCHED_PAIRED:
            d = x[:, :entry.m] - y[:, :entry.m]
            d_var = d.var(axis=1, ddof=1)
            stat = batch_paired_stat(d.mean(axis=1), np.where(d_var > 0, d_var, np.nan), entry.m)
            est[i], rej[i] = _reject(stat, entry.m - 1, alpha)
            continue
        if method is Method.TWO_SAMPLE:
            rho = 0.0
        elif method is Method.CORRELATED_KNOWN_RHO:
            rho = rhos
        elif method is Method.PEARSON_T:
            rho = matched_r(entry.m)
        else:
            rho = batch_fisher_lower(matched_r(entry.m), entry.m, entry.q)
        pooled = np.where(vx + vy > 0, vx + vy, np.nan)
        stat = batch_correlated_stat(mx, my, pooled, 0.0, n, rho)
        est[i], rej[i] = _reject(stat, 2 * n - 2, alpha)
    return est, rej


def _run_block(task: _BlockTask):
    key = scenario_key(task.seed, task.n, task.delta, task.rho)
    size = task.stop - task.start
    x = np.empty((size, task.n))
    y = np.empty((size, task.n))
    rhos = np.empty(size)
    for j, i in enumerate(range(task.start, task.stop)):
        rhos[j], x[j], y[j] = _draw_run(key, i, task.n, task.delta, task.rho)
    est, rej = evaluate_block(x, y, rhos, task.plan, task.alpha)
    return rhos, est, rej


@dataclass
class ScenarioOutcome:
    """Per-run outcomes of a scenario: true rho, estimable and rejected flags per plan entry."""

    plan: Tuple[PlanEntry, ...]
    rhos: np.ndarray
    estimable: np.ndarray
    rejected: np.ndarray

    def counts(self, i: int) -> Tuple[int, int]:
        est = self.estimable[i]
        return int(est.sum()), int((self.rejected[i] & est).sum())

    def summary(self, i: int) -> SimulationSummary:
        n_eff, n_rej = self.counts(i)
        entry = self.plan[i]
        return SimulationSummary.from_counts(n_rej, n_eff, self.rhos.size, entry.method, entry.q)


def _map(fn, tasks, workers):
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_scenario(n: int, delta: float, rho: RhoSpec, plan: Sequence[PlanEntry], *,
                 n_runs: int = DEFAULT_RUNS, seed: int = DEFAULT_SEED,
                 alpha: float = DEFAULT_ALPHA, workers: int = 1) -> ScenarioOutcome:
    rho = _check_rho_spec(rho)
    if n < 2 or n_runs < 1:
        raise DomainError("need n >= 2 and n_runs >= 1")
    plan = tuple(plan)
    tasks = [
        _BlockTask(int(seed), int(n), float(delta), rho, start, min(start + RUNS_PER_BLOCK, n_runs),
                   plan, float(alpha))
        for start in range(0, n_runs, RUNS_PER_BLOCK)
    ]
    parts = _map(_run_block, tasks, workers)
    return ScenarioOutcome(
        plan,
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts], axis=1),
        np.concatenate([p[2] for p in parts], axis=1),
    )


# -- public operations --------------------------------------------------------

def run_simulation(config: SimulationConfig, method: Method, q: Optional[float] = None,
                   workers: int = 1) -> SimulationSummary:
    method = Method(method)
    if (method is Method.QUANTILE_T) != (q is not None):
        raise DomainError("q is required for, and only for, the quantile method")
    entry = PlanEntry(method, config.m, q)
    out = run_scenario(config.n, config.delta, config.rho, [entry], n_runs=config.n_runs,
                       seed=config.seed, alpha=config.alpha, workers=workers)
    return out.summary(0)


def _closest_to_alpha(counts: Sequence[Tuple[int, int]], qs: Sequence[float],
                      alpha: float) -> Optional[float]:
    best, best_dist = None, None
    target = Fraction(alpha)
    for q, (n_eff, n_rej) in zip(qs, counts):
        if n_eff == 0:
            continue
        dist = abs(Fraction(n_rej, n_eff) - target)
        # strict comparison keeps the first (smallest) quantile on ties
        if best_dist is None or dist < best_dist:
            best, best_dist = q, dist
    return best


def _calibration_plan(n, props, qs):
    return [PlanEntry(Method.QUANTILE_T, matched_count(n, p), q) for p in props for q in qs]


def null_rates(n: int, prop_matched: float, rho: RhoSpec, *, qs=QUANTILE_GRID,
               alpha=DEFAULT_ALPHA, n_runs=DEFAULT_RUNS, seed=DEFAULT_SEED,
               workers=1) -> Dict[float, Optional[SimulationSummary]]:
    """Null rejection rate of the quantile test at each grid quantile (None if not calculable)."""
    plan = _calibration_plan(n, [prop_matched], qs)
    out = run_scenario(n, 0.0, rho, plan, n_runs=n_runs, seed=seed, alpha=alpha, workers=workers)
    return {q: (out.summary(i) if plan[i].estimable() else None) for i, q in enumerate(qs)}


def alpha_target_search(n: int, prop_matched: float, rho: RhoSpec,
                        alpha: float = DEFAULT_ALPHA, n_runs: int = DEFAULT_RUNS,
                        seed: int = DEFAULT_SEED, workers: int = 1,
                        qs: Sequence[float] = QUANTILE_GRID) -> Optional[float]:
    """Grid quantile whose null rejection rate is closest to ``alpha``.

    Returns None when fewer than four pairs are matched. Ties go to the
    smaller quantile. ``rho`` may be a (lo, hi) range, in which case every run
    draws its own correlation uniformly from it.
    """
    grid = calibrate_grid([n], [prop_matched], [rho], alpha=alpha, n_runs=n_runs, seed=seed,
                          workers=workers, qs=qs)
    return grid.entries[(n, float(prop_matched), _check_rho_spec(rho))]


def calibrate_grid(ns: Iterable[int], props: Iterable[float], rhos: Iterable[RhoSpec],
                   alpha: float = DEFAULT_ALPHA, n_runs: int = DEFAULT_RUNS,
                   seed: int = DEFAULT_SEED, workers: int = 1,
                   qs: Sequence[float] = QUANTILE_GRID) -> QuantileGrid:
    ns, props = [int(v) for v in ns], [float(v) for v in props]
    rhos = [_check_rho_spec(r) for r in rhos]
    if not (ns and props and rhos):
        raise DomainError("calibration axes must be non-empty")
    entries = {}
    for n in ns:
        plan = _calibration_plan(n, props, qs)
        for rho in rhos:
            out = run_scenario(n, 0.0, rho, plan, n_runs=n_runs, seed=seed, alpha=alpha,
                               workers=workers)
            for j, prop in enumerate(props):
                idx = range(j * len(qs), (j + 1) * len(qs))
                if not plan[idx[0]].estimable():
                    entries[(n, prop, rho)] = None
                    continue
                entries[(n, prop, rho)] = _closest_to_alpha([out.counts(i) for i in idx], qs, alpha)
    return QuantileGrid.from_entries(entries)


@dataclass(frozen=True)
class ComparisonRow:
    n: int
    prop: float
    delta: float
    method: Method
    q: Optional[float]
    summary: Optional[SimulationSummary]

    @property
    def calculable(self) -> bool:
        return self.summary is not None


COMPARISON_METHODS = (Method.TWO_SAMPLE, Method.MATCHED_PAIRED, Method.QUANTILE_T,
                      Method.PEARSON_T)


def _comparison_plan(n, props, grid):
    plan = []
    for prop in props:
        m = matched_count(n, prop)
        q = None
        if m >= MIN_MATCHED_QUANTILE:
            q = grid.conservative.get((n, prop))
            if q is None:
                raise MissingGridEntryError(f"no conservative quantile for n={n}, prop={prop}")
        for method in COMPARISON_METHODS:
            plan.append(PlanEntry(method, m, q if method is Method.QUANTILE_T else None))
    return plan


def run_comparison(ns: Iterable[int], props: Iterable[float], deltas: Iterable[float],
                   grid: QuantileGrid, n_runs: int = DEFAULT_RUNS, seed: int = DEFAULT_SEED,
                   alpha: float = DEFAULT_ALPHA, rho: RhoSpec = DEFAULT_RHO_RANGE,
                   workers: int = 1) -> List[ComparisonRow]:
    """All four methods on shared datasets per (n, delta); per-run rho ~ U(rho range)."""
    props = [float(p) for p in props]
    rows = []
    for n in ns:
        n = int(n)
        plan = _comparison_plan(n, props, grid)
        for delta in deltas:
            out = run_scenario(n, float(delta), rho, plan, n_runs=n_runs, seed=seed,
                               alpha=alpha, workers=workers)
            for i, entry in enumerate(plan):
                prop = props[i // len(COMPARISON_METHODS)]
                summary = out.summary(i) if entry.estimable() else None
                rows.append(ComparisonRow(n, prop, float(delta), entry.method, entry.q, summary))
    return rows


def _curve_entry(n, prop, method, grid):
    m = matched_count(n, prop)
    q = None
    if method is Method.QUANTILE_T:
        q = grid.conservative.get((n, prop)) if grid is not None else None
        if q is None:
            raise MissingGridEntryError(f"no conservative quantile for n={n}, prop={prop}")
    return PlanEntry(method, m, q)


def error_curves(n: int, prop: float, methods: Sequence[Method], grid: Optional[QuantileGrid],
                 n_runs: int = DEFAULT_RUNS, seed: int = DEFAULT_SEED,
                 alpha: float = DEFAULT_ALPHA, rho: Tuple[float, float] = DEFAULT_RHO_RANGE,
                 eval_rhos: Sequence[float] = CURVE_RHOS,
                 workers: int = 1) -> Dict[Method, List[Tuple[float, float]]]:
    """Logistic fit of null rejection on the per-run correlation, per method."""
    methods = [Method(mt) for mt in methods]
    plan = [_curve_entry(n, float(prop), mt, grid) for mt in methods]
    out = run_scenario(n, 0.0, tuple(rho), plan, n_runs=n_runs, seed=seed, alpha=alpha,
                       workers=workers)
    curves = {}
    for i, method in enumerate(methods):
        est = out.estimable[i]
        if not est.any():
            raise EmptyResultError(f"{method.value}: no estimable runs")
        fit = fit_logistic_1d(out.rhos[est], out.rejected[i][est].astype(float))
        curves[method] = [(r, float(fit.predict(r))) for r in eval_rhos]
    return curves


def error_curve(n: int, prop: float, method: Method, grid: Optional[QuantileGrid],
                n_runs: int = DEFAULT_RUNS, seed: int = DEFAULT_SEED, **kwargs):
    return error_curves(n, prop, [method], grid, n_runs=n_runs, seed=seed, **kwargs)[Method(method)]


@dataclass(frozen=True)
class PowerGapRow:
    prop: float
    method: str  # oracle_paired | matched_paired | two_sample
    measure: str  # type1 | power
    delta: float
    summary: SimulationSummary


POWERGAP_PROPS = tuple(round(0.1 * k, 1) for k in range(1, 11))


def power_gap(n: int = 75, rho: float = 0.65, delta: float = 0.25,
              props: Sequence[float] = POWERGAP_PROPS, n_runs: int = DEFAULT_RUNS,
              seed: int = DEFAULT_SEED, alpha: float = DEFAULT_ALPHA,
              workers: int = 1) -> List[PowerGapRow]:
    """Oracle paired t (all pairings known) against the matched paired t and the
    two-sample t, as the matched proportion varies, at fixed n and rho."""
    props = [float(p) for p in props]
    plan = [PlanEntry(Method.MATCHED_PAIRED, n), PlanEntry(Method.TWO_SAMPLE, n)]
    plan += [PlanEntry(Method.MATCHED_PAIRED, matched_count(n, p)) for p in props]
    rows = []
    for measure, d in (("type1", 0.0), ("power", float(delta))):
        out = run_scenario(n, d, float(rho), plan, n_runs=n_runs, seed=seed, alpha=alpha,
                           workers=workers)
        oracle, two = out.summary(0), out.summary(1)
        for j, prop in enumerate(props):
            entry = plan[2 + j]
            rows.append(PowerGapRow(prop, "oracle_paired", measure, d, oracle))
            if entry.estimable():
                rows.append(PowerGapRow(prop, "matched_paired", measure, d, out.summary(2 + j)))
            rows.append(PowerGapRow(prop, "two_sample", measure, d, two))
    return rows
