"""Monte Carlo harness: factor-model data, right-tail MAR, and metrics.

A replication draws a confirmatory-factor dataset, optionally coarsens
the non-target columns into equal-probability categories, deletes
values from the analysis targets with a calibrated right-tail logistic
rule driven by the continuous predictor block, imputes the result with
each configured method, and pools moments of the target columns.  The
harness then scores each method per parameter against the full-data
estimates with percent relative bias, confidence-interval width, and
confidence-interval coverage.

Every replication reseeds itself from the root seed and its own index,
so single replications can be rerun in isolation and the worker count
never changes statistical output.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .data import ROLE_ANALYSIS, ROLE_AUXILIARY, ROLE_MAR, IncompleteData
from .engine import (
    MAX_COMPONENTS,
    PCR_STRATEGIES,
    STRATEGIES,
    ImputationSpec,
    run_impute,
)
from .imputers import DEFAULT_DONORS, DEFAULT_RIDGE, IMPUTER_BAYES, IMPUTER_KINDS
from .pooling import analyze_set, estimate_parameter, moment_parameter_ids

ANCHOR_ITEMS = 8  # items on the first factor: 4 analysis targets + 4 MAR predictors


@dataclass(frozen=True)
class SimulationCondition:
    """One cell of the study design.

    The first factor carries the eight anchor items (four analysis
    targets, four missingness predictors); each remaining factor
    carries ``items_per_factor`` auxiliary items.  ``noise_fraction``
    is the share of the non-anchor factors whose correlations with
    everything else are lowered to ``low_corr``; ``categories`` is the
    number of discrete levels for the non-target columns (None keeps
    them continuous).
    """

    n_rows: int = 500
    factors: int = 7
    items_per_factor: int = 8
    loading: float = 0.85
    high_corr: float = 0.7
    low_corr: float = 0.1
    noise_fraction: float = 0.0
    categories: int | None = None
    target_mean: float = 5.0
    target_variance: float = 6.5
    missing_proportion: float = 0.3

    def __post_init__(self) -> None:
        if self.n_rows < 10:
            raise ValueError("n_rows must be at least 10")
        if self.factors < 2:
            raise ValueError("need at least two factors")
        if self.items_per_factor < 1:
            raise ValueError("items_per_factor must be positive")
        if not 0.0 < self.loading < 1.0:
            raise ValueError("loading must lie strictly between 0 and 1")
        for name in ("high_corr", "low_corr"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")
        low_count = self.noise_fraction * (self.factors - 1)
        if abs(low_count - round(low_count)) > 1e-9:
            raise ValueError(
                "noise_fraction must mark a whole number of non-anchor factors"
            )
        if self.categories is not None and self.categories < 2:
            raise ValueError("categories must be at least 2 (or None)")
        if not 0.0 < self.missing_proportion < 1.0:
            raise ValueError("missing_proportion must lie strictly between 0 and 1")
        if self.target_variance <= 0.0:
            raise ValueError("target_variance must be positive")

    @property
    def n_cols(self) -> int:
        return ANCHOR_ITEMS + (self.factors - 1) * self.items_per_factor

    @property
    def low_factor_count(self) -> int:
        return int(round(self.noise_fraction * (self.factors - 1)))


def condition_roles(cond: SimulationCondition) -> list[str]:
    """Column roles: four targets, four MAR predictors, rest auxiliary."""
    roles = [ROLE_ANALYSIS] * 4 + [ROLE_MAR] * 4
    roles += [ROLE_AUXILIARY] * (cond.n_cols - ANCHOR_ITEMS)
    return roles


def factor_correlation_matrix(cond: SimulationCondition) -> np.ndarray:
    """Factor correlation matrix with the trailing factors made weak.

    The last ``low_factor_count`` non-anchor factors correlate at
    ``low_corr`` with every other factor; all remaining pairs use
    ``high_corr``.
    """
    k = cond.factors
    psi = np.full((k, k), cond.high_corr)
    low_start = k - cond.low_factor_count
    for i in range(k):
        for j in range(k):
            if i >= low_start or j >= low_start:
                psi[i, j] = cond.low_corr
    np.fill_diagonal(psi, 1.0)
    return psi


def generate_complete(
    cond: SimulationCondition,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[str]]:
    """Draw one complete dataset and its column roles.

    Items follow a simple-structure factor model with loading
    ``cond.loading`` and unit total variance, then each column is
    rescaled affinely to hit the target mean and sample variance
    exactly.
    """
    psi = factor_correlation_matrix(cond)
    try:
        chol = np.linalg.cholesky(psi)
    except np.linalg.LinAlgError:
        raise ValueError("factor correlation matrix is not positive definite") from None
    n, k = cond.n_rows, cond.factors
    scores = rng.standard_normal((n, k)) @ chol.T
    loadings = np.zeros((cond.n_cols, k))
    loadings[:ANCHOR_ITEMS, 0] = cond.loading
    for f in range(1, k):
        start = ANCHOR_ITEMS + (f - 1) * cond.items_per_factor
        loadings[start : start + cond.items_per_factor, f] = cond.loading
    noise_sd = np.sqrt(1.0 - cond.loading**2)
    values = scores @ loadings.T + noise_sd * rng.standard_normal((n, cond.n_cols))
    values = values - values.mean(axis=0)
    values = values / values.std(axis=0, ddof=1) * np.sqrt(cond.target_variance)
    values = values + cond.target_mean
    return values, condition_roles(cond)


def coarsen(values: np.ndarray, roles: list[str], categories: int | None) -> np.ndarray:
    """Discretize non-target columns into equal-probability categories.

    Cut points are the interior empirical quantiles; codes run 1 to
    ``categories`` and respect the original ordering.  Analysis-target
    columns are never coarsened, and ``categories=None`` returns an
    unchanged copy.
    """
    out = np.asarray(values, dtype=float).copy()
    if categories is None:
        return out
    if categories < 2:
        raise ValueError("categories must be at least 2")
    edges = np.arange(1, categories) / categories
    for j, role in enumerate(roles):
        if role == ROLE_ANALYSIS:
            continue
        cuts = np.quantile(out[:, j], edges)
        out[:, j] = np.searchsorted(cuts, out[:, j], side="left") + 1.0
    return out


def calibrate_intercept(
    linear_scores: np.ndarray,
    target_proportion: float,
    tol: float = 1e-6,
    max_iterations: int = 200,
) -> float:
    """Find the logistic intercept hitting an expected missing share.

    Bisects on the mean of ``expit(intercept + scores)``, which is
    monotone in the intercept, until the expected proportion is within
    ``tol`` of the target.
    """
    scores = np.asarray(linear_scores, dtype=float)
    if not 0.0 < target_proportion < 1.0:
        raise ValueError("target proportion must lie strictly between 0 and 1")
    lower, upper = -60.0, 60.0
    while float(expit(lower + scores).mean()) > target_proportion:
        lower *= 2.0
    while float(expit(upper + scores).mean()) < target_proportion:
        upper *= 2.0
    mid = 0.5 * (lower + upper)
    for _ in range(max_iterations):
        mid = 0.5 * (lower + upper)
        achieved = float(expit(mid + scores).mean())
        if abs(achieved - target_proportion) < tol:
            return mid
        if achieved > target_proportion:
            upper = mid
        else:
            lower = mid
    raise ValueError("intercept calibration did not converge")


def mar_linear_scores(mar_block: np.ndarray) -> np.ndarray:
    """Unit-slope linear score of the missingness predictors.

    Columns are standardized, summed with equal weights, and the sum is
    rescaled to unit sample variance so the logistic mechanism's
    strength does not grow with the predictor count or scale.
    """
    block = np.asarray(mar_block, dtype=float)
    std = (block - block.mean(axis=0)) / block.std(axis=0, ddof=1)
    total = std.sum(axis=1)
    return total / total.std(ddof=1)


def ampute(
    values: np.ndarray,
    roles: list[str],
    cond: SimulationCondition,
    rng: np.random.Generator,
    mar_values: np.ndarray | None = None,
) -> IncompleteData:
    """Delete target values at random with right-tail MAR probabilities.

    Each analysis-target column independently loses cells with
    probability ``expit(intercept + score)`` where the score is the
    standardized sum of the (continuous) MAR-predictor columns and the
    intercept is calibrated so the expected missing share matches the
    condition.  Only target columns are ever masked.  Pass the
    uncoarsened predictor block as ``mar_values`` when the matrix has
    been discretized.
    """
    values = np.asarray(values, dtype=float)
    mar_ids = [j for j, role in enumerate(roles) if role == ROLE_MAR]
    if not mar_ids:
        raise ValueError("amputation requires MAR-predictor columns")
    block = values[:, mar_ids] if mar_values is None else np.asarray(mar_values, dtype=float)
    scores = mar_linear_scores(block)
    intercept = calibrate_intercept(scores, cond.missing_proportion)
    probabilities = expit(intercept + scores)
    mask = np.ones(values.shape, dtype=bool)
    for j, role in enumerate(roles):
        if role != ROLE_ANALYSIS:
            continue
        mask[:, j] = rng.random(values.shape[0]) >= probabilities
    masked = values.copy()
    masked[~mask] = np.nan
    names = [f"x{j + 1}" for j in range(values.shape[1])]
    return IncompleteData(values=masked, mask=mask, names=names, roles=list(roles))


def _logistic_fit(predictors: np.ndarray, outcome: np.ndarray) -> tuple[np.ndarray, float]:
    design = np.hstack([np.ones((len(outcome), 1)), predictors])
    beta = np.zeros(design.shape[1])
    for _ in range(60):
        probs = expit(design @ beta)
        weights = probs * (1.0 - probs) + 1e-12
        step = np.linalg.solve(
            (design * weights[:, None]).T @ design, design.T @ (outcome - probs)
        )
        beta += step
        if np.max(np.abs(step)) < 1e-10:
            break
    probs = np.clip(expit(design @ beta), 1e-12, 1.0 - 1e-12)
    loglik = float(np.sum(outcome * np.log(probs) + (1.0 - outcome) * np.log(1.0 - probs)))
    return beta, loglik


def mar_diagnostics(data: IncompleteData, mar_values: np.ndarray) -> list[dict]:
    """Refit the missingness model per target and report its strength.

    Returns one dict per analysis-target column with the realized
    missing proportion, McFadden pseudo R-squared of a logistic refit
    of the missingness indicator on the continuous predictor block, and
    the area under the ROC curve of the fitted scores.
    """
    block = np.asarray(mar_values, dtype=float)
    out = []
    for j in data.columns_with_role(ROLE_ANALYSIS):
        indicator = (~data.mask[:, int(j)]).astype(float)
        share = float(indicator.mean())
        beta, loglik = _logistic_fit(block, indicator)
        base = np.clip(indicator.mean(), 1e-12, 1.0 - 1e-12)
        loglik_null = float(
            np.sum(indicator * np.log(base) + (1.0 - indicator) * np.log(1.0 - base))
        )
        fitted = block @ beta[1:] + beta[0]
        ranks = rankdata(fitted)
        n_pos = indicator.sum()
        n_neg = len(indicator) - n_pos
        auc = float((ranks[indicator == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
        out.append(
            {
                "column": int(j),
                "missing_proportion": share,
                "pseudo_r2": 1.0 - loglik / loglik_null,
                "auc": auc,
            }
        )
    return out


def compute_prb(method_estimates, full_estimates) -> float:
    """Percent relative bias against the mean full-data estimate."""
    full = np.asarray(full_estimates, dtype=float)
    met = np.asarray(method_estimates, dtype=float)
    truth = float(full.mean())
    if truth == 0.0:
        raise ValueError("full-data reference value is zero")
    return abs(float(met.mean()) - truth) / abs(truth) * 100.0


def compute_ciw(lowers, uppers) -> float:
    """Mean confidence-interval width across replications."""
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    return float((uppers - lowers).mean())


def compute_cic(lowers, uppers, full_estimates) -> float:
    """Share of intervals covering the mean full-data estimate."""
    truth = float(np.asarray(full_estimates, dtype=float).mean())
    lowers = np.asarray(lowers, dtype=float)
    uppers = np.asarray(uppers, dtype=float)
    return float(((lowers <= truth) & (truth <= uppers)).mean())


@dataclass(frozen=True)
class MethodSetting:
    """One method column of the study grid."""

    strategy: str
    n_components: int | str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy in PCR_STRATEGIES and self.n_components is None:
            raise ValueError(f"{self.strategy} needs n_components")

    @property
    def components_label(self) -> str:
        return "" if self.n_components is None else str(self.n_components)


@dataclass(frozen=True)
class StudySettings:
    """Imputation settings shared by every method in a study."""

    chains: int = 5
    iterations: int = 20
    imputer: str = IMPUTER_BAYES
    corr_threshold: float = 0.1
    prepass_threshold: float = 0.3
    prepass_iterations: int = 20
    donors: int = DEFAULT_DONORS
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self) -> None:
        if self.imputer not in IMPUTER_KINDS:
            raise ValueError(f"unknown imputer {self.imputer!r}")


@dataclass(eq=False)
class MetricRecord:
    """Pooled performance of one method on one parameter in one cell."""

    n_rows: int
    n_cols: int
    noise_fraction: float
    categories: int | None
    method: str
    n_components: int | str | None
    parameter: str
    prb: float
    cic: float
    ciw: float
    runtime_s: float
    reps: int
    failures: int


@dataclass(eq=False)
class EstimateRecord:
    """One pooled estimate from one replication."""

    n_rows: int
    n_cols: int
    noise_fraction: float
    categories: int | None
    rep: int
    method: str
    n_components: int | str | None
    parameter: str
    estimate: float
    ci_lower: float
    ci_upper: float
    full_estimate: float


@dataclass(eq=False)
class StudyResult:
    metrics: list[MetricRecord]
    estimates: list[EstimateRecord]
    failures: list[str]


def method_seed(root_seed: int, condition_index: int, rep: int, method_index: int) -> int:
    """Stable per-imputation seed derived from the replication identity."""
    sequence = np.random.SeedSequence(
        root_seed, spawn_key=(condition_index, rep, method_index)
    )
    return int(sequence.generate_state(1, np.uint64)[0])


def _replication(args) -> tuple[int, int, list, list[str], dict]:
    (root_seed, cond_index, rep, cond, methods, settings, deterministic_timer) = args
    timer = time.perf_counter if not deterministic_timer else (lambda: 0.0)
    sequence = np.random.SeedSequence(root_seed, spawn_key=(cond_index, rep))
    gen_child, amp_child = sequence.spawn(2)
    values, roles = generate_complete(cond, np.random.default_rng(gen_child))
    coarse = coarsen(values, roles, cond.categories)
    mar_ids = [j for j, role in enumerate(roles) if role == ROLE_MAR]
    data = ampute(coarse, roles, cond, np.random.default_rng(amp_child), values[:, mar_ids])
    target_ids = [j for j, role in enumerate(roles) if role == ROLE_ANALYSIS]
    pids = moment_parameter_ids(target_ids)
    names = data.names
    full_scale = {}
    for pid in pids:
        estimate, _ = estimate_parameter(coarse, pid)
        full_scale[pid] = float(np.tanh(estimate)) if pid.kind == "correlation" else estimate
    rows = []
    failures = []
    runtimes = {}
    for method_index, method in enumerate(methods):
        spec = ImputationSpec(
            strategy=method.strategy,
            n_components=(
                method.n_components if method.n_components is not None else MAX_COMPONENTS
            ),
            imputer=settings.imputer,
            chains=settings.chains,
            iterations=settings.iterations,
            corr_threshold=settings.corr_threshold,
            prepass_threshold=settings.prepass_threshold,
            prepass_iterations=settings.prepass_iterations,
            donors=settings.donors,
            ridge=settings.ridge,
            seed=method_seed(root_seed, cond_index, rep, method_index),
        )
        started = timer()
        try:
            imputed_set = run_impute(spec, data)
            pooled = analyze_set(imputed_set, pids)
        except Exception as err:  # noqa: BLE001 - failures are data, not crashes
            failures.append(
                f"condition {cond_index}, rep {rep}, method {method.strategy}"
                f"({method.components_label}): {err}"
            )
            continue
        runtimes[method_index] = timer() - started
        for pid in pids:
            result = pooled[pid]
            rows.append(
                EstimateRecord(
                    n_rows=cond.n_rows,
                    n_cols=cond.n_cols,
                    noise_fraction=cond.noise_fraction,
                    categories=cond.categories,
                    rep=rep,
                    method=method.strategy,
                    n_components=method.n_components,
                    parameter=pid.label(names),
                    estimate=result.estimate,
                    ci_lower=result.ci_lower,
                    ci_upper=result.ci_upper,
                    full_estimate=full_scale[pid],
                )
            )
    return cond_index, rep, rows, failures, runtimes


def run_study(
    conditions,
    methods,
    reps: int,
    seed: int,
    workers: int = 1,
    settings: StudySettings = StudySettings(),
    deterministic_timer: bool = False,
) -> StudyResult:
    """Run the full grid of conditions x methods for ``reps`` replications.

    Within a replication every method imputes the same amputed dataset.
    Replications are independent work items seeded by (seed, condition,
    rep), so any worker count yields the same estimates and metrics;
    only the runtime column varies, and ``deterministic_timer`` pins it
    to zero when byte-stable output matters more than timings.
    """
    conditions = list(conditions)
    methods = list(methods)
    if reps < 1:
        raise ValueError("reps must be positive")
    if workers < 1:
        raise ValueError("workers must be positive")
    jobs = [
        (seed, cond_index, rep, cond, methods, settings, deterministic_timer)
        for cond_index, cond in enumerate(conditions)
        for rep in range(reps)
    ]
    outputs = {}
    if workers == 1:
        for job in jobs:
            cond_index, rep, rows, failures, runtimes = _replication(job)
            outputs[(cond_index, rep)] = (rows, failures, runtimes)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cond_index, rep, rows, failures, runtimes in pool.map(
                _replication, jobs, chunksize=1
            ):
                outputs[(cond_index, rep)] = (rows, failures, runtimes)
    estimates: list[EstimateRecord] = []
    failures: list[str] = []
    for key in sorted(outputs):
        rows, row_failures, _ = outputs[key]
        estimates.extend(rows)
        failures.extend(row_failures)
    metrics = []
    for cond_index, cond in enumerate(conditions):
        for method_index, method in enumerate(methods):
            method_rows = [
                row
                for (c, r), (rows, _, _) in sorted(outputs.items())
                if c == cond_index
                for row in rows
                if row.method == method.strategy
                and row.n_components == method.n_components
            ]
            rep_runtimes = [
                runtimes[method_index]
                for (c, r), (_, _, runtimes) in sorted(outputs.items())
                if c == cond_index and method_index in runtimes
            ]
            succeeded = sorted({row.rep for row in method_rows})
            failure_count = reps - len(succeeded)
            by_parameter: dict[str, list[EstimateRecord]] = {}
            for row in method_rows:
                by_parameter.setdefault(row.parameter, []).append(row)
            mean_runtime = float(np.mean(rep_runtimes)) if rep_runtimes else float("nan")
            for parameter, rows in by_parameter.items():
                rows = sorted(rows, key=lambda r: r.rep)
                metrics.append(
                    MetricRecord(
                        n_rows=cond.n_rows,
                        n_cols=cond.n_cols,
                        noise_fraction=cond.noise_fraction,
                        categories=cond.categories,
                        method=method.strategy,
                        n_components=method.n_components,
                        parameter=parameter,
                        prb=compute_prb(
                            [r.estimate for r in rows], [r.full_estimate for r in rows]
                        ),
                        cic=compute_cic(
                            [r.ci_lower for r in rows],
                            [r.ci_upper for r in rows],
                            [r.full_estimate for r in rows],
                        ),
                        ciw=compute_ciw(
                            [r.ci_lower for r in rows], [r.ci_upper for r in rows]
                        ),
                        runtime_s=mean_runtime,
                        reps=len(rows),
                        failures=failure_count,
                    )
                )
    return StudyResult(metrics=metrics, estimates=estimates, failures=failures)


METRICS_HEADER = [
    "n_rows",
    "n_cols",
    "noise_fraction",
    "categories",
    "method",
    "n_components",
    "parameter",
    "prb",
    "cic",
    "ciw",
    "runtime_s",
    "reps",
    "failures",
]

ESTIMATES_HEADER = [
    "n_rows",
    "n_cols",
    "noise_fraction",
    "categories",
    "rep",
    "method",
    "n_components",
    "parameter",
    "estimate",
    "ci_lower",
    "ci_upper",
    "full_estimate",
]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, metrics: list[MetricRecord]) -> None:
    """Write metric records in the documented column order."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_HEADER)
        for record in metrics:
            writer.writerow(
                [
                    _format_cell(getattr(record, name))
                    for name in (
                        "n_rows",
                        "n_cols",
                        "noise_fraction",
                        "categories",
                        "method",
                        "n_components",
                        "parameter",
                        "prb",
                        "cic",
                        "ciw",
                        "runtime_s",
                        "reps",
                        "failures",
                    )
                ]
            )


def write_estimates_csv(path, estimates: list[EstimateRecord]) -> None:
    """Write per-replication estimate records in the documented order."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ESTIMATES_HEADER)
        for record in estimates:
            writer.writerow(
                [
                    _format_cell(getattr(record, name))
                    for name in (
                        "n_rows",
                        "n_cols",
                        "noise_fraction",
                        "categories",
                        "rep",
                        "method",
                        "n_components",
                        "parameter",
                        "estimate",
                        "ci_lower",
                        "ci_upper",
                        "full_estimate",
                    )
                ]
            )
