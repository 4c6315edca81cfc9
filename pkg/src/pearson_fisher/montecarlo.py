"""Seeded simulation experiments.

Every replicate draws from its own :class:`RandomStream` ``(seed, index)``,
so a replicate's output depends only on its index.  Results are gathered into
arrays indexed by replicate and every summary is computed from those arrays,
which makes experiments reproducible and independent of execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .distributions import GammaParams, ParametricCellModel, RandomStream, sample_gamma
from .estimation import (
    PROBABLE_ERROR_CONSTANT,
    EstimationError,
    corrected_moments_variance_gamma,
    fit_gamma_mle,
    fit_gamma_moments,
    information_gamma,
    pearson_filon_probable_errors,
)
from .goodness_of_fit import (
    CellData,
    DfPolicy,
    decompose_difference,
    degrees_of_freedom_table,
    fisher_quadratic_form,
    grouped_mle_fit,
    min_chi_square_fit,
)
from .special import DomainError, chi_square_cdf, chi_square_quantile

SCHEMA_VERSION = 1
MAX_FAILURE_FRACTION = 0.01
QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    replicates: int
    size: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"name": self.name, "seed": int(self.seed), "replicates": int(self.replicates), "size": _jsonable(self.size)}


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig
    samples: dict[str, np.ndarray]
    summaries: dict
    failures: int = 0

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "name": self.name,
            "config": self.config.to_dict(),
            "failures": int(self.failures),
            "summaries": _jsonable(self.summaries),
        }
        if include_samples:
            out["samples"] = {k: _jsonable(v) for k, v in self.samples.items()}
        return out

    def to_json(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_dict(include_samples), indent=2, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        """Flat per-replicate table: one column per stored sample series."""
        keys = list(self.samples)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["replicate"] + keys)
        length = max((len(v) for v in self.samples.values()), default=0)
        for i in range(length):
            row = [i]
            for k in keys:
                v = self.samples[k]
                row.append(repr(float(v[i])) if i < len(v) else "")
            writer.writerow(row)
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, DfPolicy):
        return obj.value
    return obj


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def run_replicates(fn: Callable[[int], object], reps: int, order: Optional[Iterable[int]] = None,
                   executor: Optional[Executor] = None) -> list:
    """Evaluate ``fn(i)`` for each replicate and return results indexed by i.

    ``order`` only changes the sequence in which replicates are evaluated;
    ``executor`` farms them out.  Neither affects the returned list.
    """
    indices = list(range(reps)) if order is None else list(order)
    if sorted(indices) != list(range(reps)):
        raise DomainError("order must be a permutation of range(reps)")
    out: list = [None] * reps
    if executor is None:
        for i in indices:
            out[i] = fn(i)
    else:
        for i, r in zip(indices, executor.map(fn, indices)):
            out[i] = r
    return out


def ks_distance(samples, df) -> float:
    """Kolmogorov-Smirnov distance between the samples and a chi-square(df) law."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise DomainError("need at least one sample")
    n = x.size
    cdf = np.asarray(chi_square_cdf(np.maximum(x, 0.0), df))
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "count": int(v.size),
        "mean": float(v.mean()),
        "variance": float(v.var(ddof=1)) if v.size > 1 else 0.0,
        "quantiles": {str(q): float(np.quantile(v, q)) for q in QUANTILE_LEVELS},
    }


def _check_failures(failures: int, reps: int, name: str) -> None:
    if failures > MAX_FAILURE_FRACTION * reps:
        raise EstimationError(f"{name}: {failures} of {reps} replicates failed (cap {MAX_FAILURE_FRACTION:.0%})")


# ---------------------------------------------------------------------------
# Contingency tables under independence
# ---------------------------------------------------------------------------


def _table_chi2(counts: np.ndarray) -> float:
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        return math.nan
    expected = np.outer(rows, cols) / counts.sum()
    return float(np.sum((counts - expected) ** 2 / expected))


def run_table_null_experiment(r: int, c: int, N: int, reps: int, seed: int, row_probs=None, col_probs=None,
                              order=None, executor=None) -> ExperimentResult:
    """Chi-square for r x c tables sampled under independence, against both df policies."""
    row_probs = np.full(r, 1.0 / r) if row_probs is None else np.asarray(row_probs, dtype=float)
    col_probs = np.full(c, 1.0 / c) if col_probs is None else np.asarray(col_probs, dtype=float)
    if row_probs.shape != (r,) or col_probs.shape != (c,):
        raise DomainError("row/column probabilities do not match table dimensions")
    for probs in (row_probs, col_probs):
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("margin probabilities must be positive and sum to 1")
    cell = np.outer(row_probs, col_probs).ravel()
    cell = cell / cell.sum()
    if N * cell.min() < 20:
        raise DomainError(f"N * min cell probability = {N * cell.min():.3g} is below the design floor of 20")
    cfg = ExperimentConfig(
        "table-null", seed, reps,
        {"r": r, "c": c, "N": N, "row_probs": row_probs.tolist(), "col_probs": col_probs.tolist()},
    )

    def replicate(i):
        counts = RandomStream(seed, i).generator().multinomial(N, cell).reshape(r, c)
        return _table_chi2(counts)

    stats = np.array(run_replicates(replicate, reps, order, executor))
    failed = ~np.isfinite(stats)
    failures = int(failed.sum())
    _check_failures(failures, reps, cfg.name)
    good = stats[~failed]

    df_pearson = degrees_of_freedom_table(DfPolicy.PEARSON1900, r, c)
    df_fisher = degrees_of_freedom_table(DfPolicy.FISHER, r, c)
    crit = {p: chi_square_quantile(0.95, df) for p, df in ((DfPolicy.PEARSON1900, df_pearson), (DfPolicy.FISHER, df_fisher))}
    summaries = {
        "statistic": summarize(good),
        "df": {"pearson1900": df_pearson, "fisher": df_fisher},
        "ks_distance": {str(df_pearson): ks_distance(good, df_pearson), str(df_fisher): ks_distance(good, df_fisher)},
        "critical_value_0.05": {p.value: v for p, v in crit.items()},
        "rejection_rate_0.05": {p.value: float(np.mean(good > v)) for p, v in crit.items()},
    }
    return ExperimentResult(cfg.name, cfg, {"chi2_s": stats}, summaries, failures)


# ---------------------------------------------------------------------------
# Cell-model experiments
# ---------------------------------------------------------------------------

ESTIMATORS = {"min_chi_square": min_chi_square_fit, "grouped_mle": grouped_mle_fit}


def _cell_replicate(model: ParametricCellModel, theta0: float, N: int, seed: int, estimator: str):
    truth = model.with_total(N)
    m = truth.expected(theta0)
    probs = truth.probabilities(theta0)

    def replicate(i):
        counts = RandomStream(seed, i).generator().multinomial(N, probs / probs.sum()).astype(float)
        if estimator == "none":
            theta_hat = theta0
        else:
            try:
                theta_hat = ESTIMATORS[estimator](truth, counts).params
            except (EstimationError, DomainError):
                return None
        ms = truth.expected(theta_hat)
        dec = decompose_difference(CellData(counts, m, ms))
        qf = fisher_quadratic_form(truth, theta_hat, theta0)
        return (theta_hat, dec.chi2, dec.chi2_s, dec.term1, dec.term2, dec.remainder, qf)

    return replicate


_CELL_COLUMNS = ("theta_hat", "chi2", "chi2_s", "term1", "term2", "remainder", "quadratic_form")


def _collect_cells(results: list, reps: int, name: str):
    failures = sum(r is None for r in results)
    _check_failures(failures, reps, name)
    nan_row = (math.nan,) * len(_CELL_COLUMNS)
    arr = np.array([nan_row if r is None else r for r in results], dtype=float)
    samples = {k: arr[:, j] for j, k in enumerate(_CELL_COLUMNS)}
    ok = np.isfinite(arr[:, 0])
    return samples, ok, failures


def _model_config(model: ParametricCellModel) -> dict:
    d = {"model": type(model).__name__}
    for k in ("edges", "rate"):
        if hasattr(model, k):
            d[k] = getattr(model, k)
    return d


def run_fisher1924_experiment(model: ParametricCellModel, theta0: float, N: int, reps: int, seed: int,
                              estimator: str = "grouped_mle", order=None, executor=None) -> ExperimentResult:
    """chi2 - chi2_s under the null against its chi-square(1) limit and the quadratic form."""
    if estimator not in ESTIMATORS:
        raise DomainError(f"unknown estimator {estimator!r}; choose from {sorted(ESTIMATORS)}")
    model.check_theta(theta0)
    cfg = ExperimentConfig("fisher1924", seed, reps,
                           {**_model_config(model), "theta0": theta0, "N": N, "estimator": estimator})
    results = run_replicates(_cell_replicate(model, theta0, N, seed, estimator), reps, order, executor)
    samples, ok, failures = _collect_cells(results, reps, cfg.name)
    diff = samples["chi2"][ok] - samples["chi2_s"][ok]
    qf = samples["quadratic_form"][ok]
    samples["difference"] = samples["chi2"] - samples["chi2_s"]
    summaries = {
        "difference": summarize(diff),
        "ks_distance_df1": ks_distance(diff, 1),
        "correlation_with_quadratic_form": float(np.corrcoef(diff, qf)[0, 1]),
        "median_abs_term1": float(np.median(np.abs(samples["term1"][ok]))),
        "median_abs_remainder": float(np.median(np.abs(samples["remainder"][ok]))),
        "mean_term2": float(np.mean(samples["term2"][ok])),
        "min_difference": float(diff.min()),
    }
    return ExperimentResult(cfg.name, cfg, samples, summaries, failures)


def run_remainder_scaling_experiment(model: ParametricCellModel, theta0: float, N_grid: Sequence[int], reps: int,
                                     seed: int, estimator: str = "grouped_mle") -> ExperimentResult:
    """Median |remainder| of the two-term expansion across sample sizes.

    ``estimator="none"`` uses the true expectations for m_s, which makes the
    remainder vanish identically.
    """
    grid = [int(n) for n in N_grid]
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("N grid must be strictly increasing with at least 3 points")
    if estimator != "none" and estimator not in ESTIMATORS:
        raise DomainError(f"unknown estimator {estimator!r}")
    model.check_theta(theta0)
    cfg = ExperimentConfig("remainder-scaling", seed, reps,
                           {**_model_config(model), "theta0": theta0, "N_grid": grid, "estimator": estimator})
    medians, term1_medians, samples, failures = [], [], {}, 0
    for j, N in enumerate(grid):
        # Each N gets its own block of substream indices.
        fn = _cell_replicate(model, theta0, N, seed, estimator)
        results = run_replicates(lambda i, fn=fn, j=j: fn(j * reps + i), reps)
        s, ok, f = _collect_cells(results, reps, cfg.name)
        failures += f
        medians.append(float(np.median(np.abs(s["remainder"][ok]))))
        term1_medians.append(float(np.median(np.abs(s["term1"][ok]))))
        samples[f"remainder_N{N}"] = s["remainder"]
    if np.all(np.asarray(medians) > 0):
        slope = float(np.polyfit(np.log(grid), np.log(medians), 1)[0])
    else:
        slope = math.nan
    summaries = {
        "N_grid": grid,
        "median_abs_remainder": medians,
        "median_abs_term1": term1_medians,
        "loglog_slope": slope,
    }
    return ExperimentResult(cfg.name, cfg, samples, summaries, failures)


# ---------------------------------------------------------------------------
# Gamma probable errors
# ---------------------------------------------------------------------------


def run_gamma_pe_experiment(shape: float, rate: float, n: int, reps: int, seed: int,
                            order=None, executor=None) -> ExperimentResult:
    """Claimed (Pearson-Filon) vs actual probable errors of the gamma shape estimate.

    The actual probable error is the empirical median of |shape_hat - shape|
    over replicates; the claimed one is 0.6745 sqrt((I^-1)_11 / n) at the true
    parameters, which is the same for every estimator.
    """
    p = GammaParams(shape, rate)
    if n < 100:
        raise DomainError("n must be at least 100")
    cfg = ExperimentConfig("gamma-pe", seed, reps, {"shape": shape, "rate": rate, "n": n})

    def replicate(i):
        x = sample_gamma(p, n, RandomStream(seed, i))
        out = []
        for fit in (fit_gamma_moments, fit_gamma_mle):
            try:
                out.append(fit(x).params.shape)
            except (EstimationError, DomainError):
                out.append(math.nan)
        return tuple(out)

    arr = np.array(run_replicates(replicate, reps, order, executor), dtype=float)
    mom, mle = arr[:, 0], arr[:, 1]
    failures = int(np.sum(~np.isfinite(mom) | ~np.isfinite(mle)))
    _check_failures(failures, reps, cfg.name)

    claimed = float(pearson_filon_probable_errors(information_gamma(p), n).pf_probable_errors[0])
    corrected = float(PROBABLE_ERROR_CONSTANT * math.sqrt(corrected_moments_variance_gamma(p)[0, 0] / n))
    summaries = {"claimed_probable_error": claimed, "corrected_moments_probable_error": corrected}
    for label, est in (("moments", mom), ("mle", mle)):
        err = est[np.isfinite(est)] - shape
        actual = float(np.median(np.abs(err)))
        summaries[label] = {
            "mean_estimate": float(np.mean(est[np.isfinite(est)])),
            "actual_probable_error": actual,
            "pe_from_sd": float(PROBABLE_ERROR_CONSTANT * np.std(err, ddof=1)),
            "sd_times_sqrt_n": float(np.std(err, ddof=1) * math.sqrt(n)),
            "claimed_over_actual": claimed / actual,
        }
    return ExperimentResult(cfg.name, cfg, {"shape_moments": mom, "shape_mle": mle}, summaries, failures)

