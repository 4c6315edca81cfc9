"""Chi-square statistics, degrees of freedom, and one-parameter cell fits.

Notation follows the 1900 test of fit: ``observed`` is m', ``theoretical``
is m (the hypothesised expectations) and ``estimated`` is m_s (expectations
fitted from the same data), with mu = m - m_s.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .distributions import ParametricCellModel
from .estimation import EstimationError, FitResult
from .special import DomainError, chi_square_sf

EXPECTED_FLOOR = 1.0
EXPECTED_WARN = 5.0
TOTAL_TOL = 1e-6


class SmallExpectedCountWarning(UserWarning):
    pass


class DfPolicy(str, enum.Enum):
    """How many degrees of freedom a chi-square gets.

    PEARSON1900 deducts nothing for estimated expectations; FISHER deducts one
    per estimated parameter.
    """

    PEARSON1900 = "pearson1900"
    FISHER = "fisher"


@dataclass(frozen=True)
class CellData:
    observed: np.ndarray
    theoretical: np.ndarray
    estimated: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=float)
        th = np.asarray(self.theoretical, dtype=float)
        est = np.asarray(self.estimated, dtype=float)
        if not (obs.ndim == th.ndim == est.ndim == 1) or not (obs.size == th.size == est.size):
            raise DomainError("observed, theoretical and estimated must be aligned 1-d vectors")
        if obs.size < 2:
            raise DomainError("need at least two groups")
        if np.any(obs < 0) or not np.all(np.isfinite(obs)):
            raise DomainError("observed counts must be finite and nonnegative")
        if np.any(th <= 0) or np.any(est <= 0) or not (np.all(np.isfinite(th)) and np.all(np.isfinite(est))):
            raise DomainError("theoretical and estimated frequencies must be positive")
        n = obs.sum()
        tol = 1e-9 * max(1.0, n)
        if abs(th.sum() - n) > tol or abs(est.sum() - n) > tol:
            raise DomainError(
                f"totals differ: observed {n}, theoretical {th.sum()}, estimated {est.sum()}"
            )
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "theoretical", th)
        object.__setattr__(self, "estimated", est)

    @property
    def total(self) -> float:
        return float(self.observed.sum())

    @property
    def mu(self) -> np.ndarray:
        return self.theoretical - self.estimated

    @property
    def relative_error(self) -> np.ndarray:
        return self.mu / self.estimated


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise DomainError("a contingency table needs at least 2 rows and 2 columns")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr != np.round(arr)):
            raise DomainError("table counts must be nonnegative integers")
        arr = arr.astype(np.int64)
        if arr.sum() < 1:
            raise DomainError("table is empty")
        object.__setattr__(self, "counts", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ChiSquareDecomposition:
    """chi2 - chi2_s split into the two retained expansion terms plus a residual."""

    chi2: float
    chi2_s: float
    term1_with_superfluous: float
    term1: float
    term2: float
    remainder: float

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class TestReport:
    statistic: float
    df: int
    p_value: float
    policy: DfPolicy

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "statistic": float(self.statistic),
            "df": int(self.df),
            "p_value": float(self.p_value),
            "policy": self.policy.value,
        }


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def _check_expected_floor(expected: np.ndarray) -> None:
    if np.any(expected < EXPECTED_FLOOR):
        raise DomainError(f"expected counts below {EXPECTED_FLOOR} are rejected (min {expected.min():.4g})")
    if np.any(expected < EXPECTED_WARN):
        warnings.warn(
            f"expected counts below {EXPECTED_WARN}; the chi-square reference may be poor",
            SmallExpectedCountWarning,
            stacklevel=3,
        )


def chi_square_stat(observed, expected) -> float:
    """Sum of (m' - m)^2 / m."""
    obs = np.asarray(observed, dtype=float).ravel()
    exp = np.asarray(expected, dtype=float).ravel()
    if obs.shape != exp.shape:
        raise DomainError(f"length mismatch: {obs.size} observed vs {exp.size} expected")
    if np.any(exp <= 0) or not np.all(np.isfinite(exp)):
        raise DomainError("expected counts must be positive and finite")
    if abs(obs.sum() - exp.sum()) > TOTAL_TOL * max(1.0, obs.sum()):
        raise DomainError(f"totals differ: observed {obs.sum()} vs expected {exp.sum()}")
    _check_expected_floor(exp)
    return float(np.sum((obs - exp) ** 2 / exp))


def expected_counts_independence(t: ContingencyTable) -> np.ndarray:
    rows, cols = t.row_totals, t.col_totals
    if np.any(rows == 0) or np.any(cols == 0):
        raise DomainError("every row and column total must be positive")
    return np.outer(rows, cols) / t.total


def degrees_of_freedom(policy: DfPolicy, groups: int, params_estimated: int = 0) -> int:
    policy = DfPolicy(policy)
    if groups < 2:
        raise DomainError("need at least two groups")
    if params_estimated < 0:
        raise DomainError("params_estimated must be nonnegative")
    if policy is DfPolicy.PEARSON1900:
        return groups - 1
    df = groups - 1 - params_estimated
    if df <= 0:
        raise DomainError(f"{params_estimated} estimated parameters saturate {groups} groups")
    return df


def degrees_of_freedom_table(policy: DfPolicy, r: int, c: int) -> int:
    if r < 2 or c < 2:
        raise DomainError("tables need r, c >= 2")
    # Independence fixes the r - 1 free row and c - 1 free column proportions.
    return degrees_of_freedom(policy, r * c, (r - 1) + (c - 1))


def test_independence(t: ContingencyTable, policy: DfPolicy) -> TestReport:
    policy = DfPolicy(policy)
    expected = expected_counts_independence(t)
    stat = chi_square_stat(t.counts, expected)
    r, c = t.shape
    df = degrees_of_freedom_table(policy, r, c)
    return TestReport(stat, df, chi_square_sf(stat, df), policy)


test_independence.__test__ = False  # not a pytest test


def decompose_difference(c: CellData) -> ChiSquareDecomposition:
    """Split chi2 - chi2_s into the first- and second-order terms in mu / m_s.

    The remainder is whatever the two terms leave unexplained, so the
    identity chi2 - chi2_s = term1 + term2 + remainder holds by construction.
    """
    obs, m, ms = c.observed, c.theoretical, c.estimated
    rel = (m - ms) / ms
    o2 = obs * obs
    chi2 = float(np.sum((obs - m) ** 2 / m))
    chi2_s = float(np.sum((obs - ms) ** 2 / ms))
    term1_sup = -float(np.sum(rel * (o2 - ms * ms) / ms))
    term1 = -float(np.sum(rel * o2 / ms))
    term2 = float(np.sum(rel * rel * o2 / ms))
    remainder = (chi2 - chi2_s) - (term1 + term2)
    return ChiSquareDecomposition(chi2, chi2_s, term1_sup, term1, term2, remainder)


# ---------------------------------------------------------------------------
# One-parameter fits for cell models
# ---------------------------------------------------------------------------

GRID_POINTS = 257


def _observed_for(model: ParametricCellModel, observed) -> np.ndarray:
    obs = np.asarray(observed, dtype=float).ravel()
    if obs.size != model.cells:
        raise DomainError(f"model has {model.cells} cells, got {obs.size} counts")
    if np.any(obs < 0):
        raise DomainError("observed counts must be nonnegative")
    return obs


def _grid(model: ParametricCellModel) -> np.ndarray:
    lo, hi = model.bounds
    # Open interval: keep clear of endpoints where some cell mass vanishes.
    return np.linspace(lo, hi, GRID_POINTS + 2)[1:-1]


def _minimize_1d(objective: Callable, derivative: Callable, model, kind: str) -> tuple[float, int]:
    grid = _grid(model)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = objective(grid)
    values = np.where(np.isfinite(values), values, np.inf)
    i = int(np.argmin(values))  # leftmost minimiser on ties
    if not np.isfinite(values[i]):
        raise EstimationError(f"{kind}: objective not finite anywhere on the grid")
    if i == 0 or i == grid.size - 1:
        lo, hi = model.bounds
        a = lo + (grid[0] - lo) * 1e-6 if i == 0 else grid[-2]
        b = grid[1] if i == 0 else hi - (hi - grid[-1]) * 1e-6
    else:
        a, b = grid[i - 1], grid[i + 1]
    da, db = derivative(a), derivative(b)
    if not (da < 0 < db):
        if da == 0:
            return float(a), 0
        if db == 0:
            return float(b), 0
        raise EstimationError(f"{kind}: no interior minimum in {model.bounds}", last_iterate=float(grid[i]))
    theta, info = optimize.brentq(derivative, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True)
    return float(theta), info.iterations


def chi_square_objective(model: ParametricCellModel, observed, theta) -> np.ndarray:
    obs = _observed_for(model, observed)
    ms = model.expected(theta)
    shape = (-1,) + (1,) * np.ndim(theta)
    return np.sum((obs.reshape(shape) - ms) ** 2 / ms, axis=0)


def chi_square_derivative(model: ParametricCellModel, observed, theta: float) -> float:
    """d/dtheta of sum (m' - m_s)^2 / m_s, which equals -sum m'^2 m_s' / m_s^2."""
    obs = _observed_for(model, observed)
    ms = model.expected(theta)
    return -float(np.sum(obs * obs * model.d_expected(theta) / (ms * ms)))


def grouped_score(model: ParametricCellModel, observed, theta: float) -> float:
    obs = _observed_for(model, observed)
    return float(np.sum(obs * model.d_expected(theta) / model.expected(theta)))


def _scaled(model: ParametricCellModel, observed):
    obs = _observed_for(model, observed)
    n = obs.sum()
    if n <= 0:
        raise DomainError("observed counts sum to zero")
    return obs, model.with_total(n)


def min_chi_square_fit(model: ParametricCellModel, observed) -> FitResult:
    """theta minimising sum (m' - m_s(theta))^2 / m_s(theta).

    A grid scan locates the leftmost best grid point; the root of the
    derivative inside the neighbouring bracket is then found by Brent's
    method, so the first-order condition holds to rounding.
    """
    obs, model = _scaled(model, observed)
    theta, iters = _minimize_1d(
        lambda t: chi_square_objective(model, obs, t),
        lambda t: chi_square_derivative(model, obs, t),
        model,
        "minimum chi-square",
    )
    return FitResult(theta, "minimum_chi_square", int(obs.sum()), iters, True, abs(chi_square_derivative(model, obs, theta)))


def grouped_mle_fit(model: ParametricCellModel, observed) -> FitResult:
    """theta maximising sum m' log m_s(theta)."""
    obs, model = _scaled(model, observed)

    def neg_loglik(t):
        p = model.probabilities(t)
        shape = (-1,) + (1,) * np.ndim(t)
        o = obs.reshape(shape)
        logp = np.where(o > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
        bad = np.any((p <= 0) & (o > 0), axis=0)
        return np.where(bad, np.inf, -np.sum(o * logp, axis=0))

    theta, iters = _minimize_1d(
        neg_loglik,
        lambda t: -grouped_score(model, obs, t),
        model,
        "grouped maximum likelihood",
    )
    return FitResult(theta, "maximum_likelihood", int(obs.sum()), iters, True, abs(grouped_score(model, obs, theta)))


def fisher_quadratic_form(model: ParametricCellModel, theta_hat: float, theta_true: float) -> float:
    """(theta_hat - theta)^2 * sum (1/m_s) (dm_s/dtheta)^2, evaluated at theta_hat."""
    model.check_theta(theta_true)
    model.check_theta(theta_hat)
    ms = model.expected(theta_hat)
    d = model.d_expected(theta_hat)
    return float((theta_hat - theta_true) ** 2 * np.sum(d * d / ms))


def cell_information(model: ParametricCellModel, theta: float) -> float:
    """sum (1/m_s)(dm_s/dtheta)^2: the reciprocal variance of an efficient estimate."""
    ms = model.expected(theta)
    d = model.d_expected(theta)
    return float(np.sum(d * d / ms))


def chi_square_test(observed, expected, policy: DfPolicy, params_estimated: int = 0) -> TestReport:
    policy = DfPolicy(policy)
    stat = chi_square_stat(observed, expected)
    df = degrees_of_freedom(policy, np.size(observed), params_estimated)
    return TestReport(stat, df, chi_square_sf(stat, df), policy)

