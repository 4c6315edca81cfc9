"""Fitting, information matrices, and probable errors.

Two probable-error procedures live side by side here:

* the Pearson-Filon procedure (:func:`pearson_filon_probable_errors`), which takes the
  inverse information at the plugged-in estimate whatever estimator produced
  it, and
* the corrected one (:func:`asymptotic_report`), which uses the asymptotic
  covariance of the estimator actually used.

They agree for efficient estimators and for the normal family, and the first
understates the second everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .distributions import (
    Family,
    GammaParams,
    NormalParams,
    gamma_central_moments,
    normal_central_moments,
)
from .special import DomainError, digamma, trigamma

# The historical constant, kept at four figures on purpose (the normal
# quartile is 0.6744897...).
PROBABLE_ERROR_CONSTANT = 0.6745

Method = Literal["moments", "maximum_likelihood", "minimum_chi_square"]
Params = Union[NormalParams, GammaParams]


class EstimationError(RuntimeError):
    """A fit failed; ``last_iterate`` holds the final parameter value reached."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class FitResult:
    params: object
    method: Method
    sample_size: int
    iterations: int = 0
    converged: bool = True
    score_norm: Optional[float] = None

    def to_dict(self) -> dict:
        if isinstance(self.params, (NormalParams, GammaParams)):
            params = dict(zip(self.params.names, map(float, self.params.to_vector())))
        else:
            params = {"theta": float(self.params)}
        return {
            "params": params,
            "method": self.method,
            "sample_size": int(self.sample_size),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "score_norm": None if self.score_norm is None else float(self.score_norm),
        }


def _sample(sample, *, positive: bool) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise EstimationError("need at least two observations")
    if not np.all(np.isfinite(x)):
        raise EstimationError("sample contains non-finite values")
    if positive and np.any(x <= 0):
        raise EstimationError("gamma fitting needs strictly positive observations")
    if np.all(x == x[0]):
        raise EstimationError("sample is constant")
    return x


def fit_normal(sample) -> FitResult:
    x = _sample(sample, positive=False)
    mu = float(x.mean())
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    return FitResult(NormalParams(mu, sigma), "moments", x.size)


def fit_gamma_moments(sample) -> FitResult:
    x = _sample(sample, positive=True)
    mean = float(x.mean())
    var = float(np.mean((x - mean) ** 2))
    if var <= 0:
        raise EstimationError("sample variance is zero")
    return FitResult(GammaParams(mean * mean / var, mean / var), "moments", x.size)


def gamma_score(sample, p: GammaParams) -> np.ndarray:
    """Mean per-observation score d/d(shape, rate) log f at ``p``."""
    x = np.asarray(sample, dtype=float)
    return np.array([math.log(p.rate) - digamma(p.shape) + float(np.mean(np.log(x))), p.shape / p.rate - float(x.mean())])


def fit_gamma_mle(sample, *, tol: float = 1e-12, max_iter: int = 100) -> FitResult:
    """Maximum likelihood for the gamma shape and rate.

    Solves log k - psi(k) = log(mean) - mean(log x) by Newton's method from
    the moments estimate; a step that leaves the bracket known to contain the
    root falls back to bisection.  The rate follows as k / mean.
    """
    x = _sample(sample, positive=True)
    mean = float(x.mean())
    target = math.log(mean) - float(np.mean(np.log(x)))
    if not target > 0:
        raise EstimationError("log(mean) - mean(log x) must be positive")

    def g(k):
        return math.log(k) - digamma(k) - target

    # g is strictly decreasing from +inf to 0 on (0, inf).
    lo, hi = 0.0, math.inf
    k = fit_gamma_moments(x).params.shape
    for it in range(1, max_iter + 1):
        gk = g(k)
        if gk > 0:
            lo = k
        else:
            hi = k
        if abs(gk) <= tol * max(1.0, target):
            break
        step = gk / (1.0 / k - trigamma(k))
        k_new = k - step
        if not (lo < k_new < hi):
            k_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * k
        if abs(k_new - k) <= 1e-15 * k:
            k = k_new
            break
        k = k_new
    else:
        raise EstimationError(f"gamma MLE did not converge in {max_iter} iterations", last_iterate=k)
    params = GammaParams(k, k / mean)
    score = gamma_score(x, params)
    return FitResult(params, "maximum_likelihood", x.size, it, True, float(np.linalg.norm(score)))


# ---------------------------------------------------------------------------
# Information
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InformationMatrix:
    """Per-observation expected information -E[Hessian of log f] at ``eval_point``."""

    matrix: np.ndarray
    eval_point: object

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("information matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise DomainError("information matrix is not symmetric")
        m = 0.5 * (m + m.T)
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise DomainError("information matrix is not positive definite") from exc
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def information_gamma(p: GammaParams) -> InformationMatrix:
    k, r = p.shape, p.rate
    return InformationMatrix(np.array([[trigamma(k), -1.0 / r], [-1.0 / r, k / r**2]]), p)


def information_normal(p: NormalParams) -> InformationMatrix:
    s2 = p.sigma**2
    return InformationMatrix(np.array([[1.0 / s2, 0.0], [0.0, 2.0 / s2]]), p)


def information(p: Params) -> InformationMatrix:
    if isinstance(p, GammaParams):
        return information_gamma(p)
    if isinstance(p, NormalParams):
        return information_normal(p)
    raise TypeError(f"no analytic information for {type(p).__name__}")


def _expect(family: Family, p, func, tol: float) -> float:
    """∫ f(x|p) func(x) dx over the family support, split at the bulk."""

    def integrand(x):
        return math.exp(family.log_density(x, p)) * func(x)

    lo, hi = family.support
    mid = family.split_point(p)
    total = 0.0
    for a, b in ((lo, mid), (mid, hi)):
        out = integrate.quad(integrand, a, b, epsabs=tol, epsrel=1e-12, limit=500, full_output=1)
        if len(out) > 3:
            raise EstimationError(f"quadrature failed on ({a}, {b}): {out[3].splitlines()[0]}")
        total += out[0]
    return total


def information_numeric(family: Family, p, *, tol: float = 1e-10) -> InformationMatrix:
    """-∫ f · Hessian(log f) dx by adaptive quadrature."""
    d = len(p.to_vector())
    m = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            m[i, j] = m[j, i] = -_expect(family, p, lambda x: family.hessian(x, p)[i, j], tol)
    return InformationMatrix(m, p)


def expected_score(family: Family, p, *, tol: float = 1e-10) -> np.ndarray:
    """∫ f · grad(log f) dx; zero when density and score share parameters."""
    d = len(p.to_vector())
    return np.array([_expect(family, p, lambda x: family.gradient(x, p)[i], tol) for i in range(d)])


# ---------------------------------------------------------------------------
# Probable errors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticReport:
    parameter_names: tuple[str, ...]
    pf_probable_errors: np.ndarray
    sample_size: int
    corrected_probable_errors: Optional[np.ndarray] = None
    efficiency: Optional[np.ndarray] = None
    method: Optional[str] = None

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else dict(zip(self.parameter_names, map(float, v)))

        return {
            "method": self.method,
            "sample_size": int(self.sample_size),
            "probable_error_constant": PROBABLE_ERROR_CONSTANT,
            "pf_probable_errors": vec(self.pf_probable_errors),
            "corrected_probable_errors": vec(self.corrected_probable_errors),
            "efficiency": vec(self.efficiency),
        }


def pearson_filon_probable_errors(info: InformationMatrix, n: int) -> AsymptoticReport:
    """0.6745 * sqrt(diag(info^-1) / n), blind to how the estimate was made."""
    if n < 1:
        raise DomainError("n must be at least 1")
    inv = info.inverse()
    names = getattr(info.eval_point, "names", tuple(f"p{i}" for i in range(inv.shape[0])))
    pe = PROBABLE_ERROR_CONSTANT * np.sqrt(np.diag(inv) / n)
    return AsymptoticReport(tuple(names), pe, n)


def moments_covariance(mean: float, central: Sequence[float], jacobian: np.ndarray) -> np.ndarray:
    """Delta-method covariance of g(xbar, m2) per observation.

    ``central`` holds (mu_2, mu_3, mu_4).  The per-observation covariance of
    (xbar, m2) is [[mu_2, mu_3], [mu_3, mu_4 - mu_2^2]].
    """
    mu2, mu3, mu4 = central
    v = np.array([[mu2, mu3], [mu3, mu4 - mu2 * mu2]])
    return jacobian @ v @ jacobian.T


def corrected_moments_variance_gamma(p: GammaParams) -> np.ndarray:
    """Per-observation asymptotic covariance of the moments (shape, rate) estimator."""
    mean, mu2, mu3, mu4 = gamma_central_moments(p, 4)
    # shape = xbar^2 / m2, rate = xbar / m2
    jac = np.array(
        [
            [2.0 * mean / mu2, -mean * mean / mu2**2],
            [1.0 / mu2, -mean / mu2**2],
        ]
    )
    return moments_covariance(mean, (mu2, mu3, mu4), jac)


def corrected_moments_variance_normal(p: NormalParams) -> np.ndarray:
    mean, mu2, mu3, mu4 = normal_central_moments(p, 4)
    # mu = xbar, sigma = sqrt(m2)
    jac = np.array([[1.0, 0.0], [0.0, 0.5 / math.sqrt(mu2)]])
    return moments_covariance(mean, (mu2, mu3, mu4), jac)


def estimator_covariance(p: Params, method: str) -> np.ndarray:
    """Per-observation asymptotic covariance of the estimator named by ``method``."""
    if method == "maximum_likelihood":
        return information(p).inverse()
    if method == "moments":
        if isinstance(p, GammaParams):
            return corrected_moments_variance_gamma(p)
        if isinstance(p, NormalParams):
            return corrected_moments_variance_normal(p)
    raise DomainError(f"no asymptotic covariance for method {method!r} on {type(p).__name__}")


def asymptotic_report(p: Params, n: int, method: str) -> AsymptoticReport:
    """Both probable-error procedures for an estimator of ``p`` from n observations."""
    info = information(p)
    pf = pearson_filon_probable_errors(info, n)
    cov = estimator_covariance(p, method)
    corrected = PROBABLE_ERROR_CONSTANT * np.sqrt(np.diag(cov) / n)
    eff = np.diag(info.inverse()) / np.diag(cov)
    return AsymptoticReport(pf.parameter_names, pf.pf_probable_errors, n, corrected, eff, method)


def fit_report(fit: FitResult) -> AsymptoticReport:
    return asymptotic_report(fit.params, fit.sample_size, fit.method)


def pearson_filon_quadratic_logratio(family: Family, estimate, delta, n: int) -> float:
    """Quadratic approximation -(n/2) delta' I(estimate) delta to log(P_delta / P_0)."""
    delta = np.asarray(delta, dtype=float)
    family.params(estimate.to_vector() + delta)  # shifted point must be valid
    info = information(estimate)
    return float(-0.5 * n * delta @ info.matrix @ delta)


def gamma_shape_efficiency(shape: float) -> float:
    p = GammaParams(shape, 1.0)
    return float(information_gamma(p).inverse()[0, 0] / corrected_moments_variance_gamma(p)[0, 0])


def shape_efficiency_curve(shapes) -> list[tuple[float, float, float]]:
    """Rows (shape, efficiency, pe_ratio) for the moments estimate of the gamma shape.

    pe_ratio = sqrt(efficiency) is the Pearson-Filon probable error divided by the
    actual asymptotic probable error of the moments estimate.
    """
    rows = []
    for k in shapes:
        if not k > 0:
            raise DomainError(f"shape must be positive, got {k}")
        eff = gamma_shape_efficiency(float(k))
        rows.append((float(k), eff, math.sqrt(eff)))
    return rows

