"""Frequency families: Normal, Gamma (Type III with origin at 0), the exact
symmetric binomial, and one-parameter multinomial cell models.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy import special as sc

from .special import DomainError, digamma, log_gamma, trigamma

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Parameter types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)) or self.sigma <= 0:
            raise DomainError(f"invalid normal parameters mu={self.mu}, sigma={self.sigma}")

    names = ("mu", "sigma")

    def to_vector(self) -> np.ndarray:
        return np.array([self.mu, self.sigma], dtype=float)


@dataclass(frozen=True)
class GammaParams:
    """Gamma density rate**shape * x**(shape-1) * exp(-rate*x) / Γ(shape) on (0, ∞)."""

    shape: float
    rate: float

    def __post_init__(self):
        ok = math.isfinite(self.shape) and math.isfinite(self.rate)
        if not ok or self.shape <= 0 or self.rate <= 0:
            raise DomainError(f"invalid gamma parameters shape={self.shape}, rate={self.rate}")

    names = ("shape", "rate")

    def to_vector(self) -> np.ndarray:
        return np.array([self.shape, self.rate], dtype=float)

    @property
    def mean(self) -> float:
        return self.shape / self.rate


# ---------------------------------------------------------------------------
# Normal
# ---------------------------------------------------------------------------


def normal_log_density(x, p: NormalParams):
    z = np.asarray(x, dtype=float) - p.mu
    out = -0.5 * (LOG_2PI + 2.0 * math.log(p.sigma)) - z * z / (2.0 * p.sigma**2)
    return float(out) if np.ndim(out) == 0 else out


def normal_log_density_gradient(x, p: NormalParams) -> np.ndarray:
    """d/d(mu, sigma) of the normal log density; shape (2,) + shape(x)."""
    z = np.asarray(x, dtype=float) - p.mu
    s = p.sigma
    return np.array([z / s**2, -1.0 / s + z * z / s**3])


def normal_log_density_hessian(x, p: NormalParams) -> np.ndarray:
    z = np.asarray(x, dtype=float) - p.mu
    s = p.sigma
    off = -2.0 * z / s**3
    return np.array(
        [
            [np.broadcast_to(-1.0 / s**2, z.shape), off],
            [off, 1.0 / s**2 - 3.0 * z * z / s**4],
        ]
    )


# ---------------------------------------------------------------------------
# Gamma
# ---------------------------------------------------------------------------


def _positive_x(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("gamma density is defined for x > 0 only")
    return arr


def gamma_log_density(x, p: GammaParams):
    arr = _positive_x(x)
    out = p.shape * math.log(p.rate) - log_gamma(p.shape) + (p.shape - 1.0) * np.log(arr) - p.rate * arr
    return float(out) if np.ndim(out) == 0 else out


def gamma_log_density_gradient(x, p: GammaParams) -> np.ndarray:
    """d/d(shape, rate) of the gamma log density; shape (2,) + shape(x)."""
    arr = _positive_x(x)
    return np.array(
        [
            math.log(p.rate) - digamma(p.shape) + np.log(arr),
            p.shape / p.rate - arr,
        ]
    )


def gamma_log_density_hessian(x, p: GammaParams) -> np.ndarray:
    # Independent of x; broadcast so the result lines up with vector input.
    arr = _positive_x(x)
    one = np.ones_like(arr)
    return np.array(
        [
            [-trigamma(p.shape) * one, one / p.rate],
            [one / p.rate, -p.shape / p.rate**2 * one],
        ]
    )


def gamma_central_moments(p: GammaParams, order: int = 4) -> np.ndarray:
    """Mean followed by the central moments mu_2 .. mu_order."""
    if order not in (1, 2, 3, 4):
        raise DomainError(f"order must be 1..4, got {order}")
    k, r = p.shape, p.rate
    full = np.array([k / r, k / r**2, 2.0 * k / r**3, 3.0 * k * (k + 2.0) / r**4])
    return full[:order]


def normal_central_moments(p: NormalParams, order: int = 4) -> np.ndarray:
    if order not in (1, 2, 3, 4):
        raise DomainError(f"order must be 1..4, got {order}")
    s2 = p.sigma**2
    return np.array([p.mu, s2, 0.0, 3.0 * s2 * s2])[:order]


@dataclass(frozen=True)
class Family:
    """A two-parameter density with analytic parameter derivatives of log f."""

    name: str
    make_params: Callable[..., object]
    log_density: Callable
    gradient: Callable
    hessian: Callable
    support: tuple[float, float]

    def params(self, vector: Sequence[float]):
        return self.make_params(*[float(v) for v in vector])

    def split_point(self, params) -> float:
        # A point inside the bulk of the mass, used to break quadrature ranges.
        if isinstance(params, GammaParams):
            return params.mean
        return params.mu


NORMAL = Family(
    "normal",
    NormalParams,
    normal_log_density,
    normal_log_density_gradient,
    normal_log_density_hessian,
    (-math.inf, math.inf),
)
GAMMA = Family(
    "gamma",
    GammaParams,
    gamma_log_density,
    gamma_log_density_gradient,
    gamma_log_density_hessian,
    (0.0, math.inf),
)


def family_of(params) -> Family:
    if isinstance(params, NormalParams):
        return NORMAL
    if isinstance(params, GammaParams):
        return GAMMA
    raise TypeError(f"no family for {type(params).__name__}")


# ---------------------------------------------------------------------------
# Symmetric binomial (exact)
# ---------------------------------------------------------------------------

MAX_BINOMIAL_TRIALS = 1000


@dataclass(frozen=True)
class SymmetricBinomial:
    trials: int

    def __post_init__(self):
        if not isinstance(self.trials, int) or not 1 <= self.trials <= MAX_BINOMIAL_TRIALS:
            raise DomainError(f"trials must be an integer in [1, {MAX_BINOMIAL_TRIALS}], got {self.trials!r}")

    def pmf(self, k: int) -> Fraction:
        return symmetric_binomial_pmf(self.trials, k)


def symmetric_binomial_pmf(n: int, k: int) -> Fraction:
    """Exact C(n, k) / 2**n."""
    SymmetricBinomial(n)
    if not 0 <= k <= n:
        raise DomainError(f"k must lie in [0, {n}], got {k}")
    return Fraction(math.comb(n, k), 2**n)


def binomial_difference_identity_residual(n: int, k: int) -> Fraction:
    """LHS minus RHS of the binomial analogue of (log f)' = -(x - mu)/sigma^2.

    LHS is the change p(k+1) - p(k) divided by the average of the two
    probabilities; RHS is -(midpoint - n/2) / ((n + 1) / 4).  The result is
    exact and is zero for every n and 0 <= k < n.
    """
    SymmetricBinomial(n)
    if not 0 <= k <= n - 1:
        raise DomainError(f"k must lie in [0, {n - 1}], got {k}")
    lo = symmetric_binomial_pmf(n, k)
    hi = symmetric_binomial_pmf(n, k + 1)
    lhs = (hi - lo) / ((hi + lo) / 2)
    rhs = -((k + Fraction(1, 2)) - Fraction(n, 2)) / ((n + 1) * Fraction(1, 4))
    return lhs - rhs


# ---------------------------------------------------------------------------
# Random streams and sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomStream:
    """A reproducible substream identified by (seed, index).

    Substreams come from :class:`numpy.random.SeedSequence` spawn keys, so
    distinct indices are statistically independent.
    """

    seed: int
    index: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.index < 0:
            raise DomainError("stream index must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        return np.random.Generator(np.random.PCG64(ss))


def _rng(stream) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    return stream.generator()


def sample_normal(p: NormalParams, count: int, stream) -> np.ndarray:
    return _rng(stream).normal(p.mu, p.sigma, size=count)


def sample_gamma(p: GammaParams, count: int, stream) -> np.ndarray:
    return _rng(stream).gamma(p.shape, 1.0 / p.rate, size=count)


def _check_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size < 1 or np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise DomainError("probability vector must be a finite nonnegative 1-d array")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise DomainError(f"probabilities must sum to 1 (got {probs.sum()!r})")
    return probs


def sample_multinomial(probs, total: int, stream) -> np.ndarray:
    probs = _check_probs(probs)
    if total < 0:
        raise DomainError("total must be nonnegative")
    return _rng(stream).multinomial(int(total), probs)


# ---------------------------------------------------------------------------
# One-parameter cell models
# ---------------------------------------------------------------------------


class ParametricCellModel(ABC):
    """Maps a scalar theta to expected cell counts m_s(theta) = total * p(theta).

    Subclasses supply the cell probabilities and their first two derivatives.
    ``bounds`` is the open admissible interval for theta.
    """

    total: float
    bounds: tuple[float, float]

    @property
    @abstractmethod
    def cells(self) -> int: ...

    @abstractmethod
    def probabilities(self, theta) -> np.ndarray:
        """Cell probabilities; for array theta, shape (cells,) + shape(theta)."""

    @abstractmethod
    def dprobabilities(self, theta: float) -> np.ndarray: ...

    @abstractmethod
    def d2probabilities(self, theta: float) -> np.ndarray: ...

    def check_theta(self, theta: float) -> float:
        lo, hi = self.bounds
        if not (lo < theta < hi):
            raise DomainError(f"theta={theta!r} outside admissible range ({lo}, {hi})")
        return float(theta)

    def expected(self, theta) -> np.ndarray:
        return self.total * self.probabilities(theta)

    def d_expected(self, theta: float) -> np.ndarray:
        return self.total * self.dprobabilities(theta)

    def d2_expected(self, theta: float) -> np.ndarray:
        return self.total * self.d2probabilities(theta)

    def with_total(self, total):
        return replace(self, total=total)


@dataclass(frozen=True)
class LinearProbeModel(ParametricCellModel):
    """Three cells with probabilities (theta, 2 theta, 1 - 3 theta), 0 < theta < 1/3."""

    total: float = 1.0
    bounds: tuple[float, float] = field(default=(0.0, 1.0 / 3.0), init=False)

    @property
    def cells(self) -> int:
        return 3

    def probabilities(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        return np.array([t, 2.0 * t, 1.0 - 3.0 * t])

    def dprobabilities(self, theta: float) -> np.ndarray:
        return np.array([1.0, 2.0, -3.0])

    def d2probabilities(self, theta: float) -> np.ndarray:
        return np.zeros(3)


@dataclass(frozen=True)
class GroupedGammaModel(ParametricCellModel):
    """Gamma(shape=theta, rate) mass grouped into cells by fixed interior edges.

    The cells are (0, e1], (e1, e2], ..., (ek, inf).  Shape derivatives of the
    cell masses have no closed form and are obtained by quadrature in
    log-space, where the integrand is smooth for every shape.
    """

    total: float = 1.0
    edges: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0)
    rate: float = 1.0
    bounds: tuple[float, float] = (0.05, 50.0)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 1 or np.any(e <= 0) or np.any(np.diff(e) <= 0):
            raise DomainError("edges must be positive and strictly increasing")
        if self.rate <= 0:
            raise DomainError("rate must be positive")

    @property
    def cells(self) -> int:
        return len(self.edges) + 1

    def _cdf_at_edges(self, shape) -> np.ndarray:
        shape = np.asarray(shape, dtype=float)
        x = self.rate * np.asarray(self.edges, dtype=float).reshape((-1,) + (1,) * shape.ndim)
        inner = sc.gammainc(shape, x)
        zero = np.zeros((1,) + shape.shape)
        one = np.ones((1,) + shape.shape)
        return np.concatenate([zero, inner, one])

    def probabilities(self, theta) -> np.ndarray:
        return np.diff(self._cdf_at_edges(theta), axis=0)

    def _cdf_shape_derivatives(self, shape: float, order: int) -> np.ndarray:
        # d^j/da^j P(a, x) = ∫_{-inf}^{log x} g_j(s) exp(a s - e^s - lgamma(a)) ds
        psi, psi1 = digamma(shape), trigamma(shape)
        lg = log_gamma(shape)

        def integrand(s):
            w = math.exp(shape * s - math.exp(s) - lg)
            d = s - psi
            return w * d if order == 1 else w * (d * d - psi1)

        vals = [0.0]
        for e in self.edges:
            upper = math.log(self.rate * e)
            # Break at the log-mode so quad sees the peak.
            mode = math.log(shape)
            if mode < upper:
                a, _ = integrate.quad(integrand, -math.inf, mode, epsabs=1e-14, epsrel=1e-12, limit=200)
                b, _ = integrate.quad(integrand, mode, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
                vals.append(a + b)
            else:
                a, _ = integrate.quad(integrand, -math.inf, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
                vals.append(a)
        vals.append(0.0)
        return np.array(vals)

    def dprobabilities(self, theta: float) -> np.ndarray:
        return np.diff(self._cdf_shape_derivatives(self.check_theta(theta), 1))

    def d2probabilities(self, theta: float) -> np.ndarray:
        return np.diff(self._cdf_shape_derivatives(self.check_theta(theta), 2))
