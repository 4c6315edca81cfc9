"""Numbered acceptance criteria at their stated tolerances.

Each test carries a ``criterion`` marker; conftest prints a PASS/FAIL line
per criterion with the measured quantities at the end of the run.
"""

import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from pearson_fisher.cli import DEFAULT_SHAPES
from pearson_fisher.distributions import (
    GAMMA,
    GammaParams,
    GroupedGammaModel,
    LinearProbeModel,
    NormalParams,
    binomial_difference_identity_residual,
    gamma_log_density,
    gamma_log_density_gradient,
    gamma_log_density_hessian,
    normal_log_density,
    normal_log_density_gradient,
    normal_log_density_hessian,
)
from pearson_fisher.estimation import (
    asymptotic_report,
    corrected_moments_variance_gamma,
    information_gamma,
    information_numeric,
    shape_efficiency_curve,
)
from pearson_fisher.goodness_of_fit import CellData, SmallExpectedCountWarning, chi_square_stat, decompose_difference
from pearson_fisher.montecarlo import (
    run_fisher1924_experiment,
    run_gamma_pe_experiment,
    run_remainder_scaling_experiment,
    run_table_null_experiment,
)
from pearson_fisher.special import chi_square_quantile, chi_square_sf

PE_SHAPES = (0.5, 1, 2, 5, 10)


def _dyadic(probs, n):
    # multiples of 1/1024 whose float sum is exactly n, each at least 1
    units = 1024
    a = np.maximum(np.floor(probs * n * units), units).astype(np.int64)
    a[np.argmax(a)] += n * units - a.sum()
    return a / units


def random_instances(seed, count=1000):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        g = int(rng.integers(2, 15))
        n = int(rng.integers(20 * g, 20000))
        th = rng.dirichlet(np.full(g, 4.0))
        obs = rng.multinomial(n, th).astype(float)
        out.append(CellData(obs, _dyadic(th, n), _dyadic(rng.dirichlet(np.full(g, 4.0)), n)))
    return out


def exact_alternative_form(c):
    """sum m'^2 / m - N in rational arithmetic on the exact float inputs."""
    total = sum(Fraction(float(v)) for v in c.observed)
    return sum(Fraction(float(o)) ** 2 / Fraction(float(m)) for o, m in zip(c.observed, c.theoretical)) - total


@pytest.fixture(scope="module")
def cell_instances():
    return random_instances(1900)


@pytest.fixture(scope="module")
def gamma_pe_runs():
    return {k: run_gamma_pe_experiment(k, 1.0, 5000, 2000, seed=20075) for k in PE_SHAPES}


@pytest.mark.criterion(1, "exact binomial difference identity, 1830 cases")
def test_c01_binomial_identity(record_property):
    t0 = time.perf_counter()
    cases = [binomial_difference_identity_residual(n, k) for n in range(1, 61) for k in range(n)]
    elapsed = time.perf_counter() - t0
    nonzero = sum(r != 0 for r in cases)
    record_property("cases", len(cases))
    record_property("nonzero", nonzero)
    record_property("seconds", f"{elapsed:.3f}")
    assert len(cases) == 1830
    assert nonzero == 0
    assert elapsed < 1.0


@pytest.mark.criterion(2, "chi2 = sum m'^2/m - N within 1e-10 relative")
def test_c02_chi_square_identity(record_property, cell_instances):
    t0 = time.perf_counter()
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallExpectedCountWarning)
        for c in cell_instances:
            stat = chi_square_stat(c.observed, c.theoretical)
            assert sum(map(Fraction, c.theoretical.tolist())) == c.total
            alt = exact_alternative_form(c)
            worst = max(worst, float(abs(Fraction(stat) - alt) / alt))
    elapsed = time.perf_counter() - t0
    record_property("max_rel_err", f"{worst:.2e}")
    record_property("seconds", f"{elapsed:.3f}")
    assert worst <= 1e-10
    assert elapsed < 1.0


@pytest.mark.criterion(3, "superfluous term cancels after summation")
def test_c03_superfluous_cancellation(record_property, cell_instances):
    worst = 0.0
    for c in cell_instances:
        d = decompose_difference(c)
        worst = max(worst, abs(d.term1_with_superfluous - d.term1) / max(abs(d.term1), 1.0))
    record_property("max_rel_diff", f"{worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.criterion(4, "saturated fit: chi2_s = 0 exactly, term2 = sum (m - m')^2 / m'")
def test_c04_saturated_case(record_property):
    rng = np.random.default_rng(1936)
    worst = 0.0
    for _ in range(500):
        g = int(rng.integers(2, 12))
        obs = rng.integers(1, 500, size=g).astype(float)
        m = rng.dirichlet(np.full(g, 3.0)) * obs.sum()
        m *= obs.sum() / m.sum()
        d = decompose_difference(CellData(obs, m, obs))
        assert d.chi2_s == 0.0
        oracle = float(np.sum((m - obs) ** 2 / obs))
        worst = max(worst, abs(d.term2 - oracle) / max(oracle, 1e-300))
    record_property("max_rel_err_term2", f"{worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.criterion(5, "2x2 independence: chi2_s behaves like chi-square(1)")
def test_c05_two_by_two(record_property):
    t0 = time.perf_counter()
    res = run_table_null_experiment(2, 2, 400, 10_000, seed=20071)
    elapsed = time.perf_counter() - t0
    s = res.summaries
    mean = s["statistic"]["mean"]
    ks1 = s["ks_distance"]["1"]
    reject = float(np.mean(res.samples["chi2_s"] > chi_square_quantile(0.95, 3)))
    oracle = chi_square_sf(chi_square_quantile(0.95, 3), 1)
    for k, v in [("mean", mean), ("ks_df1", ks1), ("reject_at_df3_crit", reject), ("oracle", oracle), ("seconds", elapsed)]:
        record_property(k, f"{v:.4f}")
    assert 0.95 <= mean <= 1.05
    assert ks1 < 0.02
    assert 0.002 <= reject <= 0.012
    assert elapsed < 30


@pytest.mark.criterion(6, "3x3 independence: chi2_s behaves like chi-square(4), not (8)")
def test_c06_three_by_three(record_property):
    res = run_table_null_experiment(3, 3, 900, 10_000, seed=20072)
    s = res.summaries
    mean, ks4, ks8 = s["statistic"]["mean"], s["ks_distance"]["4"], s["ks_distance"]["8"]
    for k, v in [("mean", mean), ("ks_df4", ks4), ("ks_df8", ks8)]:
        record_property(k, f"{v:.4f}")
    assert 3.8 <= mean <= 4.2
    assert ks4 < 0.02
    assert ks8 > 0.2


@pytest.mark.criterion(7, "chi2 - chi2_s tracks the quadratic form and chi-square(1)")
def test_c07_fisher_identity(record_property):
    model = LinearProbeModel()
    runs = {N: run_fisher1924_experiment(model, 0.2, N, 4000, seed=20073) for N in (100, 1000, 10_000)}
    big = runs[10_000].summaries
    mean = big["difference"]["mean"]
    corr = big["correlation_with_quadratic_form"]
    term1 = [runs[N].summaries["median_abs_term1"] for N in (100, 1000, 10_000)]
    record_property("mean_diff", f"{mean:.4f}")
    record_property("corr", f"{corr:.5f}")
    record_property("median_abs_term1", "/".join(f"{v:.4g}" for v in term1))
    assert 0.9 <= mean <= 1.1
    assert corr > 0.99
    assert term1[0] > term1[1] > term1[2]


@pytest.mark.criterion(8, "remainder shrinks like N^-1/2")
def test_c08_remainder_scaling(record_property):
    res = run_remainder_scaling_experiment(LinearProbeModel(), 0.2, [100, 1000, 10_000, 100_000], 2000, seed=20074)
    slope = res.summaries["loglog_slope"]
    med = res.summaries["median_abs_remainder"]
    record_property("slope", f"{slope:.4f}")
    record_property("medians", "/".join(f"{v:.3g}" for v in med))
    assert -0.65 <= slope <= -0.35
    assert all(a > b for a, b in zip(med, med[1:]))


@pytest.mark.criterion(9, "Pearson-Filon probable errors understate, never overstate")
def test_c09_understatement(record_property, gamma_pe_runs):
    ratios = {k: r.summaries["moments"]["claimed_over_actual"] for k, r in gamma_pe_runs.items()}
    curve = shape_efficiency_curve(DEFAULT_SHAPES)
    best = min(curve, key=lambda row: row[2])
    record_property("moments_ratio", ", ".join(f"{k}:{v:.3f}" for k, v in ratios.items()))
    record_property("min_pe_ratio", f"{best[2]:.3f}@shape={best[0]}")
    assert all(v <= 1.05 for v in ratios.values())
    assert any(v <= 0.5 for k, v in ratios.items() if k <= 1)
    assert any(row[2] <= 0.25 for row in curve)


@pytest.mark.criterion(10, "Pearson-Filon probable errors are right for the MLE")
def test_c10_mle_efficiency(record_property, gamma_pe_runs):
    ratios = {k: r.summaries["mle"]["claimed_over_actual"] for k, r in gamma_pe_runs.items()}
    record_property("mle_ratio", ", ".join(f"{k}:{v:.3f}" for k, v in ratios.items()))
    assert all(0.9 <= v <= 1.1 for v in ratios.values())


@pytest.mark.criterion(11, "normal family: both procedures agree within 1e-10")
def test_c11_normal_agreement(record_property):
    worst = 0.0
    for mu in (-50.0, 0.0, 3.0):
        for sigma in (1e-3, 0.5, 1.0, 40.0):
            for n in (10, 1000):
                rep = asymptotic_report(NormalParams(mu, sigma), n, "moments")
                rel = np.abs(rep.corrected_probable_errors - rep.pf_probable_errors) / rep.pf_probable_errors
                worst = max(worst, float(rel.max()))
    record_property("max_rel_diff", f"{worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.criterion(12, "moments covariance minus inverse information is PSD")
def test_c12_cramer_rao(record_property):
    lowest = np.inf
    for k in (0.05, 0.1, 0.5, 1, 2, 5, 10, 50, 200):
        for r in (0.1, 1.0, 7.5):
            p = GammaParams(k, r)
            diff = corrected_moments_variance_gamma(p) - information_gamma(p).inverse()
            lowest = min(lowest, float(np.linalg.eigvalsh(diff).min()))
    record_property("min_eigenvalue", f"{lowest:.3e}")
    assert lowest >= -1e-9


def _fd_check(logpdf, grad, hess, x, vec, make):
    h = 1e-6
    g_fd = np.empty(2)
    h_fd = np.empty((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        up, dn = make(*(vec + e)), make(*(vec - e))
        g_fd[i] = (logpdf(x, up) - logpdf(x, dn)) / (2 * h)
        h_fd[:, i] = (grad(x, up) - grad(x, dn)) / (2 * h)
    p = make(*vec)
    return max(np.max(np.abs(grad(x, p) - g_fd)), np.max(np.abs(hess(x, p) - h_fd)))


@pytest.mark.criterion(13, "numeric cross-checks: information, derivatives, round trips")
def test_c13_numeric_cross_checks(record_property):
    t0 = time.perf_counter()
    info_err = 0.0
    for k in (0.5, 1, 2, 5, 10):
        p = GammaParams(k, 1.3)
        info_err = max(info_err, float(np.max(np.abs(information_numeric(GAMMA, p).matrix - information_gamma(p).matrix))))

    deriv_err = 0.0
    for x, k, r in [(0.3, 0.5, 1.0), (2.0, 2.0, 1.5), (7.0, 5.0, 0.9), (12.0, 10.0, 1.0)]:
        deriv_err = max(deriv_err, _fd_check(gamma_log_density, gamma_log_density_gradient, gamma_log_density_hessian, x, np.array([k, r]), GammaParams))
    for x, mu, s in [(0.0, 0.0, 1.0), (-1.0, 2.0, 0.7), (5.0, 3.0, 2.5)]:
        deriv_err = max(deriv_err, _fd_check(normal_log_density, normal_log_density_gradient, normal_log_density_hessian, x, np.array([mu, s]), NormalParams))
    h = 1e-5
    for model, thetas in [(LinearProbeModel(1.0), (0.05, 0.2, 0.3)), (GroupedGammaModel(1.0), (0.5, 2.0, 6.0))]:
        for t in thetas:
            fd1 = (model.probabilities(t + h) - model.probabilities(t - h)) / (2 * h)
            fd2 = (model.dprobabilities(t + h) - model.dprobabilities(t - h)) / (2 * h)
            deriv_err = max(deriv_err, float(np.max(np.abs(model.dprobabilities(t) - fd1))))
            deriv_err = max(deriv_err, float(np.max(np.abs(model.d2probabilities(t) - fd2))))

    trip_err = 0.0
    for df in range(1, 11):
        for p in np.arange(0.01, 1.0, 0.01):
            trip_err = max(trip_err, abs(chi_square_sf(chi_square_quantile(p, df), df) - (1 - p)))
    elapsed = time.perf_counter() - t0
    record_property("info_err", f"{info_err:.2e}")
    record_property("deriv_err", f"{deriv_err:.2e}")
    record_property("round_trip_err", f"{trip_err:.2e}")
    record_property("seconds", f"{elapsed:.2f}")
    assert info_err <= 1e-6
    assert deriv_err <= 1e-5
    assert trip_err <= 1e-8
    assert elapsed < 10
