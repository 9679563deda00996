"""Tests for the built-in target families and their exact φ algebra.

Sampler checks compare against oracles that bypass the production samplers:
quadrature-built inverse CDFs for the quartic family, scipy's Beta for the
logit family.  Constants marked "frozen" were evaluated at 30-digit precision.
"""

import math

import numpy as np
import pytest
from scipy import stats

from mcfusion.targets import (
    beta_logit_problem,
    beta_logit_reference_cdf,
    gaussian_problem,
    polynomial_range_on_interval,
    quartic_problem,
    quartic_reference_cdf,
    quartic_second_moment,
)

# ---------------------------------------------------------------------------
# helpers


def test_polynomial_range_matches_dense_grid():
    rng = np.random.default_rng(77)
    for _ in range(100):
        coeffs = rng.normal(0.0, 1.0, rng.integers(2, 7))
        lo = rng.uniform(-3.0, 2.0)
        hi = lo + rng.uniform(0.1, 3.0)
        inf_b, sup_b = polynomial_range_on_interval(coeffs, lo, hi)
        grid = np.linspace(lo, hi, 4001)
        vals = np.polyval(coeffs, grid)
        assert inf_b <= vals.min() + 1e-9
        assert sup_b >= vals.max() - 1e-9
        assert inf_b == pytest.approx(vals.min(), abs=1e-4)
        assert sup_b == pytest.approx(vals.max(), abs=1e-4)


def test_polynomial_range_empty_interval():
    with pytest.raises(ValueError):
        polynomial_range_on_interval(np.array([1.0, 0.0]), 1.0, 0.0)


# ---------------------------------------------------------------------------
# quartic family


def test_quartic_second_moment_frozen():
    # √2·Γ(3/4)/Γ(1/4), 30-digit evaluation
    assert quartic_second_moment() == pytest.approx(0.477988797486125, rel=1e-13)


def test_quartic_phi_lower_bound():
    # min φ = −√(2/C) at x⁴ = C/2
    for C in (1, 2, 4, 8):
        f = quartic_problem(C).factors[0]
        assert f.phi_lower_bound == pytest.approx(-math.sqrt(2.0 / C), rel=1e-14)
    assert quartic_problem(4).factors[0].phi_lower_bound == pytest.approx(
        -0.70710678118654752, rel=1e-14
    )


def test_quartic_interval_bound_agrees_with_polynomial_route():
    """Closed-form critical points vs the generic polynomial-range helper."""
    C = 4
    f = quartic_problem(C).factors[0]
    coeffs = np.array([2.0 / C**2, 0.0, 0.0, 0.0, -3.0 / C, 0.0, 0.0])
    rng = np.random.default_rng(5)
    for _ in range(200):
        lo = rng.uniform(-4.0, 3.5)
        hi = lo + rng.uniform(0.05, 5.0)
        got = f.phi_interval_bound(np.array([lo]), np.array([hi]))
        want = polynomial_range_on_interval(coeffs, lo, hi)
        assert got[0] == pytest.approx(want[0], rel=1e-12, abs=1e-12)
        assert got[1] == pytest.approx(want[1], rel=1e-12, abs=1e-12)


def test_quartic_sampler_against_quadrature_cdf():
    """Factor sampler (Gaussian rejection) vs an inverse CDF built in-test."""
    C = 4
    f = quartic_problem(C).factors[0]
    rng = np.random.default_rng(2027)
    draws = f.direct_sampler(rng, 100_000)[:, 0]

    grid = np.linspace(-4.0, 4.0, 40_001)
    pdf = np.exp(-(grid**4) / (2.0 * C))
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    p = stats.kstest(draws, lambda x: np.interp(x, grid, cdf)).pvalue
    assert p > 0.01, p


def test_quartic_target_sampler_moment():
    """C=1 factor IS the target; its second moment must hit the Γ ratio."""
    f = quartic_problem(1).factors[0]
    rng = np.random.default_rng(11)
    draws = f.direct_sampler(rng, 200_000)[:, 0]
    m2 = np.mean(draws**2)
    se = np.std(draws**2, ddof=1) / math.sqrt(draws.size)
    assert abs(m2 - quartic_second_moment()) < 4 * se


def test_quartic_phi_diff_bound_frozen_and_sound():
    """Builder value at (μ̂=0, λ̂=1) frozen from the closed-form minimum.

    min over x of φ(x) − φ^ou(x) with C=4: 0.125x⁶ − 1.25x² + 0.5 at x⁴=10/3.
    """
    f = quartic_problem(4).factors[0]
    bound = f.phi_diff_bound_builder(np.array([0.0]), np.array([1.0]))
    assert bound == pytest.approx(-1.0214515486254614, rel=1e-12)

    rng = np.random.default_rng(3)
    xs = np.linspace(-6, 6, 3001)[:, None]
    for _ in range(20):
        mu = rng.uniform(-2, 2)
        lam = rng.uniform(0.2, 3.0)
        b = f.phi_diff_bound_builder(np.array([mu]), np.array([lam]))
        assert b is not None
        phi_ou_vals = 0.5 * (lam**2 * (xs[:, 0] - mu) ** 2 - lam)
        diff = f.phi(xs) - phi_ou_vals
        assert np.all(diff >= b - 1e-9)
        assert diff.min() == pytest.approx(b, abs=1e-3)  # bound is tight, not just valid


def test_quartic_reference_cdf_shape():
    xs = np.linspace(-3, 3, 101)
    cdf = quartic_reference_cdf(xs)
    assert np.all(np.diff(cdf) >= 0)
    assert quartic_reference_cdf(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-6)
    # symmetric density
    assert np.allclose(cdf + quartic_reference_cdf(-xs), 1.0, atol=1e-6)


def test_quartic_problem_validation():
    with pytest.raises(ValueError):
        quartic_problem(0)


# ---------------------------------------------------------------------------
# Gaussian family


def test_gaussian_factor_moments():
    rng = np.random.default_rng(8)
    p = gaussian_problem(1, means=np.array([1.5]), variances=np.array([0.7]))
    draws = p.factors[0].direct_sampler(rng, 100_000)[:, 0]
    assert draws.mean() == pytest.approx(1.5, abs=4 * math.sqrt(0.7 / 1e5))
    assert draws.var(ddof=1) == pytest.approx(0.7, rel=0.03)


def test_gaussian_default_splits_standard_normal():
    """Default N(0, C)^C: product precision Σ1/C = 1, so the target is N(0,1)."""
    p = gaussian_problem(3)
    assert p.n_factors == 3
    total_precision = sum(1.0 / 3.0 for _ in p.factors)
    assert total_precision == pytest.approx(1.0)
    f = p.factors[0]
    assert f.phi_lower_bound == pytest.approx(-0.5 / 3.0)


def test_gaussian_own_surrogate_diff_is_zero():
    """With μ̂, λ̂ equal to the factor's own parameters, φ ≡ φ^ou exactly."""
    p = gaussian_problem(1, means=np.array([0.4]), variances=np.array([2.0]))
    f = p.factors[0]
    lam = 1.0 / 2.0
    assert f.phi_diff_lower_bound == 0.0
    xs = np.linspace(-5, 5, 101)[:, None]
    phi_ou_vals = 0.5 * (lam**2 * (xs[:, 0] - 0.4) ** 2 - lam)
    assert np.allclose(f.phi(xs), phi_ou_vals, atol=1e-12)
    assert f.phi_diff_bound_builder(np.array([0.4]), np.array([lam])) == pytest.approx(0.0)


def test_gaussian_diff_bound_refuses_sharper_surrogate():
    """λ̂ > λ makes φ − φ^ou unbounded below: builder must return None."""
    p = gaussian_problem(1, means=np.array([0.0]), variances=np.array([1.0]))
    f = p.factors[0]
    assert f.phi_diff_bound_builder(np.array([0.0]), np.array([1.5])) is None
    assert f.phi_diff_bound_builder(np.array([0.3]), np.array([0.8])) is not None


def test_gaussian_diff_bound_sound_on_grid():
    p = gaussian_problem(1, means=np.array([-0.5]), variances=np.array([0.5]))
    f = p.factors[0]
    mu, lam_hat = 0.7, 1.1  # λ = 2 > λ̂, bounded
    b = f.phi_diff_bound_builder(np.array([mu]), np.array([lam_hat]))
    xs = np.linspace(-8, 8, 4001)[:, None]
    diff = f.phi(xs) - 0.5 * (lam_hat**2 * (xs[:, 0] - mu) ** 2 - lam_hat)
    assert np.all(diff >= b - 1e-9)
    assert diff.min() == pytest.approx(b, abs=1e-3)


def test_gaussian_problem_shapes():
    with pytest.raises(ValueError):
        gaussian_problem(2, means=np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        gaussian_problem(1, variances=np.array([-1.0]))


# ---------------------------------------------------------------------------
# Beta-on-logit family


def test_beta_factor_is_fractional_power():
    """C factors of Beta(5,2)-on-logit each carry exponents (1, 0.4); their
    densities multiply back to the full target on the logit scale."""
    p = beta_logit_problem(5.0, 2.0, 5)
    xs = np.linspace(-3, 4, 31)[:, None]
    total = sum(f.log_density(xs) for f in p.factors)
    full = 5.0 * xs[:, 0] - 7.0 * np.logaddexp(0.0, xs[:, 0])
    assert np.allclose(total, full, atol=1e-10)


def test_beta_factor_log_density_via_sigmoid_route():
    """ā·x − t·log(1+eˣ) must equal ā·log σ + b̄·log(1−σ)."""
    f = beta_logit_problem(5.0, 2.0, 5).factors[0]
    xs = np.linspace(-5, 5, 41)
    sigma = 1.0 / (1.0 + np.exp(-xs))
    want = 1.0 * np.log(sigma) + 0.4 * np.log1p(-sigma)
    assert np.allclose(f.log_density(xs[:, None]), want, atol=1e-10)


def test_beta_factor_sampler_against_scipy():
    """Factor draws are logit(Beta(1, 0.4)); scipy's Beta CDF is the oracle."""
    f = beta_logit_problem(5.0, 2.0, 5).factors[0]
    rng = np.random.default_rng(13)
    draws = f.direct_sampler(rng, 100_000)[:, 0]
    sigma = 1.0 / (1.0 + np.exp(-draws))
    p = stats.kstest(sigma, lambda u: stats.beta.cdf(u, 1.0, 0.4)).pvalue
    assert p > 0.01, p


def test_beta_factor_refuses_ou_surrogate():
    f = beta_logit_problem(5.0, 2.0, 5).factors[0]
    assert f.phi_diff_bound_builder(np.array([0.0]), np.array([1.0])) is None
    assert f.surrogate_mean is None


def test_beta_reference_cdf_matches_scipy_route():
    xs = np.array([-2.0, -0.5, 0.0, 0.9162907318741551, 2.5])
    sigma = 1.0 / (1.0 + np.exp(-xs))
    assert np.allclose(beta_logit_reference_cdf(xs), stats.beta.cdf(sigma, 5.0, 2.0))
    # logit(5/7) is the Beta(5,2) mean on the unit scale
    assert beta_logit_reference_cdf(np.array([0.9162907318741551]))[0] == pytest.approx(
        stats.beta.cdf(5.0 / 7.0, 5, 2)
    )


def test_beta_problem_validation():
    with pytest.raises(ValueError):
        beta_logit_problem(5.0, 2.0, 0)
    with pytest.raises(ValueError):
        beta_logit_problem(-1.0, 2.0, 2)
