"""Tests for the consensus and ρ-only baselines.

The Gaussian cases have closed-form output laws, so they are checked against
exact moments and CDFs; the quartic case checks the *bias* the baselines are
supposed to exhibit, as orderings of KS distances to the exact target CDF.
"""

import math

import numpy as np
import pytest
from scipy import stats

from mcfusion.baselines import (
    WeightedCombiner,
    approx_ou_sample,
    approx_ou_with_diagnostics,
    cmc_sample,
    cmc_with_diagnostics,
)
from mcfusion.targets import (
    gaussian_problem,
    quartic_problem,
    quartic_reference_cdf,
    quartic_second_moment,
)

# ---------------------------------------------------------------------------
# WeightedCombiner


def test_combiner_pinned_and_batch():
    w = WeightedCombiner(np.array([[2.0], [3.0]]))
    assert w.pooled[0] == pytest.approx(0.2, rel=1e-15)
    # (2·1 + 3·2)/5 = 1.6
    assert w.combine(np.array([[1.0], [2.0]]))[0] == pytest.approx(1.6, rel=1e-15)
    batch = w.combine(np.array([[[1.0], [0.0]], [[2.0], [10.0]]]))
    assert batch.shape == (2, 1)
    assert batch[0, 0] == pytest.approx(1.6, rel=1e-15)
    assert batch[1, 0] == pytest.approx(6.0, rel=1e-15)


def test_combiner_validation():
    with pytest.raises(ValueError, match="positive"):
        WeightedCombiner(np.array([[1.0], [0.0]]))
    with pytest.raises(ValueError, match="positive"):
        WeightedCombiner(np.array([[1.0], [math.inf]]))
    with pytest.raises(ValueError, match="shape"):
        WeightedCombiner(np.ones(3))
    with pytest.raises(ValueError, match="axes"):
        WeightedCombiner(np.ones((2, 1))).combine(np.ones(2))


# ---------------------------------------------------------------------------
# cmc_sample


def test_cmc_equal_weights_is_the_mean():
    # replay the factor draws with an identically seeded generator: with
    # equal weights the consensus draw is the plain arithmetic mean
    problem = gaussian_problem(3)
    out = cmc_sample(problem, 1.0, np.random.default_rng(5))
    rng = np.random.default_rng(5)
    xs = np.stack(
        [
            np.asarray(f.direct_sampler(rng, 1), dtype=float).reshape(1)
            for f in problem.factors
        ]
    )
    assert out.shape == (1,)
    assert out[0] == pytest.approx(xs.mean(), rel=1e-14)


def test_cmc_exact_for_gaussian_factors():
    # weighted by the true precisions, consensus is exact for any means
    means = np.array([0.5, -1.0, 2.0])
    variances = np.array([2.0, 1.0, 4.0])
    lams = 1.0 / variances
    problem = gaussian_problem(3, horizon=1.0, means=means, variances=variances)
    n = 100_000
    out = cmc_sample(problem, lams, np.random.default_rng(8), size=n)[:, 0]
    pooled = 1.0 / lams.sum()
    target_mean = pooled * (lams * means).sum()
    assert abs(out.mean() - target_mean) < 4 * math.sqrt(pooled / n)
    assert abs(out.var(ddof=1) - pooled) < 4 * pooled * math.sqrt(2.0 / n)
    res = stats.kstest(
        out, lambda z: stats.norm.cdf(z, target_mean, math.sqrt(pooled))
    )
    assert res.pvalue > 1e-3


def test_cmc_is_visibly_biased_on_the_quartic():
    problem = quartic_problem(4, horizon=1.0)
    out = cmc_sample(problem, 1.0, np.random.default_rng(42), size=20_000)[:, 0]
    res = stats.kstest(out, quartic_reference_cdf)
    # rehearsed: statistic ≈ 0.117 — averaging shrinks the spread far below
    # the fused target's
    assert res.statistic > 0.05
    assert res.pvalue < 1e-6
    assert out.var(ddof=1) < 0.6 * quartic_second_moment()


def test_cmc_shapes_and_validation():
    problem = gaussian_problem(2)
    assert cmc_sample(problem, 1.0, np.random.default_rng(0)).shape == (1,)
    assert cmc_sample(problem, 1.0, np.random.default_rng(0), size=7).shape == (7, 1)
    with pytest.raises(ValueError, match="nonnegative"):
        cmc_sample(problem, 1.0, np.random.default_rng(0), size=-1)
    with pytest.raises(ValueError, match="positive"):
        cmc_sample(problem, -1.0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# approx_ou_sample


def test_approx_ou_infinite_horizon_law():
    # at T = ∞ the proposal ignores the factor draws entirely and the output
    # law is exactly N(μ̂, (ΣΛ̂)⁻¹)
    problem = gaussian_problem(
        3, horizon=1.0, means=0.7, variances=np.array([2.0, 3.0, 1.5])
    )
    lams = np.array([0.5, 1.0 / 3.0, 2.0 / 3.0])
    n = 20_000
    out = approx_ou_sample(
        problem, 0.7, lams, np.random.default_rng(19), horizon=math.inf, size=n
    )[:, 0]
    pooled = 1.0 / lams.sum()
    res = stats.kstest(out, lambda z: stats.norm.cdf(z, 0.7, math.sqrt(pooled)))
    assert res.pvalue > 1e-3
    assert abs(out.mean() - 0.7) < 4 * math.sqrt(pooled / n)
    assert abs(out.var(ddof=1) - pooled) < 4 * pooled * math.sqrt(2.0 / n)


def test_approx_ou_matches_cmc_at_infinite_horizon():
    # common-mean Gaussian factors with their exact stationary surrogates:
    # the two baselines draw from the same law
    problem = gaussian_problem(
        3, horizon=1.0, means=0.7, variances=np.array([2.0, 3.0, 1.5])
    )
    lams = np.array([0.5, 1.0 / 3.0, 2.0 / 3.0])
    rng = np.random.default_rng(23)
    a = approx_ou_sample(problem, 0.7, lams, rng, horizon=math.inf, size=20_000)
    b = cmc_sample(problem, lams, rng, size=20_000)
    assert stats.ks_2samp(a[:, 0], b[:, 0]).pvalue > 1e-3


def test_approx_ou_small_horizon_beats_cmc_on_the_quartic():
    problem = quartic_problem(4, horizon=1.0)
    lam_hat = 1.0 / (2.0 * quartic_second_moment())  # factor variance is 2×E[X²]
    rng = np.random.default_rng(42)
    ou = approx_ou_sample(problem, 0.0, lam_hat, rng, horizon=0.1, size=20_000)
    cm = cmc_sample(problem, 1.0, rng, size=20_000)
    ks_ou = stats.kstest(ou[:, 0], quartic_reference_cdf).statistic
    ks_cm = stats.kstest(cm[:, 0], quartic_reference_cdf).statistic
    # rehearsed: ≈ 0.037 vs ≈ 0.117
    assert ks_ou < ks_cm


def test_approx_ou_horizon_guard():
    problem = gaussian_problem(2, horizon=1.0, means=0.0, variances=2.0)
    with pytest.raises(ValueError, match="guard"):
        approx_ou_sample(problem, 0.0, 0.5, np.random.default_rng(0), horizon=1e-8)
    with pytest.raises(ValueError, match="guard"):
        approx_ou_sample(
            problem.with_horizon(1e-9), 0.0, 0.5, np.random.default_rng(0)
        )


def test_approx_ou_shapes():
    problem = gaussian_problem(2, horizon=1.0, means=0.0, variances=2.0)
    one = approx_ou_sample(problem, 0.0, 0.5, np.random.default_rng(0))
    assert one.shape == (1,)
    many = approx_ou_sample(problem, 0.0, 0.5, np.random.default_rng(0), size=9)
    assert many.shape == (9, 1)


# ---------------------------------------------------------------------------
# diagnostics wrappers


def test_cmc_with_diagnostics_counters():
    problem = gaussian_problem(2)
    samples, diag = cmc_with_diagnostics(problem, 1.0, 500, np.random.default_rng(2))
    assert samples.shape == (500, 1)
    assert diag.algorithm == "cmc"
    assert diag.stage1_attempts == diag.stage1_accepts == 500
    assert diag.stage2_attempts == diag.stage2_accepts == 500
    assert diag.poisson_points_total == 0
    assert diag.wall_clock_seconds > 0.0


def test_approx_ou_with_diagnostics_counters():
    problem = quartic_problem(4, horizon=1.0)
    lam_hat = 1.0 / (2.0 * quartic_second_moment())
    samples, diag = approx_ou_with_diagnostics(
        problem, 0.0, lam_hat, 2000, np.random.default_rng(1), horizon=0.1
    )
    assert samples.shape == (2000, 1)
    assert diag.algorithm == "approx_ou"
    assert diag.stage1_accepts == 2000
    assert diag.stage1_attempts >= 2000
    # rehearsed stage-1 rate ≈ 0.021 at this horizon: attempts dominate
    assert diag.stage1_attempts > 10 * diag.stage1_accepts
    assert diag.stage2_attempts == diag.stage2_accepts == 2000


def test_approx_ou_diagnostics_reproducible_counters():
    problem = gaussian_problem(2, horizon=1.0, means=0.0, variances=2.0)
    a = approx_ou_with_diagnostics(problem, 0.0, 0.5, 300, np.random.default_rng(7))
    b = approx_ou_with_diagnostics(problem, 0.0, 0.5, 300, np.random.default_rng(7))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].stage1_attempts == b[1].stage1_attempts
