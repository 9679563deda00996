"""Tests for OU moments, φ^ou geometry, and the two OU-bridge samplers.

Distributional checks use fixed seeds.  The oracles are deliberately
independent of the production code paths: Euler–Maruyama integration for the
transition moments, and a two-step exact-transition + endpoint-window
construction for the bridge marginal.
"""

import math

import numpy as np
import pytest
from scipy import stats

from mcfusion.bridges.ou import (
    ThinningTally,
    ou_moments,
    phi_ou,
    phi_ou_interval,
    sample_ou_bridge_gaussian,
    sample_ou_bridge_skeleton,
)
from mcfusion.bridges.skeleton import (
    BridgeEndpoints,
    brownian_bridge_marginal,
    reveal_bridge_points,
)


def endpoints_1d(x0, xT, T):
    return BridgeEndpoints(np.array([x0]), np.array([xT]), T)


# ---------------------------------------------------------------------------
# transition moments


def test_ou_moments_closed_form_values():
    mean, var = ou_moments(1.0, 0.0, np.array([1.0]), 1.0)
    assert mean[0] == pytest.approx(0.36787944117144233, rel=1e-14)  # e^{-1}
    assert var[0] == pytest.approx(0.43233235838169365, rel=1e-14)  # (1-e^{-2})/2


def test_ou_moments_infinite_time_is_stationary():
    mean, var = ou_moments(np.array([0.5, 2.0]), 1.5, np.array([4.0, -3.0]), math.inf)
    assert np.allclose(mean, [1.5, 1.5])
    assert np.allclose(var, [1.0, 0.25])  # 1/(2Λ)


def test_ou_moments_against_euler_maruyama():
    """dX = −λ(X−μ̂)dt + dW integrated directly; no transition formulas."""
    rng = np.random.default_rng(314)
    lam, mu, x0, T = 1.3, 0.5, 2.0, 1.0
    n, steps = 40_000, 2000
    dt = T / steps
    x = np.full(n, x0)
    sq = math.sqrt(dt)
    for _ in range(steps):
        x += -lam * (x - mu) * dt + sq * rng.standard_normal(n)
    mean, var = ou_moments(lam, mu, np.array([x0]), T)
    assert abs(x.mean() - mean[0]) < 4 * x.std(ddof=1) / math.sqrt(n) + 2 * lam * dt
    v_se = x.var(ddof=1) * math.sqrt(2.0 / n)
    assert abs(x.var(ddof=1) - var[0]) < 4 * v_se + 2 * lam * dt


def test_ou_moments_validation():
    with pytest.raises(ValueError):
        ou_moments(-1.0, 0.0, np.array([0.0]), 1.0)
    with pytest.raises(ValueError):
        ou_moments(1.0, 0.0, np.array([0.0]), -0.5)
    with pytest.raises(ValueError):
        ou_moments(np.array([1.0, 2.0, 3.0]), 0.0, np.array([0.0, 0.0]), 1.0)


# ---------------------------------------------------------------------------
# φ^ou and its box range


def test_phi_ou_scalar_value():
    # ½(λ²(x−μ)² − λ) at x=0.5, μ=0, λ=2: ½(4·0.25 − 2) = −0.5
    got = phi_ou(np.array([0.5]), np.array([0.0]), np.array([2.0]))
    assert got == pytest.approx(-0.5, rel=1e-14)


def test_phi_ou_sums_over_coordinates():
    x = np.array([0.5, -1.0])
    mu = np.array([0.0, 1.0])
    lam = np.array([2.0, 0.5])
    per = [0.5 * (lam[i] ** 2 * (x[i] - mu[i]) ** 2 - lam[i]) for i in range(2)]
    assert phi_ou(x, mu, lam) == pytest.approx(sum(per), rel=1e-14)


def test_phi_ou_batched():
    xs = np.linspace(-2, 2, 11)[:, None]
    out = phi_ou(xs, np.array([0.0]), np.array([1.0]))
    assert out.shape == (11,)
    assert np.allclose(out, 0.5 * (xs[:, 0] ** 2 - 1.0))


@pytest.mark.parametrize(
    "lo, hi, mu",
    [
        (np.array([-1.0]), np.array([1.0]), np.array([0.0])),  # μ̂ inside
        (np.array([0.5]), np.array([2.0]), np.array([0.0])),  # μ̂ left of box
        (np.array([-3.0]), np.array([-1.0]), np.array([0.5])),  # μ̂ right of box
        (np.array([-1.0, 0.0]), np.array([0.5, 2.0]), np.array([0.2, -0.3])),
    ],
)
def test_phi_ou_interval_matches_grid_search(lo, hi, mu):
    lam = np.full(lo.shape, 1.7)
    inf_b, sup_b = phi_ou_interval(lo, hi, mu, lam)
    grids = np.meshgrid(*[np.linspace(lo[i], hi[i], 201) for i in range(lo.size)])
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    vals = phi_ou(pts, mu, lam)
    assert inf_b <= vals.min() + 1e-12
    assert sup_b >= vals.max() - 1e-12
    assert inf_b == pytest.approx(vals.min(), abs=1e-3)
    assert sup_b == pytest.approx(vals.max(), abs=1e-3)


# ---------------------------------------------------------------------------
# Gaussian-recursion bridge sampler


def _ou_step(rng, x, lam, mu, h, n):
    """One exact OU transition written out literally."""
    decay = math.exp(-lam * h)
    v = (1.0 - math.exp(-2.0 * lam * h)) / (2.0 * lam)
    return mu + decay * (x - mu) + math.sqrt(v) * rng.standard_normal(n)


def test_ou_bridge_gaussian_marginal_vs_endpoint_window():
    """Bridge value at t vs forward paths filtered on the endpoint.

    Simulate (X_t, X_T) pairs with two exact transitions, keep paths with
    X_T within a narrow window of the bridge endpoint, and compare the
    surviving X_t sample to the bridge sampler's output.
    """
    rng = np.random.default_rng(2718)
    lam, mu = 1.2, 0.3
    x0, xT, T, t = 0.8, -0.4, 1.0, 0.4
    n_fwd = 2_000_000
    x_t = _ou_step(rng, np.full(n_fwd, x0), lam, mu, t, n_fwd)
    x_T = _ou_step(rng, x_t, lam, mu, T - t, n_fwd)
    keep = np.abs(x_T - xT) < 0.02
    window_sample = x_t[keep]
    assert window_sample.size > 5_000

    e = endpoints_1d(x0, xT, T)
    n = 20_000
    bridge_sample = np.empty(n)
    for k in range(n):
        bridge_sample[k] = sample_ou_bridge_gaussian(e, lam, mu, [t], rng).values[0, 0]
    p = stats.ks_2samp(window_sample, bridge_sample).pvalue
    assert p > 1e-3, p


def test_ou_bridge_gaussian_sequential_consistency():
    """Joint reveal [t1, t2] must equal marginal reveal of t2 alone in law."""
    rng = np.random.default_rng(5)
    e = endpoints_1d(0.0, 1.0, 1.5)
    lam, mu = 0.9, -0.2
    n = 30_000
    joint = np.empty(n)
    single = np.empty(n)
    for k in range(n):
        joint[k] = sample_ou_bridge_gaussian(e, lam, mu, [0.4, 1.0], rng).values[1, 0]
        single[k] = sample_ou_bridge_gaussian(e, lam, mu, [1.0], rng).values[0, 0]
    assert stats.ks_2samp(joint, single).pvalue > 1e-3


def test_ou_bridge_gaussian_validation_and_tag():
    rng = np.random.default_rng(0)
    e = endpoints_1d(0.0, 0.0, 1.0)
    sk = sample_ou_bridge_gaussian(e, 1.0, 0.0, [0.5], rng)
    assert sk.law_tag == "ou"
    with pytest.raises(ValueError):
        sample_ou_bridge_gaussian(e, 1.0, 0.0, [0.5, 0.5], rng)
    with pytest.raises(ValueError):
        sample_ou_bridge_gaussian(e, 1.0, 0.0, [1.5], rng)


# ---------------------------------------------------------------------------
# layered (thinning) bridge sampler


def test_ou_skeleton_matches_gaussian_recursion():
    """Same marginal law from the thinning sampler and the exact recursion."""
    rng = np.random.default_rng(99)
    lam, mu = 1.3, 0.4
    e = endpoints_1d(0.2, -0.5, 1.1)
    t_q = 0.55
    n = 20_000
    a = np.empty(n)
    b = np.empty(n)
    for k in range(n):
        sk = sample_ou_bridge_skeleton(e, lam, np.array([mu]), (t_q,), rng)
        a[k] = sk.values[np.searchsorted(sk.times, t_q), 0]
        b[k] = sample_ou_bridge_gaussian(e, lam, np.array([mu]), [t_q], rng).values[0, 0]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_ou_skeleton_tiny_rate_recovers_brownian_bridge():
    """Λ → 0 kills the drift, so the skeleton must follow the plain bridge law."""
    rng = np.random.default_rng(123)
    e = endpoints_1d(0.3, -0.6, 0.9)
    n = 20_000
    vals = np.empty(n)
    for k in range(n):
        sk = sample_ou_bridge_skeleton(e, 1e-8, np.array([0.0]), (0.45,), rng)
        vals[k] = sk.values[np.searchsorted(sk.times, 0.45), 0]
    mean, var = brownian_bridge_marginal(e, 0.45)
    p = stats.kstest(vals, "norm", args=(mean[0], math.sqrt(var))).pvalue
    assert p > 1e-3


def test_ou_skeleton_structure_and_tally():
    rng = np.random.default_rng(6)
    e = endpoints_1d(0.0, 0.4, 1.0)
    tally = ThinningTally()
    sk = sample_ou_bridge_skeleton(e, 2.0, np.array([0.0]), (0.25, 0.75), rng, tally=tally)
    assert sk.law_tag == "ou"
    assert sk.layers is not None
    for t_q in (0.25, 0.75):
        assert np.any(np.isclose(sk.times, t_q))
    layer = sk.layers[0]
    assert np.all(sk.values[:, 0] > layer.lower)
    assert np.all(sk.values[:, 0] < layer.upper)
    assert tally.proposal_attempts >= 1


def test_ou_skeleton_later_reveals_keep_ou_law():
    """Reveal after construction: still the OU bridge marginal, via the layer."""
    rng = np.random.default_rng(7331)
    lam, mu = 1.1, -0.3
    e = endpoints_1d(-0.2, 0.5, 1.3)
    t_q = 0.7
    n = 20_000
    a = np.empty(n)
    b = np.empty(n)
    for k in range(n):
        sk = sample_ou_bridge_skeleton(e, lam, np.array([mu]), (), rng)
        sk = reveal_bridge_points(sk, [t_q], rng)
        a[k] = sk.values[np.searchsorted(sk.times, t_q), 0]
        b[k] = sample_ou_bridge_gaussian(e, lam, np.array([mu]), [t_q], rng).values[0, 0]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_thinning_tally_merge():
    t1 = ThinningTally(3, 2)
    t2 = ThinningTally(5, 1)
    m = t1.merge(t2)
    assert (m.poisson_points, m.proposal_attempts) == (8, 3)
