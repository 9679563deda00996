"""Built-in fusion targets: quartic, Gaussian, and Beta-on-logit-scale families.

Each builder returns a FusionProblem whose factors carry exact φ algebra:
closed-form gradients/Laplacians, the global lower bound Φ, and tight interval
bounds for thinning-rate construction.  Derivations are spelled out next to
each formula so they can be checked by hand.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .model import Array, FusionProblem, SubPosterior

__all__ = [
    "quartic_problem",
    "gaussian_problem",
    "beta_logit_problem",
    "quartic_second_moment",
    "quartic_reference_cdf",
    "beta_logit_reference_cdf",
    "polynomial_range_on_interval",
]


# ---------------------------------------------------------------------------
# small polynomial helper


def polynomial_range_on_interval(coeffs: np.ndarray, lo: float, hi: float) -> tuple[float, float]:
    """(inf, sup) of a polynomial over [lo, hi], exactly via critical points.

    ``coeffs`` are highest-degree-first (np.polyval convention).  Candidates
    are the endpoints plus real roots of the derivative inside the interval.
    """
    if hi < lo:
        raise ValueError("interval is empty")
    candidates = [lo, hi]
    deriv = np.polyder(np.asarray(coeffs, dtype=float))
    if deriv.size > 1 or (deriv.size == 1 and deriv[0] != 0.0):
        if deriv.size > 1:
            roots = np.roots(deriv)
            for r in roots:
                if abs(r.imag) < 1e-12 and lo < r.real < hi:
                    candidates.append(float(r.real))
    values = np.polyval(np.asarray(coeffs, dtype=float), np.asarray(candidates))
    return float(np.min(values)), float(np.max(values))


def _polynomial_global_min(coeffs: np.ndarray) -> float:
    """Global minimum of a polynomial with positive even leading term."""
    coeffs = np.asarray(coeffs, dtype=float)
    deriv = np.polyder(coeffs)
    roots = np.roots(deriv)
    real = [float(r.real) for r in roots if abs(r.imag) < 1e-10]
    if not real:
        raise ValueError("polynomial has no real critical points")
    return float(np.min(np.polyval(coeffs, np.asarray(real))))


# ---------------------------------------------------------------------------
# quartic target  f(x) ∝ exp(−x⁴/2),  factors exp(−x⁴/(2C))


def quartic_second_moment() -> float:
    """E[X²] under f ∝ exp(−x⁴/2): √2·Γ(3/4)/Γ(1/4) ≈ 0.47799."""
    return math.sqrt(2.0) * special.gamma(0.75) / special.gamma(0.25)


def _quartic_phi_coeffs(C: int) -> np.ndarray:
    # log f_c = −x⁴/(2C): ∇ = −2x³/C, Δ = −6x²/C
    # φ(x) = ½(4x⁶/C² − 6x²/C)
    return np.array([2.0 / C**2, 0.0, 0.0, 0.0, -3.0 / C, 0.0, 0.0])


def _make_quartic_factor(C: int) -> SubPosterior:
    inv2c = 1.0 / (2.0 * C)
    phi_coeffs = _quartic_phi_coeffs(C)
    # Global min of φ: at x⁴ = C/2, φ = −√(2/C).
    phi_min = -math.sqrt(2.0 / C)
    # Rejection sampler from N(0, s²) with s² = √(C/2): the acceptance ratio
    # exp(−x⁴/(2C) + x²/(2s²)) completes the square to exp(−(x²−√(C/2))²/(2C))·e^{1/4}.
    s = (C / 2.0) ** 0.25
    shift = math.sqrt(C / 2.0)

    def log_density(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -(x[..., 0] ** 4) * inv2c

    def grad(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -4.0 * x**3 * inv2c

    def laplacian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -12.0 * x[..., 0] ** 2 * inv2c

    def sampler(rng: np.random.Generator, size: int) -> Array:
        out = np.empty(size)
        filled = 0
        while filled < size:
            m = max(size - filled, 256)
            z = rng.normal(0.0, s, m)
            logacc = -((z**2 - shift) ** 2) / (2.0 * C)
            keep = z[np.log(rng.random(m)) <= logacc]
            take = min(keep.size, size - filled)
            out[filled : filled + take] = keep[:take]
            filled += take
        return out[:, None]

    def _phi_scalar(x: float) -> float:
        return (2.0 / C**2) * x**6 - (3.0 / C) * x**2

    crit = (C / 2.0) ** 0.25  # φ′ roots are 0 and ±(C/2)^{1/4}, fixed for the factor

    def interval_bound(lo: Array, hi: Array) -> tuple[float, float]:
        lo_f, hi_f = float(lo[0]), float(hi[0])
        vals = [_phi_scalar(lo_f), _phi_scalar(hi_f)]
        if lo_f < 0.0 < hi_f:
            vals.append(0.0)
        if lo_f < crit < hi_f or lo_f < -crit < hi_f:
            vals.append(phi_min)
        return min(vals), max(vals)

    def phi_diff_bound(mu_hat: Array, lam_hat: Array) -> Optional[float]:
        # φ − φ^ou is a degree-6 polynomial with positive leading term: exact min.
        # φ^ou(x) = ½λ̂²(x−μ̂)² − λ̂/2 = ½λ̂²x² − λ̂²μ̂x + (½λ̂²μ̂² − λ̂/2)
        lam = float(lam_hat[0])
        mu = float(mu_hat[0])
        ou = np.zeros(7)
        ou[4] = 0.5 * lam**2
        ou[5] = -(lam**2) * mu
        ou[6] = 0.5 * lam**2 * mu**2 - 0.5 * lam
        return _polynomial_global_min(phi_coeffs - ou)

    return SubPosterior(
        log_density=log_density,
        grad_log_density=grad,
        laplacian_log_density=laplacian,
        direct_sampler=sampler,
        phi_lower_bound=phi_min,
        phi_interval_bound=interval_bound,
        dim=1,
        phi_diff_bound_builder=phi_diff_bound,
        name=f"quartic/{C}",
    )


def quartic_problem(C: int = 4, horizon: float = 1.0) -> FusionProblem:
    """f(x) ∝ exp(−x⁴/2) split into C equal factors exp(−x⁴/(2C))."""
    if C < 1:
        raise ValueError("C must be >= 1")
    factor = _make_quartic_factor(C)
    return FusionProblem(factors=tuple(factor for _ in range(C)), horizon=horizon)


_QUARTIC_CDF_GRID: Optional[tuple[np.ndarray, np.ndarray]] = None


def quartic_reference_cdf(x: Array) -> Array:
    """CDF of f ∝ exp(−x⁴/2) by dense trapezoid quadrature (cached grid)."""
    global _QUARTIC_CDF_GRID
    if _QUARTIC_CDF_GRID is None:
        g = np.linspace(-4.5, 4.5, 200_001)
        pdf = np.exp(-(g**4) / 2.0)
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(g))])
        cdf /= cdf[-1]
        _QUARTIC_CDF_GRID = (g, cdf)
    g, cdf = _QUARTIC_CDF_GRID
    return np.interp(np.asarray(x, dtype=float), g, cdf, left=0.0, right=1.0)


# ---------------------------------------------------------------------------
# Gaussian factors  f_c = N(μ_c, σ_c²)  (diagonal, any dimension)


def _make_gaussian_factor(mean: np.ndarray, var: np.ndarray) -> SubPosterior:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if np.any(var <= 0):
        raise ValueError("variances must be positive")
    d = mean.shape[0]
    lam = 1.0 / var  # precision; φ(x) = ½(Σλ²(x−μ)² − Σλ)
    sd = np.sqrt(var)

    def log_density(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -0.5 * np.sum(lam * (x - mean) ** 2, axis=-1)

    def grad(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return -lam * (x - mean)

    def laplacian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-np.sum(lam), x.shape[:-1]).copy()

    def sampler(rng: np.random.Generator, size: int) -> Array:
        return rng.normal(mean, sd, size=(size, d))

    def interval_bound(lo: Array, hi: Array) -> tuple[float, float]:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        # per coordinate, ½λ²(x−μ)² is monotone in |x−μ|
        nearest = np.clip(mean, lo, hi)
        farthest = np.where(np.abs(lo - mean) > np.abs(hi - mean), lo, hi)
        inf = 0.5 * float(np.sum(lam**2 * (nearest - mean) ** 2) - np.sum(lam))
        sup = 0.5 * float(np.sum(lam**2 * (farthest - mean) ** 2) - np.sum(lam))
        return inf, sup

    def phi_diff_bound(mu_hat: Array, lam_hat: Array) -> Optional[float]:
        # φ − φ^ou = ½Σ[λ²(x−μ)² − λ̂²(x−μ̂)²] − ½Σ(λ − λ̂): per coordinate a
        # quadratic; bounded below iff λ ≥ λ̂ in every coordinate (strictly
        # convex difference), with equality making it affine-constant.
        mu_hat = np.atleast_1d(np.asarray(mu_hat, dtype=float))
        lam_hat = np.atleast_1d(np.asarray(lam_hat, dtype=float))
        total = 0.0
        for k in range(d):
            a = lam[k] ** 2 - lam_hat[k] ** 2
            if a < 0:
                return None
            const = -0.5 * (lam[k] - lam_hat[k])
            if a == 0.0:
                if abs(mean[k] - mu_hat[k]) > 0:
                    return None  # linear term with no curvature: unbounded below
                total += const
                continue
            # min over x of ½[a(x−b)²-ish]: expand ½[λ²(x−μ)² − λ̂²(x−μ̂)²]
            # = ½a x² − (λ²μ − λ̂²μ̂)x + ...: vertex x* = (λ²μ − λ̂²μ̂)/a
            xs = (lam[k] ** 2 * mean[k] - lam_hat[k] ** 2 * mu_hat[k]) / a
            total += (
                0.5 * (lam[k] ** 2 * (xs - mean[k]) ** 2 - lam_hat[k] ** 2 * (xs - mu_hat[k]) ** 2)
                + const
            )
        return float(total)

    return SubPosterior(
        log_density=log_density,
        grad_log_density=grad,
        laplacian_log_density=laplacian,
        direct_sampler=sampler,
        phi_lower_bound=-0.5 * float(np.sum(lam)),
        phi_interval_bound=interval_bound,
        dim=d,
        surrogate_mean=mean,
        surrogate_precision=lam,
        phi_diff_lower_bound=0.0,  # for the factor's own (μ, λ) surrogate
        phi_diff_bound_builder=phi_diff_bound,
        name=f"gaussian(m={mean.tolist()}, v={var.tolist()})",
    )


def gaussian_problem(
    C: int = 3,
    horizon: float = 1.0,
    means: Optional[np.ndarray] = None,
    variances: Optional[np.ndarray] = None,
) -> FusionProblem:
    """Product of C Gaussian factors; default N(0, C)^C so the product is N(0, 1).

    ``means``/``variances`` may be scalars, length-C vectors (one per factor,
    scalar coordinates), or (C, d) arrays for diagonal d-dimensional factors.
    """
    if C < 1:
        raise ValueError("C must be >= 1")
    means_arr = np.zeros(C) if means is None else np.asarray(means, dtype=float)
    var_arr = np.full(C, float(C)) if variances is None else np.asarray(variances, dtype=float)
    if means_arr.ndim == 0:
        means_arr = np.full(C, float(means_arr))
    if var_arr.ndim == 0:
        var_arr = np.full(C, float(var_arr))
    if means_arr.shape[0] != C or var_arr.shape[0] != C:
        raise ValueError("means/variances must have one entry per factor")
    factors = tuple(_make_gaussian_factor(means_arr[c], var_arr[c]) for c in range(C))
    return FusionProblem(factors=factors, horizon=horizon)


# ---------------------------------------------------------------------------
# Beta target on the logit scale: u ~ Beta(a, b), x = log(u/(1−u))
#
# The transformed target is σ(x)^a (1−σ(x))^b; each of C factors is
# σ(x)^{a/C}(1−σ(x))^{b/C} and is itself the logit transform of Beta(a/C, b/C)
# (change of variables adds +1 to each exponent at the density level, which is
# exactly the Jacobian u(1−u)).


def _make_beta_logit_factor(a_bar: float, b_bar: float) -> SubPosterior:
    if a_bar <= 0 or b_bar <= 0:
        raise ValueError("factor exponents must be positive")
    t = a_bar + b_bar

    # A(x) = ā·x − t·log(1+eˣ);  A′ = ā − t·σ;  A″ = −t·σ(1−σ)
    # φ(σ) = ½[(ā − t·σ)² − t·σ(1−σ)] — a convex quadratic in σ with vertex
    # σ* = (2ā + 1)/(2(t + 1)).
    s_star = (2.0 * a_bar + 1.0) / (2.0 * (t + 1.0))

    def phi_of_sigma(s: np.ndarray) -> np.ndarray:
        return 0.5 * ((a_bar - t * s) ** 2 - t * s * (1.0 - s))

    if 0.0 < s_star < 1.0:
        phi_min = float(phi_of_sigma(np.asarray(s_star)))
    else:
        phi_min = float(min(phi_of_sigma(np.asarray(0.0)), phi_of_sigma(np.asarray(1.0))))

    def _sigma(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def log_density(x: Array) -> Array:
        x = np.asarray(x, dtype=float)[..., 0]
        return a_bar * x - t * np.logaddexp(0.0, x)  # log(1+eˣ), stable on both tails

    def grad(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return a_bar - t * _sigma(x)

    def laplacian(x: Array) -> Array:
        x = np.asarray(x, dtype=float)[..., 0]
        s = _sigma(x)
        return -t * s * (1.0 - s)

    def sampler(rng: np.random.Generator, size: int) -> Array:
        u = rng.beta(a_bar, b_bar, size)
        # beta draws can hit exactly 0.0/1.0 in float; resample those
        bad = (u <= 0.0) | (u >= 1.0)
        while np.any(bad):
            u[bad] = rng.beta(a_bar, b_bar, int(bad.sum()))
            bad = (u <= 0.0) | (u >= 1.0)
        return (np.log(u) - np.log1p(-u))[:, None]

    def interval_bound(lo: Array, hi: Array) -> tuple[float, float]:
        ends = _sigma(np.asarray([float(lo[0]), float(hi[0])]))
        end_vals = phi_of_sigma(ends)
        sup = float(np.max(end_vals))
        if ends[0] <= s_star <= ends[1]:
            inf = phi_min
        else:
            inf = float(np.min(end_vals))
        return inf, sup

    # φ is bounded while any Gaussian surrogate's φ^ou grows quadratically, so
    # φ − φ^ou has no finite lower bound: the OU route must refuse this factor.
    return SubPosterior(
        log_density=log_density,
        grad_log_density=grad,
        laplacian_log_density=laplacian,
        direct_sampler=sampler,
        phi_lower_bound=phi_min,
        phi_interval_bound=interval_bound,
        dim=1,
        phi_diff_bound_builder=lambda mu_hat, lam_hat: None,
        name=f"beta-logit({a_bar:g},{b_bar:g})",
    )


def beta_logit_problem(
    a: float = 5.0, b: float = 2.0, C: int = 5, horizon: float = 1.0
) -> FusionProblem:
    """Beta(a, b) on the logit scale, split into C equal-power factors."""
    if C < 1:
        raise ValueError("C must be >= 1")
    factor = _make_beta_logit_factor(a / C, b / C)
    return FusionProblem(factors=tuple(factor for _ in range(C)), horizon=horizon)


def beta_logit_reference_cdf(x: Array, a: float = 5.0, b: float = 2.0) -> Array:
    """Exact CDF of logit(Beta(a, b)): F(x) = I_{σ(x)}(a, b)."""
    x = np.asarray(x, dtype=float)
    sigma = np.empty_like(x)
    pos = x >= 0
    sigma[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sigma[~pos] = ex / (1.0 + ex)
    return stats.beta.cdf(sigma, a, b)
