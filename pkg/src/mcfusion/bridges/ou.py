"""Ornstein-Uhlenbeck moments and OU-bridge skeleton simulation.

The OU process here is dX = −Λ(X − μ̂)dt + dW with diagonal positive Λ.  Two
bridge samplers are provided: an exact Gaussian recursion (no layer
information, used for marginal tests), and a layered sampler that proposes a
layered Brownian bridge and accepts with probability exp(−∫(φ^ou − L)dt) via
Poisson thinning, where L is the infimum of φ^ou over the layer rectangle.
The accepted skeleton follows the OU bridge law exactly, and still carries
valid Brownian-bridge layer information: later reveals keep using the
Brownian conditionals given the layer, which is exactly what makes subsequent
thinning estimates unbiased for OU-bridge path integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .crossing import DEFAULT_REFINEMENT_CAP, SeriesSeparationError
from .skeleton import (
    BridgeEndpoints,
    BridgeSkeleton,
    reveal_bridge_points,
    sample_bessel_layers,
)

__all__ = [
    "ou_moments",
    "phi_ou",
    "phi_ou_interval",
    "sample_ou_bridge_gaussian",
    "sample_ou_bridge_skeleton",
    "ThinningTally",
]

_MAX_SKELETON_TRIES = 10**6


@dataclass
class ThinningTally:
    """Mutable counters threaded through skeleton construction for diagnostics."""

    poisson_points: int = 0
    proposal_attempts: int = 0

    def merge(self, other: "ThinningTally") -> "ThinningTally":
        return ThinningTally(
            self.poisson_points + other.poisson_points,
            self.proposal_attempts + other.proposal_attempts,
        )


def _as_diag(lam, d: int) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape == (1,) and d > 1:
        lam = np.full(d, lam[0])
    if lam.shape != (d,):
        raise ValueError(f"diagonal Λ must have shape ({d},), got {lam.shape}")
    if np.any(lam <= 0.0):
        raise ValueError("Λ entries must be positive")
    return lam


def ou_moments(
    lam, mu_hat, x0, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the OU transition started at x0 run for time t.

    m = μ̂ + e^{−Λt}(x0 − μ̂);  V = (I − e^{−2Λt}) / (2Λ), elementwise diagonal.
    t = ∞ is welcome and gives the stationary moments (μ̂, 1/(2Λ)) exactly.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    mu = np.atleast_1d(np.asarray(mu_hat, dtype=float))
    d = x0.shape[0]
    lam = _as_diag(lam, d)
    if mu.shape == (1,) and d > 1:
        mu = np.full(d, mu[0])
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if math.isinf(t):
        return mu.copy(), 1.0 / (2.0 * lam)
    decay = np.exp(-lam * t)
    mean = mu + decay * (x0 - mu)
    var = -np.expm1(-2.0 * lam * t) / (2.0 * lam)
    return mean, var


def phi_ou(x: np.ndarray, mu_hat: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """φ^ou(x) = ½(‖Λ(x − μ̂)‖² − tr Λ) for diagonal Λ, batched over leading axes."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (np.sum((lam * (x - mu_hat)) ** 2, axis=-1) - np.sum(lam))


def phi_ou_interval(
    lo: np.ndarray, hi: np.ndarray, mu_hat: np.ndarray, lam: np.ndarray
) -> tuple[float, float]:
    """(inf, sup) of φ^ou over the axis-aligned box [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    near = np.clip(mu_hat, lo, hi)
    far = np.where(np.abs(lo - mu_hat) > np.abs(hi - mu_hat), lo, hi)
    tr = np.sum(lam)
    inf = 0.5 * (float(np.sum((lam * (near - mu_hat)) ** 2)) - tr)
    sup = 0.5 * (float(np.sum((lam * (far - mu_hat)) ** 2)) - tr)
    return inf, sup


def sample_ou_bridge_gaussian(
    e: BridgeEndpoints,
    lam,
    mu_hat,
    times: Sequence[float],
    rng: np.random.Generator,
) -> BridgeSkeleton:
    """Exact OU-bridge values at the given times via the Gaussian recursion.

    Sequential conditioning: given the last revealed value and the terminal
    point, each X(t) | X(t_prev)=a, X(T)=b is Gaussian with

        mean = m₁ + α(T−t)·v(t−t_prev)/v(T−t_prev) · (b − m_tot)
        var  = v(t−t_prev) − α(T−t)²·v(t−t_prev)²/v(T−t_prev)

    where α(h) = e^{−Λh}, v(h) = (1−e^{−2Λh})/(2Λ), m₁/m_tot the one-step and
    whole-gap transition means.  No layer information is produced.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.size == 0:
        return BridgeSkeleton(e, np.empty(0), np.empty((0, e.dim)), law_tag="ou")
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("times must be strictly increasing without duplicates")
    if t[0] <= 0.0 or t[-1] >= e.T:
        raise ValueError(f"times must lie strictly inside (0, {e.T})")
    d = e.dim
    lam_v = _as_diag(lam, d)
    mu = np.atleast_1d(np.asarray(mu_hat, dtype=float))
    if mu.shape == (1,) and d > 1:
        mu = np.full(d, mu[0])

    def v_of(h: float) -> np.ndarray:
        return -np.expm1(-2.0 * lam_v * h) / (2.0 * lam_v)

    values = np.empty((t.size, d))
    t_prev = 0.0
    v_prev = e.x0
    for i, ti in enumerate(t):
        h1 = ti - t_prev
        h2 = e.T - ti
        a1 = np.exp(-lam_v * h1)
        a2 = np.exp(-lam_v * h2)
        v1 = v_of(h1)
        vtot = v_of(e.T - t_prev)
        m1 = mu + a1 * (v_prev - mu)
        m_tot = mu + a1 * a2 * (v_prev - mu)
        gain = a2 * v1 / vtot
        mean = m1 + gain * (e.xT - m_tot)
        var = v1 - a2**2 * v1**2 / vtot
        values[i] = mean + rng.normal(0.0, 1.0, d) * np.sqrt(np.maximum(var, 0.0))
        t_prev = ti
        v_prev = values[i]
    return BridgeSkeleton(e, t, values, law_tag="ou")


def sample_ou_bridge_skeleton(
    e: BridgeEndpoints,
    lam,
    mu_hat,
    times: Sequence[float],
    rng: np.random.Generator,
    *,
    width_unit: Optional[float] = None,
    refinement_cap: int = DEFAULT_REFINEMENT_CAP,
    tally: Optional[ThinningTally] = None,
) -> BridgeSkeleton:
    """Exact layered OU-bridge skeleton, revealed at least at ``times``.

    Rejection from layered Brownian bridges: draw per-coordinate layers, bound
    r(x) = φ^ou(x) − inf_rect φ^ou over the layer rectangle by R, thin a
    Poisson(R·T) point set against r/R evaluated on exactly-revealed bridge
    values, and accept when no mark lands under the curve.  Failures restart
    with fresh layers.  The requested times are revealed after acceptance
    (Brownian conditionals given the layer and the accepted points), which
    leaves the joint law of all returned values exactly the OU bridge's.
    """
    t_req = np.atleast_1d(np.asarray(times, dtype=float))
    if t_req.size:
        if np.any(np.diff(t_req) <= 0.0):
            raise ValueError("times must be strictly increasing without duplicates")
        if t_req[0] <= 0.0 or t_req[-1] >= e.T:
            raise ValueError(f"times must lie strictly inside (0, {e.T})")
    d = e.dim
    lam_v = _as_diag(lam, d)
    mu = np.atleast_1d(np.asarray(mu_hat, dtype=float))
    if mu.shape == (1,) and d > 1:
        mu = np.full(d, mu[0])

    for _ in range(_MAX_SKELETON_TRIES):
        if tally is not None:
            tally.proposal_attempts += 1
        layers = sample_bessel_layers(
            e, rng, width_unit=width_unit, refinement_cap=refinement_cap
        )
        rect_lo = np.array([layer.lower for layer in layers])
        rect_hi = np.array([layer.upper for layer in layers])
        inf_ou, sup_ou = phi_ou_interval(rect_lo, rect_hi, mu, lam_v)
        rate = sup_ou - inf_ou
        base = BridgeSkeleton(e, np.empty(0), np.empty((0, d)), layers=layers)
        kappa = int(rng.poisson(rate * e.T)) if rate > 0.0 else 0
        if tally is not None:
            tally.poisson_points += kappa
        if kappa == 0:
            skel = base
        else:
            pois = np.sort(rng.uniform(0.0, e.T, kappa))
            skel = reveal_bridge_points(base, pois, rng, refinement_cap=refinement_cap)
            marks = rng.random(kappa)
            r_vals = phi_ou(skel.values, mu, lam_v) - inf_ou
            if np.any(marks * rate < r_vals):
                continue  # a mark fell under the thinning curve: reject, fresh layers
        skel = BridgeSkeleton(e, skel.times, skel.values, layers=layers, law_tag="ou")
        if t_req.size:
            skel = reveal_bridge_points(skel, t_req, rng, refinement_cap=refinement_cap)
        return skel
    raise SeriesSeparationError(
        f"OU-bridge skeleton not accepted within {_MAX_SKELETON_TRIES} attempts"
    )
