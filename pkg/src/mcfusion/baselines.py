"""Approximate fusion baselines: consensus averaging and ρ-only sampling.

Both baselines consume the same factor samplers as the exact algorithms but
skip the path-space gate, so their output is biased except in special cases
(Gaussian factors with exact precisions, or the infinite-horizon limit where
the two baselines coincide).  They exist for bias and cost comparisons.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .diagnostics import RunDiagnostics
from .fusion_ou import _HORIZON_GUARD, _as_lam_matrix, _as_mu
from .model import FusionProblem

__all__ = [
    "WeightedCombiner",
    "cmc_sample",
    "approx_ou_sample",
    "cmc_with_diagnostics",
    "approx_ou_with_diagnostics",
]


@dataclass(frozen=True)
class WeightedCombiner:
    """Precision-weighted averaging of one draw per factor.

    ``weights`` holds one diagonal precision per factor, shape (C, d); the
    combined value is pooled⁻¹ Σ_c Λ̂_c x_c with pooled = Σ_c Λ̂_c.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("weights must have shape (n_factors, dim)")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "weights", w)

    @property
    def pooled(self) -> np.ndarray:
        """Inverse of the summed precisions, shape (d,)."""
        return 1.0 / self.weights.sum(axis=0)

    def combine(self, x_factors: np.ndarray) -> np.ndarray:
        """Weighted average over the factor axis.

        ``x_factors`` may be (C, d) for a single draw or (C, n, d) for a
        batch; the factor axis is always the first.
        """
        x = np.asarray(x_factors, dtype=float)
        if x.ndim == 2:
            return self.pooled * (self.weights * x).sum(axis=0)
        if x.ndim == 3:
            return self.pooled[None, :] * (self.weights[:, None, :] * x).sum(axis=0)
        raise ValueError("x_factors must have 2 or 3 axes")


def _draw_factor_batch(problem: FusionProblem, rng: np.random.Generator, size: int) -> np.ndarray:
    xs = np.empty((problem.n_factors, size, problem.dim))
    for c, factor in enumerate(problem.factors):
        draw = np.asarray(factor.direct_sampler(rng, size), dtype=float)
        xs[c] = draw.reshape(size, problem.dim)
    return xs


def cmc_sample(
    problem: FusionProblem,
    lams,
    rng: np.random.Generator,
    *,
    size: Optional[int] = None,
) -> np.ndarray:
    """Consensus draw: precision-weighted average of one draw per factor.

    Returns shape (d,) by default, or (size, d) when ``size`` is given.
    Exact for Gaussian factors weighted by their true precisions; biased in
    general, since averaging is not the product operation.
    """
    lam = _as_lam_matrix(lams, problem.n_factors, problem.dim)
    combiner = WeightedCombiner(lam)
    n = 1 if size is None else int(size)
    if n < 0:
        raise ValueError("size must be nonnegative")
    xs = _draw_factor_batch(problem, rng, n)
    out = combiner.combine(xs)
    return out[0] if size is None else out


def _approx_ou_batch(
    problem: FusionProblem,
    mu: np.ndarray,
    lam: np.ndarray,
    T: float,
    rng: np.random.Generator,
    size: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """One proposal batch: accepted y values, shape (k, d), with the
    positions of the accepts inside the batch (for exact work accounting)."""
    with np.errstate(over="ignore"):
        decay = np.exp(-lam * T)  # 0 at T = inf
        V = -np.expm1(-2.0 * lam * T) / (2.0 * lam)  # 1/(2Λ̂) at T = inf
        D = (1.0 / V - lam).sum(axis=0)
    if np.any(D <= 0.0):
        i = int(np.argmin(D))
        raise ValueError(
            f"surrogate-inconsistent pooled precision D={D[i]} in coordinate "
            f"{i} at horizon T={T}"
        )
    const = float((lam.sum(axis=0) * mu**2).sum())
    xs = _draw_factor_batch(problem, rng, size)
    centered = xs - mu[None, None, :]
    m = mu[None, None, :] + decay[:, None, :] * centered
    num = (m / V[:, None, :]).sum(axis=0) - (lam * mu[None, :]).sum(axis=0)[None, :]
    x_tilde = num / D[None, :]
    log_rho = -0.5 * (
        (m**2 / V[:, None, :]).sum(axis=(0, 2))
        + (lam[:, None, :] * centered**2).sum(axis=(0, 2))
        - (D[None, :] * x_tilde**2).sum(axis=1)
        - const
    )
    keep = np.nonzero(np.log(rng.random(size)) <= log_rho)[0]
    ys = x_tilde[keep] + rng.standard_normal((keep.size, problem.dim)) / np.sqrt(D)
    return ys, keep


def approx_ou_sample(
    problem: FusionProblem,
    mu_hat,
    lams,
    rng: np.random.Generator,
    *,
    horizon: Optional[float] = None,
    size: Optional[int] = None,
) -> np.ndarray:
    """Approximate fused draw: mean-reverting proposal thinned by ρ only.

    The path-space gate is skipped entirely, so the output law is the fused
    density only in the limits where that gate is certain; at finite horizons
    it is an approximation that improves as the horizon shrinks.  ``horizon``
    overrides the problem horizon and may be ``math.inf`` (analytic limits);
    horizons at or below the numeric guard are refused.
    """
    T = problem.horizon if horizon is None else float(horizon)
    if not T > _HORIZON_GUARD:
        raise ValueError(
            f"surrogate horizon T={T} is at or below the numeric guard "
            f"{_HORIZON_GUARD}; the per-factor precisions V_c**-1 ~ 1/T are "
            "no longer trustworthy at that scale"
        )
    C, d = problem.n_factors, problem.dim
    lam = _as_lam_matrix(lams, C, d)
    mu = _as_mu(mu_hat, d)
    n = 1 if size is None else int(size)
    if n < 0:
        raise ValueError("size must be nonnegative")
    out = np.empty((n, d))
    got = 0
    while got < n:
        batch = max(256, 2 * (n - got))
        ys, _ = _approx_ou_batch(problem, mu, lam, T, rng, batch)
        take = min(ys.shape[0], n - got)
        out[got : got + take] = ys[:take]
        got += take
    return out[0] if size is None else out


def cmc_with_diagnostics(
    problem: FusionProblem,
    lams,
    n: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, RunDiagnostics]:
    """Batch consensus draws plus counters in the shared diagnostics shape."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    t0 = time.perf_counter()
    samples = cmc_sample(problem, lams, rng, size=n)
    diag = RunDiagnostics(
        algorithm="cmc",
        stage1_attempts=n,
        stage1_accepts=n,
        stage2_attempts=n,
        stage2_accepts=n,
        wall_clock_seconds=time.perf_counter() - t0,
    )
    return samples, diag


def approx_ou_with_diagnostics(
    problem: FusionProblem,
    mu_hat,
    lams,
    n: int,
    rng: np.random.Generator,
    *,
    horizon: Optional[float] = None,
) -> Tuple[np.ndarray, RunDiagnostics]:
    """Batch ρ-thinned draws plus real stage-1 counters.

    Stage-2 counters equal the accept count: every stage-1 survivor is kept,
    which is exactly what distinguishes this baseline from the exact sampler.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    T = problem.horizon if horizon is None else float(horizon)
    if not T > _HORIZON_GUARD:
        raise ValueError(
            f"surrogate horizon T={T} is at or below the numeric guard "
            f"{_HORIZON_GUARD}; the per-factor precisions V_c**-1 ~ 1/T are "
            "no longer trustworthy at that scale"
        )
    t0 = time.perf_counter()
    C, d = problem.n_factors, problem.dim
    lam = _as_lam_matrix(lams, C, d)
    mu = _as_mu(mu_hat, d)
    out = np.empty((n, d))
    got = attempts = 0
    while got < n:
        batch = max(256, 2 * (n - got))
        ys, keep = _approx_ou_batch(problem, mu, lam, T, rng, batch)
        take = min(ys.shape[0], n - got)
        # count proposals only up to the last accept actually consumed; the
        # rest of the batch is discarded unexamined
        attempts += int(keep[take - 1]) + 1 if take < ys.shape[0] else batch
        out[got : got + take] = ys[:take]
        got += take
    diag = RunDiagnostics(
        algorithm="approx_ou",
        stage1_attempts=attempts,
        stage1_accepts=n,
        stage2_attempts=n,
        stage2_accepts=n,
        wall_clock_seconds=time.perf_counter() - t0,
    )
    return out, diag
