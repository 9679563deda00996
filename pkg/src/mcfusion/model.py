"""Core problem types: sub-posterior factors and fusion problems.

A fusion problem is a target density f(x) ∝ f_1(x)···f_C(x) on R^d where each
factor f_c is only accessible through (a) pointwise log-density/gradient/Laplacian
evaluation and (b) a sampler producing independent draws from f_c itself.  The
fusion algorithms combine one draw from each factor into a single draw from f,
without ever evaluating normalising constants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Array = np.ndarray

# Callable signatures (batched): log_density (..., d) -> (...), grad (..., d) -> (..., d),
# laplacian (..., d) -> (...), direct_sampler (rng, size) -> (size, d).
LogDensity = Callable[[Array], Array]
Gradient = Callable[[Array], Array]
Laplacian = Callable[[Array], Array]
DirectSampler = Callable[[np.random.Generator, int], Array]
IntervalBound = Callable[[Array, Array], tuple[float, float]]


@dataclass(frozen=True)
class SubPosterior:
    """One factor f_c of a product target, with everything fusion needs to know.

    Evaluation callbacks are batched: ``log_density`` maps (..., d) -> (...),
    ``grad_log_density`` maps (..., d) -> (..., d), ``laplacian_log_density``
    maps (..., d) -> (...).  ``direct_sampler(rng, n)`` returns (n, d) exact
    draws from f_c.

    phi_lower_bound is a global lower bound on the Girsanov integrand
    φ(x) = ½(‖∇log f‖² + Δ log f); it is what makes path-space rejection
    runnable at all.  phi_interval_bound(lo, hi) returns (inf, sup) of φ over
    the axis-aligned box [lo, hi] and is used to build local thinning rates;
    bounds may be conservative but must contain the true range.

    surrogate_mean / surrogate_precision, when set, seed the OU reference
    process (μ̂ and the diagonal of Λ̂_c).  phi_diff_lower_bound is a global
    lower bound on φ(x) − φ^ou_c(x) for that stored surrogate; None means no
    finite bound exists and the OU route must refuse this factor.  When the OU
    surrogate is chosen at run time (e.g. moment-matched from pilot draws),
    phi_diff_bound_builder(μ̂, Λ̂_diag) recomputes the bound for the actual
    surrogate, returning None if unbounded below.
    """

    log_density: LogDensity
    grad_log_density: Gradient
    laplacian_log_density: Laplacian
    direct_sampler: DirectSampler
    phi_lower_bound: float
    phi_interval_bound: IntervalBound
    dim: int = 1
    surrogate_mean: Optional[Array] = None
    surrogate_precision: Optional[Array] = None
    phi_diff_lower_bound: Optional[float] = None
    phi_diff_bound_builder: Optional[Callable[[Array, Array], Optional[float]]] = None
    name: str = "factor"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not math.isfinite(self.phi_lower_bound):
            raise ValueError("phi_lower_bound must be finite")
        for attr in ("surrogate_mean", "surrogate_precision"):
            value = getattr(self, attr)
            if value is not None:
                value = np.atleast_1d(np.asarray(value, dtype=float))
                if value.shape != (self.dim,):
                    raise ValueError(f"{attr} must have shape ({self.dim},), got {value.shape}")
                object.__setattr__(self, attr, value)

    def phi(self, x: Array) -> Array:
        """Girsanov integrand ½(‖∇log f_c‖² + Δ log f_c), batched."""
        x = np.asarray(x, dtype=float)
        grad = self.grad_log_density(x)
        lap = self.laplacian_log_density(x)
        return 0.5 * (np.sum(np.square(grad), axis=-1) + lap)


@dataclass(frozen=True)
class FusionProblem:
    """A product target f ∝ Π_c f_c plus the diffusion time horizon T."""

    factors: tuple[SubPosterior, ...]
    horizon: float = 1.0  # T; larger T trades stage-1 acceptance for stage-2 cost

    def __post_init__(self) -> None:
        if len(self.factors) == 0:
            raise ValueError("need at least one factor")
        dims = {f.dim for f in self.factors}
        if len(dims) != 1:
            raise ValueError(f"factors disagree on dimension: {sorted(dims)}")
        if not (self.horizon > 0) or math.isinf(self.horizon):
            raise ValueError(f"horizon must be finite and positive, got {self.horizon}")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return self.factors[0].dim

    def with_horizon(self, horizon: float) -> "FusionProblem":
        return replace(self, horizon=horizon)


def phi_dl(factor: SubPosterior, x: Array) -> Array:
    """φ(x) = ½(‖∇ log f_c(x)‖² + Δ log f_c(x)) for one factor, batched.

    This is the drift-Laplacian functional whose path integral prices a
    Brownian proposal into the Langevin measure of f_c².
    """
    return factor.phi(x)


def make_power_decomposition(
    factor: SubPosterior,
    n_pieces: int,
    *,
    piece_sampler: Optional[DirectSampler] = None,
    piece_phi_lower_bound: Optional[float] = None,
    piece_phi_interval_bound: Optional[IntervalBound] = None,
    piece_phi_diff_lower_bound: Optional[float] = None,
) -> tuple[SubPosterior, ...]:
    """Split a density into n identical fractional-power factors f^{1/n}.

    Log-density, gradient and Laplacian of each piece are the parent's scaled
    by 1/n.  The φ functional does NOT scale linearly (its squared-gradient
    term scales by 1/n², its Laplacian term by 1/n), so sound φ bounds for the
    pieces cannot be derived from the parent's bounds and must be supplied by
    the caller; likewise a sampler for f^{1/n} is not a sampler for f.  The
    built-in targets provide exact values for all of these.
    """
    if n_pieces < 1:
        raise ValueError(f"n_pieces must be >= 1, got {n_pieces}")
    if n_pieces == 1:
        return (factor,)
    if piece_phi_lower_bound is None or piece_phi_interval_bound is None:
        raise ValueError(
            "fractional powers rescale the squared-gradient and Laplacian parts of "
            "φ differently; supply piece_phi_lower_bound and piece_phi_interval_bound"
        )
    s = 1.0 / n_pieces

    def scaled_log_density(x: Array, _f=factor.log_density, _s=s) -> Array:
        return _s * _f(x)

    def scaled_grad(x: Array, _f=factor.grad_log_density, _s=s) -> Array:
        return _s * _f(x)

    def scaled_lap(x: Array, _f=factor.laplacian_log_density, _s=s) -> Array:
        return _s * _f(x)

    def no_sampler(rng: np.random.Generator, size: int) -> Array:
        raise NotImplementedError(
            "fractional-power piece has no inherited sampler; attach one explicitly"
        )

    piece = replace(
        factor,
        log_density=scaled_log_density,
        grad_log_density=scaled_grad,
        laplacian_log_density=scaled_lap,
        direct_sampler=piece_sampler if piece_sampler is not None else no_sampler,
        phi_lower_bound=piece_phi_lower_bound,
        phi_interval_bound=piece_phi_interval_bound,
        phi_diff_lower_bound=piece_phi_diff_lower_bound,
        name=f"{factor.name}^(1/{n_pieces})",
    )
    return tuple(piece for _ in range(n_pieces))


def logit_transform(u: Array) -> Array:
    """x = log(u / (1−u)), elementwise; domain error outside (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("logit_transform requires u strictly inside (0, 1)")
    return np.log(u) - np.log1p(-u)


def inverse_logit(x: Array) -> Array:
    """u = 1 / (1 + e^{−x}), elementwise; numerically stable at both tails."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
