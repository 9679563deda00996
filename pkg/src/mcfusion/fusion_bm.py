"""Exact fusion sampler driven by Brownian-bridge proposals.

Draws from the product density f ∝ Π_c f_c using only per-factor samplers
and log-density derivatives.  Each proposal draws one point from every
factor, centres a Gaussian proposal for the common value y on their mean,
and then plays two rejection gates:

* a cheap Gaussian gate with acceptance ρ = exp(−C σ² / 2T), where σ² is
  the spread of the factor draws around their mean, and
* a path-space gate that realises, for every factor, the event that a
  Poisson thinning of a Brownian bridge from the factor draw to y produces
  no point above the bridge's local drift functional φ.

Any failure discards the entire batch of factor draws, so accepted y values
are exact draws from f.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .bridges import (
    BridgeEndpoints,
    ThinningTally,
    reveal_bridge_points,
    sample_bessel_layers,
)
from .diagnostics import RunDiagnostics
from .model import FusionProblem

__all__ = ["BmProposal", "propose_bm", "rho_bm", "q_event_bm", "fuse_bm"]

_MIN_BATCH = 256
_MAX_BATCH = 1 << 17


@dataclass(frozen=True)
class BmProposal:
    """One joint proposal: factor draws, their mean, and the candidate y."""

    x_factors: np.ndarray  # (C, d)
    x_bar: np.ndarray  # (d,)
    y: np.ndarray  # (d,)
    sigma2: float

    @property
    def n_factors(self) -> int:
        return self.x_factors.shape[0]

    @property
    def dim(self) -> int:
        return self.x_factors.shape[1]


def rho_bm(sigma2, n_factors: int, horizon: float):
    """First-stage acceptance probability exp(−C σ² / 2T).

    ``sigma2`` may be a scalar or an array of spreads; the return matches.
    """
    if horizon <= 0.0 or not math.isfinite(horizon):
        raise ValueError(f"horizon must be a finite positive number, got {horizon}")
    if n_factors < 1:
        raise ValueError("n_factors must be at least 1")
    s = np.asarray(sigma2, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("sigma2 must be nonnegative")
    out = np.exp(-n_factors * s / (2.0 * horizon))
    return float(out) if out.ndim == 0 else out


def _draw_factor_batch(problem: FusionProblem, rng: np.random.Generator, size: int) -> np.ndarray:
    """Stack one batch of draws from every factor, shape (C, size, d)."""
    xs = np.empty((problem.n_factors, size, problem.dim))
    for c, factor in enumerate(problem.factors):
        draw = np.asarray(factor.direct_sampler(rng, size), dtype=float)
        xs[c] = draw.reshape(size, problem.dim)
    return xs


def propose_bm(problem: FusionProblem, rng: np.random.Generator) -> BmProposal:
    """Draw one joint proposal: x_c ~ f_c for each factor, y ~ N(x̄, (T/C) I)."""
    xs = _draw_factor_batch(problem, rng, 1)[:, 0, :]
    x_bar = xs.mean(axis=0)
    sigma2 = float(((xs - x_bar) ** 2).sum(axis=1).mean())
    scale = math.sqrt(problem.horizon / problem.n_factors)
    y = x_bar + scale * rng.standard_normal(problem.dim)
    return BmProposal(x_factors=xs, x_bar=x_bar, y=y, sigma2=sigma2)


def q_event_bm(
    proposal: BmProposal,
    problem: FusionProblem,
    rng: np.random.Generator,
    *,
    width_unit: Optional[float] = None,
    tally: Optional[ThinningTally] = None,
) -> bool:
    """Realise the path-space acceptance event for one proposal.

    For each factor a Brownian bridge from the factor draw to y is pinned
    inside a sampled band, the thinning rate is bounded by the band's
    φ range, and a Poisson number of bridge points is revealed and tested.
    Factors are checked in order and the first failing one short-circuits
    the rest (the event is a conjunction, so order does not bias it).
    """
    T = problem.horizon
    unit = math.sqrt(T) if width_unit is None else float(width_unit)
    for c, factor in enumerate(problem.factors):
        endpoints = BridgeEndpoints(proposal.x_factors[c], proposal.y, T)
        layers = sample_bessel_layers(endpoints, rng, width_unit=unit)
        lower = np.array([layer.lower for layer in layers])
        upper = np.array([layer.upper for layer in layers])
        _, phi_sup = factor.phi_interval_bound(lower, upper)
        rate = phi_sup - factor.phi_lower_bound
        if rate < 0.0:
            raise RuntimeError(
                f"factor {factor.name!r}: band φ bound {phi_sup} fell below the "
                f"global lower bound {factor.phi_lower_bound}; the factor's "
                "bounds are inconsistent"
            )
        kappa = rng.poisson(rate * T)
        if tally is not None:
            tally.proposal_attempts += 1
            tally.poisson_points += int(kappa)
        if kappa == 0:
            continue
        times = np.unique(rng.uniform(0.0, T, size=kappa))
        times = times[(times > 0.0) & (times < T)]
        if times.size == 0:
            continue
        base = reveal_bridge_points(
            _layered_skeleton(endpoints, layers), times, rng
        )
        idx = np.searchsorted(base.times, times)
        values = base.values[idx]
        marks = rng.random(times.size)
        if np.any(marks * rate < factor.phi(values) - factor.phi_lower_bound):
            return False
    return True


def _layered_skeleton(endpoints: BridgeEndpoints, layers):
    from .bridges.skeleton import BridgeSkeleton

    return BridgeSkeleton(
        endpoints=endpoints,
        times=np.empty(0),
        values=np.empty((0, endpoints.dim)),
        layers=tuple(layers),
    )


def _next_batch_size(remaining: int, accepts: int, processed: int) -> int:
    """Deterministic batch-size policy from the counts seen so far."""
    p_hat = (accepts + 1.0) / (processed + 2.0)
    want = int(math.ceil(1.2 * remaining / p_hat))
    return max(_MIN_BATCH, min(_MAX_BATCH, want))


def fuse_bm(
    problem: FusionProblem,
    n: int,
    rng: np.random.Generator,
    *,
    width_unit: Optional[float] = None,
) -> Tuple[np.ndarray, RunDiagnostics]:
    """Draw ``n`` independent exact samples from the fused density.

    Stage 1 is evaluated on vectorised batches of proposals; stage-1
    survivors are then checked sequentially against the path-space gate.
    Returns the samples, shape (n, d), together with run diagnostics.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    t0 = time.perf_counter()
    C, d, T = problem.n_factors, problem.dim, problem.horizon
    scale = math.sqrt(T / C)
    out = np.empty((n, d))
    got = 0
    s1_attempts = s1_accepts = s2_attempts = 0
    tally = ThinningTally()
    while got < n:
        size = _next_batch_size(n - got, got, s1_attempts)
        xs = _draw_factor_batch(problem, rng, size)
        x_bar = xs.mean(axis=0)
        sigma2 = ((xs - x_bar[None]) ** 2).sum(axis=2).mean(axis=0)
        log_u = np.log(rng.random(size))
        pass1 = log_u <= -C * sigma2 / (2.0 * T)
        survivors = np.nonzero(pass1)[0]
        ys = x_bar[survivors] + scale * rng.standard_normal((survivors.size, d))
        consumed = size
        for j, i in enumerate(survivors):
            proposal = BmProposal(
                x_factors=xs[:, i, :],
                x_bar=x_bar[i],
                y=ys[j],
                sigma2=float(sigma2[i]),
            )
            s2_attempts += 1
            if q_event_bm(proposal, problem, rng, width_unit=width_unit, tally=tally):
                out[got] = proposal.y
                got += 1
                if got == n:
                    # Later survivors in this batch are discarded unused;
                    # count only the stage-1 work actually examined.
                    consumed = i + 1
                    survivors = survivors[: j + 1]
                    break
        s1_attempts += consumed
        s1_accepts += survivors.size
    diag = RunDiagnostics(
        algorithm="bm",
        stage1_attempts=s1_attempts,
        stage1_accepts=s1_accepts,
        stage2_attempts=s2_attempts,
        stage2_accepts=got,
        poisson_points_total=tally.poisson_points,
        wall_clock_seconds=time.perf_counter() - t0,
    )
    return out, diag
