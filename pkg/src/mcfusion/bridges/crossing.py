"""Alternating-series brackets for Brownian-bridge band-crossing probabilities.

For a Brownian bridge from (0, x) to (s, y) with unit diffusion and a band
L < x, y < U, the probability of escaping the band is the alternating series

    ζ = Σ_{j≥1} (σ_j − τ_j),

    σ_j = e^{−2(δj − u₁)(δj − u₂)/s} + e^{−2(δj − d₁)(δj − d₂)/s}
    τ_j = e^{−2δj(δj + d₁ − d₂)/s} + e^{−2δj(δj − d₁ + d₂)/s}

with δ = U − L, d₁ = x − L, d₂ = y − L, u₁ = U − x, u₂ = U − y.  The j=1 σ
terms are the two one-barrier reflection probabilities.  Whenever x, y lie in
[L, U] the terms interlace, σ_j ≥ τ_j ≥ σ_{j+1} (proved by expanding the
exponents and using 0 ≤ d_i, u_i ≤ δ ≤ 2δj), so EVERY truncation brackets ζ:

    Σ_{j≤k}(σ_j − τ_j)  ≤  ζ  ≤  Σ_{j≤k}σ_j − Σ_{j≤k−1}τ_j      for all k ≥ 1.

The stay probability γ = 1 − ζ therefore has computable monotone brackets,
which is what lets Bernoulli events with probability γ (or products of γ's)
be decided exactly from finitely many terms — no truncation bias.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

__all__ = [
    "SeriesSeparationError",
    "RefinementBudget",
    "StayBracket",
    "stay_probability",
    "decide_bernoulli",
    "decide_band_event",
    "DEFAULT_REFINEMENT_CAP",
]

DEFAULT_REFINEMENT_CAP = 10**6


class SeriesSeparationError(RuntimeError):
    """The bracketing series failed to separate a decision within the cap."""


class RefinementBudget:
    """Hard cap on series refinements for one retrospective decision."""

    __slots__ = ("remaining", "cap")

    def __init__(self, cap: int = DEFAULT_REFINEMENT_CAP) -> None:
        self.cap = cap
        self.remaining = cap

    def spend(self) -> None:
        self.remaining -= 1
        if self.remaining < 0:
            raise SeriesSeparationError(
                f"crossing-series refinement cap ({self.cap}) exhausted before the "
                "decision separated; endpoints too close to a band boundary"
            )


class StayBracket:
    """Monotone bracket [low, high] ∋ P(bridge stays strictly inside (L, U)).

    Degenerate inputs (an endpoint on or outside the band) give the exact
    bracket [0, 0]: a continuous path started on the boundary escapes the open
    band almost surely.
    """

    __slots__ = ("ell", "delta", "d1", "d2", "u1", "u2", "k", "low", "high", "_ssum", "_tsum")

    def __init__(self, x: float, y: float, ell: float, L: float, U: float) -> None:
        if not (ell > 0.0):
            raise ValueError(f"segment length must be positive, got {ell}")
        if L >= U:
            raise ValueError(f"band is empty: [{L}, {U}]")
        self.ell = ell
        self.delta = U - L
        self.d1 = x - L
        self.d2 = y - L
        self.u1 = U - x
        self.u2 = U - y
        self.k = 0
        self._ssum = 0.0
        self._tsum = 0.0
        if self.d1 <= 0.0 or self.d2 <= 0.0 or self.u1 <= 0.0 or self.u2 <= 0.0:
            self.low = 0.0
            self.high = 0.0
        else:
            self.low = 0.0
            self.high = 1.0
            self.refine()  # σ₁/τ₁ are two exps each; always worth paying upfront

    @property
    def width(self) -> float:
        return self.high - self.low

    def refine(self) -> None:
        """Add one (σ_j, τ_j) pair; tightens [low, high] monotonically."""
        if self.high == 0.0:
            return
        j = self.k + 1
        e = -2.0 / self.ell
        dj = self.delta * j
        sigma = math.exp(e * (dj - self.u1) * (dj - self.u2)) + math.exp(
            e * (dj - self.d1) * (dj - self.d2)
        )
        dd = self.d1 - self.d2  # = x − y
        tau = math.exp(e * dj * (dj + dd)) + math.exp(e * dj * (dj - dd))
        self._ssum += sigma
        # upper partial sum Σσ_{1..j} − Στ_{1..j−1} overestimates ζ ⇒ lower-bounds γ
        self.low = max(self.low, 1.0 - (self._ssum - self._tsum))
        self._tsum += tau
        # lower partial sum Σ(σ−τ)_{1..j} underestimates ζ ⇒ upper-bounds γ
        self.high = min(self.high, 1.0 - (self._ssum - self._tsum))
        if self.high < self.low:  # only possible through float round-off
            mid = 0.5 * (self.high + self.low)
            self.low = self.high = mid
        self.k = j


def stay_probability(
    x: float, y: float, ell: float, L: float, U: float, tol: float = 1e-12, max_terms: int = 10_000
) -> float:
    """Converged γ = P(stay in (L,U)) to within tol (for oracles/diagnostics)."""
    b = StayBracket(x, y, ell, L, U)
    while b.width > tol:
        if b.k >= max_terms:
            raise SeriesSeparationError(f"series did not converge to {tol} in {max_terms} terms")
        b.refine()
    return 0.5 * (b.low + b.high)


def decide_bernoulli(u: float, bracket: StayBracket, budget: RefinementBudget) -> bool:
    """Exact draw of the event {u < γ} by refining the bracket until separated."""
    while True:
        if u < bracket.low:
            return True
        if u >= bracket.high:
            return False
        budget.spend()
        bracket.refine()


def _product_bounds(brackets: Sequence[StayBracket]) -> tuple[float, float]:
    lo = 1.0
    hi = 1.0
    for b in brackets:
        lo *= b.low if b.low > 0.0 else 0.0
        hi *= b.high
    return lo, hi


def decide_band_event(
    u: float,
    coords: Sequence[tuple[Sequence[StayBracket], Optional[Sequence[StayBracket]]]],
    budget: RefinementBudget,
) -> bool:
    """Exactly decide u < Π_i [Πγ_outer,i − Πγ_inner,i].

    ``coords`` holds per coordinate a pair (outer segment brackets, inner
    segment brackets or None).  Each coordinate factor is the probability that
    the coordinate's path stays in its outer band but not its inner band,
    given the revealed values; the inner product is omitted (None) when the
    inner event is already impossible.  The product over coordinates is the
    event probability for independent coordinates.  Refines the widest bracket
    until the uniform u is separated from the bracketed probability.
    """
    while True:
        v_lo = 1.0
        v_hi = 1.0
        widest: Optional[StayBracket] = None
        widest_w = 0.0
        for outer, inner in coords:
            out_lo, out_hi = _product_bounds(outer)
            if inner is not None:
                in_lo, in_hi = _product_bounds(inner)
            else:
                in_lo = in_hi = 0.0
            f_lo = out_lo - in_hi
            f_hi = out_hi - in_lo
            v_lo *= f_lo if f_lo > 0.0 else 0.0
            v_hi *= f_hi if f_hi > 0.0 else 0.0
            for b in outer:
                if b.width > widest_w:
                    widest_w = b.width
                    widest = b
            if inner is not None:
                for b in inner:
                    if b.width > widest_w:
                        widest_w = b.width
                        widest = b
        if u < v_lo:
            return True
        if u >= v_hi:
            return False
        if widest is None:  # all brackets exact yet u inside [v_lo, v_hi): u == value
            return False
        budget.spend()
        widest.refine()
