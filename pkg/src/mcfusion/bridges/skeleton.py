"""Brownian-bridge skeletons with Bessel-layer range information.

A skeleton is the finite revealed portion of a bridge path: endpoints, any
interior points already drawn, and (optionally) a per-coordinate layer
recording that the whole path's range lies inside the layer's band but NOT
inside the next-narrower band.  Layers are what turn an unbounded functional
φ into a finite thinning rate: sup over the layer rectangle is finite.

Exactness discipline: the layer index is drawn with the exact
difference-event probability (retrospective alternating-series decisions),
and every later reveal conditions on that same difference event — new points
are proposed from the plain bridge conditionals and accepted with the
bracketed probability P(range ⊆ outer, ⊄ inner | revealed values).  This
keeps every revealed value and every acceptance event exactly distributed; no
discretization or truncation enters anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .crossing import (
    DEFAULT_REFINEMENT_CAP,
    RefinementBudget,
    SeriesSeparationError,
    StayBracket,
    decide_bernoulli,
    decide_band_event,
)

__all__ = [
    "BridgeEndpoints",
    "BesselLayer",
    "BridgeSkeleton",
    "brownian_bridge_marginal",
    "sample_bridge_at_times",
    "default_layer_unit",
    "sample_bessel_layer",
    "sample_bessel_layers",
    "sample_point_given_layer",
    "reveal_bridge_points",
    "MAX_LAYER_LEVEL",
]

MAX_LAYER_LEVEL = 10_000
_MAX_REVEAL_TRIES = 10**6


@dataclass(frozen=True)
class BridgeEndpoints:
    """Start and end of a bridge: x0 at time 0, xT at time T."""

    x0: np.ndarray
    xT: np.ndarray
    T: float

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        xT = np.atleast_1d(np.asarray(self.xT, dtype=float))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xT", xT)
        if x0.shape != xT.shape or x0.ndim != 1:
            raise ValueError(f"endpoint shapes disagree: {x0.shape} vs {xT.shape}")
        if not (self.T > 0.0) or math.isinf(self.T):
            raise ValueError(f"T must be finite and positive, got {self.T}")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(xT))):
            raise ValueError("endpoints must be finite")

    @property
    def dim(self) -> int:
        return self.x0.shape[0]


@dataclass(frozen=True)
class BesselLayer:
    """Range band for one scalar coordinate: path ∈ [lower, upper], level ℓ ≥ 1.

    Bands are nested with width(ℓ) = ℓ·unit beyond the endpoint range; the
    inner band of level ℓ is the level ℓ−1 band (for ℓ = 1, the bare endpoint
    range, which a continuous path a.s. escapes — so the difference event at
    level 1 degenerates to plain containment).
    """

    level: int
    lower: float
    upper: float
    unit: float

    def __post_init__(self) -> None:
        if self.level < 1:
            raise ValueError(f"layer level must be >= 1, got {self.level}")
        if not (self.lower < self.upper):
            raise ValueError("layer band is empty")
        if not (self.unit > 0.0):
            raise ValueError("layer width unit must be positive")

    @property
    def inner_lower(self) -> float:
        return self.lower + self.unit

    @property
    def inner_upper(self) -> float:
        return self.upper - self.unit


@dataclass(frozen=True, eq=False)
class BridgeSkeleton:
    """Revealed portion of one bridge path (+ optional per-coordinate layers)."""

    endpoints: BridgeEndpoints
    times: np.ndarray  # (m,) strictly increasing, inside (0, T)
    values: np.ndarray  # (m, d)
    layers: Optional[tuple[BesselLayer, ...]] = None
    law_tag: str = "brownian"

    def __post_init__(self) -> None:
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        d = self.endpoints.dim
        if values.shape != (times.shape[0], d):
            raise ValueError(f"values shape {values.shape} != ({times.shape[0]}, {d})")
        if times.size:
            if times.size > 1 and np.any(times[1:] <= times[:-1]):
                raise ValueError("skeleton times must be strictly increasing")
            if times[0] <= 0.0 or times[-1] >= self.endpoints.T:
                raise ValueError("skeleton times must lie strictly inside (0, T)")
        if self.layers is not None:
            if len(self.layers) != d:
                raise ValueError(f"need one layer per coordinate ({d}), got {len(self.layers)}")
            if times.size:
                for i, layer in enumerate(self.layers):
                    col = values[:, i]
                    if col.min() < layer.lower or col.max() > layer.upper:
                        raise ValueError(f"coordinate {i} has revealed values outside its layer")

    @property
    def points(self) -> list[tuple[float, np.ndarray]]:
        return [(float(t), self.values[i].copy()) for i, t in enumerate(self.times)]

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values including endpoints: ((m+2,), (m+2, d))."""
        e = self.endpoints
        t = np.concatenate([[0.0], self.times, [e.T]])
        v = np.vstack([e.x0[None, :], self.values, e.xT[None, :]])
        return t, v


def brownian_bridge_marginal(e: BridgeEndpoints, t: float) -> tuple[np.ndarray, float]:
    """Mean vector and per-coordinate variance of the bridge at interior time t."""
    if not (0.0 < t < e.T):
        raise ValueError(f"t must lie strictly inside (0, {e.T}), got {t}")
    frac = t / e.T
    mean = e.x0 + frac * (e.xT - e.x0)
    var = t * (e.T - t) / e.T
    return mean, var


def _bridge_fill(
    rng: np.random.Generator,
    t_a: float,
    v_a: np.ndarray,
    t_b: float,
    v_b: np.ndarray,
    times: np.ndarray,
) -> np.ndarray:
    """Exact joint draw of a Brownian bridge (t_a,v_a)→(t_b,v_b) at interior times.

    Uses the W_t − (t/S)W_S representation: two Gaussian batches per call, no
    sequential loop, exact joint law.
    """
    s = times - t_a
    S = t_b - t_a
    d = v_a.shape[0]
    m = times.shape[0]
    if m == 1:
        frac1 = s[0] / S
        mean = v_a + frac1 * (v_b - v_a)
        sd = math.sqrt(s[0] * (S - s[0]) / S)
        return (mean + sd * rng.normal(0.0, 1.0, d))[None, :]
    dt = np.empty_like(s)
    dt[0] = s[0]
    dt[1:] = s[1:] - s[:-1]
    W = np.cumsum(rng.normal(0.0, 1.0, (m, d)) * np.sqrt(dt)[:, None], axis=0)
    W_S = W[-1] + rng.normal(0.0, 1.0, d) * math.sqrt(S - s[-1])
    frac = (s / S)[:, None]
    return v_a[None, :] + frac * (v_b - v_a)[None, :] + W - frac * W_S[None, :]


def sample_bridge_at_times(
    e: BridgeEndpoints, times: Sequence[float], rng: np.random.Generator
) -> BridgeSkeleton:
    """Exact unlayered bridge skeleton at the given strictly-increasing times."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.size == 0:
        return BridgeSkeleton(e, np.empty(0), np.empty((0, e.dim)))
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("times must be strictly increasing without duplicates")
    if t[0] <= 0.0 or t[-1] >= e.T:
        raise ValueError(f"times must lie strictly inside (0, {e.T})")
    values = _bridge_fill(rng, 0.0, e.x0, e.T, e.xT, t)
    return BridgeSkeleton(e, t, values)


def default_layer_unit(e: BridgeEndpoints, coordinate: int) -> float:
    """Default layer width unit: √T plus the coordinate's endpoint gap."""
    return math.sqrt(e.T) + abs(float(e.xT[coordinate] - e.x0[coordinate]))


def _coordinate_endpoints(e: BridgeEndpoints, i: int) -> tuple[float, float]:
    return float(e.x0[i]), float(e.xT[i])


def sample_bessel_layer(
    e: BridgeEndpoints,
    rng: np.random.Generator,
    *,
    coordinate: int = 0,
    width_unit: Optional[float] = None,
    refinement_cap: int = DEFAULT_REFINEMENT_CAP,
) -> BesselLayer:
    """Draw the exact range layer of one scalar bridge coordinate.

    The level ℓ is distributed as P(range ⊆ band ℓ) − P(range ⊆ band ℓ−1),
    realized by inverse-CDF on a single uniform with bracketed stay
    probabilities refined only as far as the decision requires.
    """
    x0, xT = _coordinate_endpoints(e, coordinate)
    unit = default_layer_unit(e, coordinate) if width_unit is None else float(width_unit)
    if unit <= 0.0:
        raise ValueError("width unit must be positive")
    lo_base = min(x0, xT)
    hi_base = max(x0, xT)
    u = rng.random()
    budget = RefinementBudget(refinement_cap)
    for level in range(1, MAX_LAYER_LEVEL + 1):
        band_lo = lo_base - level * unit
        band_hi = hi_base + level * unit
        bracket = StayBracket(x0, xT, e.T, band_lo, band_hi)
        try:
            if decide_bernoulli(u, bracket, budget):
                return BesselLayer(level, band_lo, band_hi, unit)
        except SeriesSeparationError as err:
            raise SeriesSeparationError(
                f"layer draw failed for endpoints ({x0}, {xT}), T={e.T}: {err}"
            ) from err
    raise SeriesSeparationError(f"no layer found within {MAX_LAYER_LEVEL} levels")


def sample_bessel_layers(
    e: BridgeEndpoints,
    rng: np.random.Generator,
    *,
    width_unit: Optional[float] = None,
    refinement_cap: int = DEFAULT_REFINEMENT_CAP,
) -> tuple[BesselLayer, ...]:
    """Independent per-coordinate layers for a d-dimensional bridge."""
    return tuple(
        sample_bessel_layer(
            e, rng, coordinate=i, width_unit=width_unit, refinement_cap=refinement_cap
        )
        for i in range(e.dim)
    )


def _strictly_inside(values: np.ndarray, lo: float, hi: float) -> bool:
    return bool(np.all(values > lo) and np.all(values < hi))


def _one_term_stay_products(
    a: np.ndarray,
    b: np.ndarray,
    ell: np.ndarray,
    lo: float,
    hi: float,
    check_degenerate: bool = False,
) -> tuple[float, float]:
    """Product over segments of one-term stay-probability brackets.

    Each segment's bracket matches :class:`StayBracket` after its
    constructor's single refinement: the alternating crossing series
    truncated at j=1 gives γ ∈ [max(1 − σ₁, 0), max(1 − σ₁ + τ₁, 0)].  The
    return value is (Π lower, Π upper) across segments.  With
    ``check_degenerate`` an endpoint on or outside the band forces a [0, 0]
    segment bracket exactly; callers that guarantee strictly interior
    endpoints skip the check.  Used as a fast path so the refinable
    per-segment brackets are only built when one term cannot already decide
    the batch event.  Segment counts here are almost always single digits,
    so a plain Python loop beats array dispatch.
    """
    delta = hi - lo
    p_lo = 1.0
    p_hi = 1.0
    exp = math.exp
    for ai, bi, li in zip(a.tolist(), b.tolist(), ell.tolist()):
        d1 = ai - lo
        d2 = bi - lo
        u1 = hi - ai
        u2 = hi - bi
        if check_degenerate and (d1 <= 0.0 or d2 <= 0.0 or u1 <= 0.0 or u2 <= 0.0):
            return 0.0, 0.0
        e = -2.0 / li
        dd = d1 - d2
        sigma1 = exp(e * (delta - u1) * (delta - u2)) + exp(e * (delta - d1) * (delta - d2))
        tau1 = exp(e * delta * (delta + dd)) + exp(e * delta * (delta - dd))
        lo1 = 1.0 - sigma1
        p_lo *= lo1 if lo1 > 0.0 else 0.0
        hi1 = lo1 + tau1
        p_hi *= hi1 if hi1 > 0.0 else 0.0
        if p_hi == 0.0:
            return 0.0, 0.0
    return p_lo, p_hi


def reveal_bridge_points(
    skel: BridgeSkeleton,
    new_times: Sequence[float],
    rng: np.random.Generator,
    *,
    refinement_cap: int = DEFAULT_REFINEMENT_CAP,
) -> BridgeSkeleton:
    """Reveal the bridge at additional times, preserving the layer event exactly.

    Layerless skeletons get a plain conditional fill.  Layered skeletons use
    rejection: propose the whole batch from the unconditioned bridge
    conditionals given everything already revealed, then accept the batch with
    probability P(range ⊆ outer band, ⊄ inner band | all revealed values) —
    a product over coordinates of bracketed stay-probability differences.
    Batch-level acceptance is what keeps the JOINT law of the new points
    correct; accepting points one at a time against containment alone would
    bias later reveals.
    """
    t_new = np.atleast_1d(np.asarray(new_times, dtype=float))
    if t_new.size == 0:
        return skel
    t_new = np.sort(t_new)
    if t_new.size > 1 and np.any(t_new[1:] <= t_new[:-1]):
        raise ValueError("new times contain duplicates")
    e = skel.endpoints
    if t_new[0] <= 0.0 or t_new[-1] >= e.T:
        raise ValueError(f"new times must lie strictly inside (0, {e.T})")
    if skel.times.size and np.any(np.isin(t_new, skel.times)):
        raise ValueError("a requested time is already revealed in this skeleton")

    d = e.dim
    if skel.times.size == 0:
        # Nothing revealed yet: every new point falls in the single endpoint
        # gap, so the merge bookkeeping is immediate.
        t_known = np.array([0.0, e.T])
        v_known = np.stack([e.x0, e.xT])
        gap_of = np.zeros(t_new.shape[0], dtype=np.intp)
        unique_gaps = (0,)
        merged_t = np.concatenate([t_known[:1], t_new, t_known[1:]])
        new_slots = np.ones(merged_t.shape[0], dtype=bool)
        new_slots[0] = new_slots[-1] = False
    else:
        t_known, v_known = skel.grid()
        # gap index of each new time within the known grid
        gap_of = np.searchsorted(t_known, t_new) - 1
        unique_gaps = np.unique(gap_of)
        merged_t = np.concatenate([t_known, t_new])
        order = np.argsort(merged_t, kind="stable")
        merged_t = merged_t[order]
        new_slots = order >= t_known.shape[0]  # which merged rows are new points

    if skel.layers is None:
        merged_v = np.empty((merged_t.shape[0], d))
        merged_v[~new_slots] = v_known
        proposal = np.empty((t_new.shape[0], d))
        for g in unique_gaps:
            in_gap = gap_of == g
            proposal[in_gap] = _bridge_fill(
                rng, t_known[g], v_known[g], t_known[g + 1], v_known[g + 1], t_new[in_gap]
            )
        merged_v[new_slots] = proposal
        return replace(
            skel, times=merged_t[1:-1], values=merged_v[1:-1], layers=None, law_tag=skel.law_tag
        )

    layers = skel.layers
    # χ can only hold if everything already revealed sits strictly inside the
    # inner band; once false it stays false for every retry.
    chi_known = [
        layer.level > 1 and _strictly_inside(v_known[:, i], layer.inner_lower, layer.inner_upper)
        for i, layer in enumerate(layers)
    ]

    M = merged_t.shape[0]
    merged_v = np.empty((M, d))
    merged_v[~new_slots] = v_known
    ell = merged_t[1:] - merged_t[:-1]

    # Segments whose endpoints are both already-known values keep the same
    # bracket every retry; precompute their bound products once.  Only
    # segments touching a new point are recomputed inside the loop.
    dynamic = new_slots[:-1] | new_slots[1:]
    rows_a = np.nonzero(dynamic)[0]
    rows_b = rows_a + 1
    ell_dyn = ell[dynamic]
    static = ~dynamic
    static_out: list[tuple[float, float]] = []
    static_in: list[tuple[float, float]] = []
    for i, layer in enumerate(layers):
        if static.any():
            a_s, b_s = merged_v[:-1, i][static], merged_v[1:, i][static]
            static_out.append(
                _one_term_stay_products(a_s, b_s, ell[static], layer.lower, layer.upper)
            )
            if chi_known[i]:
                static_in.append(
                    _one_term_stay_products(
                        a_s, b_s, ell[static], layer.inner_lower, layer.inner_upper,
                        check_degenerate=True,
                    )
                )
            else:
                static_in.append((1.0, 1.0))
        else:
            static_out.append((1.0, 1.0))
            static_in.append((1.0, 1.0))

    # Per-gap fill plans: everything except the Gaussian draws is retry-invariant.
    plans = []
    for g in unique_gaps:
        mask = gap_of == g
        t_in = t_new[mask]
        t_a, t_b = t_known[g], t_known[g + 1]
        v_a, v_b = v_known[g], v_known[g + 1]
        if t_in.size == 1:
            frac1 = (t_in[0] - t_a) / (t_b - t_a)
            base = (v_a + frac1 * (v_b - v_a))[None, :]
            sd = math.sqrt((t_in[0] - t_a) * (t_b - t_in[0]) / (t_b - t_a))
            plans.append((mask, base, sd, None, None, 0.0))
        else:
            s = t_in - t_a
            S = t_b - t_a
            dt = np.empty_like(s)
            dt[0] = s[0]
            dt[1:] = s[1:] - s[:-1]
            sqdt = np.sqrt(dt)[:, None]
            frac = (s / S)[:, None]
            base = v_a[None, :] + frac * (v_b - v_a)[None, :]
            plans.append((mask, base, None, sqdt, frac, math.sqrt(S - s[-1])))

    n_new = t_new.shape[0]
    chi = [False] * d
    for _ in range(_MAX_REVEAL_TRIES):
        proposal = np.empty((n_new, d))
        for mask, base, sd, sqdt, frac, tail_sd in plans:
            if sd is not None:
                proposal[mask] = base + sd * rng.standard_normal(d)
            else:
                W = np.cumsum(rng.standard_normal(base.shape) * sqdt, axis=0)
                W_T = W[-1] + rng.standard_normal(d) * tail_sd
                proposal[mask] = base + W - frac * W_T
        # fast impossible-event rejection: any value outside its outer band
        ok = True
        for i, layer in enumerate(layers):
            col = proposal[:, i]
            pmin, pmax = col.min(), col.max()
            if pmin <= layer.lower or pmax >= layer.upper:
                ok = False
                break
            chi[i] = (
                chi_known[i] and pmin > layer.inner_lower and pmax < layer.inner_upper
            )
        if not ok:
            continue
        merged_v[new_slots] = proposal
        # One-term vectorised brackets decide almost every batch; the
        # refinable per-segment brackets are only built when the event
        # probability bracket still straddles u after one term.
        v_lo = v_hi = 1.0
        for i, layer in enumerate(layers):
            a_d, b_d = merged_v[rows_a, i], merged_v[rows_b, i]
            o_lo, o_hi = _one_term_stay_products(a_d, b_d, ell_dyn, layer.lower, layer.upper)
            s_lo, s_hi = static_out[i]
            out_lo, out_hi = s_lo * o_lo, s_hi * o_hi
            in_lo = in_hi = 0.0
            if chi[i]:
                i_lo, i_hi = _one_term_stay_products(
                    a_d, b_d, ell_dyn, layer.inner_lower, layer.inner_upper,
                    check_degenerate=True,
                )
                t_lo, t_hi = static_in[i]
                in_lo, in_hi = t_lo * i_lo, t_hi * i_hi
            v_lo *= max(out_lo - in_hi, 0.0)
            v_hi *= max(out_hi - in_lo, 0.0)
        u = rng.random()
        if u < v_lo:
            accept = True
        elif u >= v_hi:
            accept = False
        else:
            coords = []
            for i, layer in enumerate(layers):
                col = merged_v[:, i]
                outer = [
                    StayBracket(col[j], col[j + 1], ell[j], layer.lower, layer.upper)
                    for j in range(M - 1)
                ]
                inner = None
                if chi[i]:
                    inner = [
                        StayBracket(
                            col[j],
                            col[j + 1],
                            ell[j],
                            layer.inner_lower,
                            layer.inner_upper,
                        )
                        for j in range(M - 1)
                    ]
                coords.append((outer, inner))
            accept = decide_band_event(u, coords, RefinementBudget(refinement_cap))
        if accept:
            return replace(
                skel,
                times=merged_t[1:-1],
                values=merged_v[1:-1].copy(),
                layers=layers,
                law_tag=skel.law_tag,
            )
    raise SeriesSeparationError(
        f"bridge reveal failed to accept within {_MAX_REVEAL_TRIES} proposals"
    )


def sample_point_given_layer(
    skel: BridgeSkeleton, t: float, rng: np.random.Generator
) -> BridgeSkeleton:
    """Reveal the bridge at a single new time, respecting the skeleton's layer."""
    if skel.layers is None:
        raise ValueError("skeleton has no layer; use sample_bridge_at_times for plain fills")
    if skel.times.size and float(t) in skel.times:
        raise ValueError(f"time {t} is already revealed in this skeleton")
    return reveal_bridge_points(skel, [float(t)], rng)
