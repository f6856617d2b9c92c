"""Demand curve families and their load-shedding reformulation.

Four demand models are supported: perfectly inelastic (a constant), a step
curve up to a value of lost load, a linear curve, and a piecewise-linear
aggregate of several linear tranches. The elastic models can be rewritten as a
fixed peak demand plus load-shedding generators whose cost curve mirrors the
lost utility; the optimizer consumes that form, the analytic constant dropped
from the objective is tracked for welfare accounting.

Prices in EUR/MWh, quantities in MW. ``inverse_demand`` and friends are
diagnostics: in any optimization run the price is the dual of the balance
constraint, never reconstructed from these curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DemandModelError(ValueError):
    """Raised when an operation is undefined for the given demand model."""


@dataclass(frozen=True)
class DemandSegment:
    """One linear tranche of the aggregate demand curve.

    intercept: willingness to pay at zero consumption of this tranche (EUR/MWh)
    slope:     price decline per MW consumed (EUR/MWh/MW)
    width:     maximum consumption of this tranche (MW)
    """

    intercept: float
    slope: float
    width: float

    def __post_init__(self):
        if self.slope <= 0 or self.width <= 0 or self.intercept <= 0:
            raise ValueError("segment needs intercept, slope and width > 0")
        if self.intercept - self.slope * self.width < -1e-9:
            raise ValueError("willingness to pay must stay non-negative over the segment")

    @property
    def floor_price(self) -> float:
        """Willingness to pay when the tranche is fully consumed."""
        return self.intercept - self.slope * self.width


@dataclass(frozen=True)
class CrossElasticitySpec:
    """Bilinear utility coupling between nearby hours.

    Each segment's coupling coefficient is gamma_fraction times its own slope;
    hours t, k are coupled when 0 < |t-k| <= window_hours. The coupling shifts
    demand curves in neighbouring hours without changing their slopes.
    """

    gamma_fraction: float
    window_hours: int

    def __post_init__(self):
        if self.gamma_fraction <= 0:
            raise ValueError("gamma_fraction must be positive")
        if int(self.window_hours) != self.window_hours or self.window_hours < 0:
            raise ValueError("window_hours must be a non-negative integer")
        object.__setattr__(self, "window_hours", int(self.window_hours))


class DemandModel:
    """Base class of the demand-curve variants."""

    cross_elasticity: CrossElasticitySpec | None = None


@dataclass(frozen=True)
class PerfectlyInelastic(DemandModel):
    level: float

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("demand level must be non-negative")


@dataclass(frozen=True)
class Voll(DemandModel):
    """Inelastic demand up to a value of lost load (a step curve)."""

    value_of_lost_load: float = 2000.0
    peak_demand: float = 100.0

    def __post_init__(self):
        if self.value_of_lost_load <= 0 or self.peak_demand <= 0:
            raise ValueError("VOLL and peak demand must be positive")


@dataclass(frozen=True)
class LinearDemand(DemandModel):
    intercept: float = 2000.0
    slope: float = 20.0
    cross_elasticity: CrossElasticitySpec | None = None

    def __post_init__(self):
        if self.intercept <= 0 or self.slope <= 0:
            raise ValueError("intercept and slope must be positive")


@dataclass(frozen=True)
class PiecewiseLinearDemand(DemandModel):
    segments: tuple
    cross_elasticity: CrossElasticitySpec | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("need at least one segment")
        starts = [s.intercept for s in segs]
        if any(b >= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segments must have strictly decreasing start prices")


def default_pwl(scale: float = 1.0,
                cross_elasticity: CrossElasticitySpec | None = None) -> PiecewiseLinearDemand:
    """Three-segment log-log approximation; -5% elasticity at 100 EUR/MWh.

    ``scale`` multiplies intercepts and slopes together: 0.5 halves both
    (elasticity -10% at 100 EUR/MWh), 2.0 doubles them (-2.5%).
    """
    params = [(8000.0, 80.0, 95.0), (400.0, 40.0, 5.0), (200.0, 20.0, 10.0)]
    segs = tuple(DemandSegment(a * scale, b * scale, d) for a, b, d in params)
    return PiecewiseLinearDemand(segs, cross_elasticity=cross_elasticity)


def _segments(model: DemandModel) -> tuple[DemandSegment, ...]:
    if isinstance(model, LinearDemand):
        # the linear curve is one tranche ending where willingness to pay hits zero
        return (DemandSegment(model.intercept, model.slope,
                              model.intercept / model.slope),)
    if isinstance(model, PiecewiseLinearDemand):
        return model.segments
    raise DemandModelError(f"{type(model).__name__} has no linear segments")


def total_width(model: DemandModel) -> float:
    """Consumption at which marginal willingness to pay reaches its minimum."""
    if isinstance(model, PerfectlyInelastic):
        return model.level
    if isinstance(model, Voll):
        return model.peak_demand
    return sum(s.width for s in _segments(model))


def _demand_at_price(segments, p: float) -> float:
    return sum(min(max((s.intercept - p) / s.slope, 0.0), s.width) for s in segments)


def inverse_demand(model: DemandModel, d: float) -> float:
    """Marginal willingness to pay at aggregate consumption d (diagnostic)."""
    if isinstance(model, PerfectlyInelastic):
        raise DemandModelError("perfectly inelastic demand has no inverse demand curve")
    if d < 0:
        raise DemandModelError("consumption must be non-negative")
    if isinstance(model, Voll):
        if d > model.peak_demand + 1e-9:
            raise DemandModelError("consumption beyond the demand cap")
        return model.value_of_lost_load if d < model.peak_demand else 0.0
    if isinstance(model, LinearDemand):
        return model.intercept - model.slope * d
    segments = _segments(model)
    width = sum(s.width for s in segments)
    if d > width + 1e-9:
        raise DemandModelError("consumption beyond the aggregate demand width")
    d = min(d, width)
    # bisect on price: _demand_at_price is continuous and non-increasing in p
    hi = max(s.intercept for s in segments)
    lo = 0.0
    if d <= 0:
        return hi
    if _demand_at_price(segments, 0.0) <= d:
        return 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _demand_at_price(segments, mid) >= d:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def utility(model: DemandModel, d: float) -> float:
    """Integral of the inverse demand from 0 to d (EUR/h at consumption d MW)."""
    if isinstance(model, PerfectlyInelastic):
        raise DemandModelError("perfectly inelastic demand has no utility function")
    if d < 0:
        raise DemandModelError("consumption must be non-negative")
    if isinstance(model, Voll):
        if d > model.peak_demand + 1e-9:
            raise DemandModelError("consumption beyond the demand cap")
        return model.value_of_lost_load * d
    if isinstance(model, LinearDemand):
        return model.intercept * d - 0.5 * model.slope * d * d
    segments = _segments(model)
    if d > sum(s.width for s in segments) + 1e-9:
        raise DemandModelError("consumption beyond the aggregate demand width")
    # optimal split of d across tranches equalizes marginal willingness to pay
    p = inverse_demand(model, d)
    total = 0.0
    for s in segments:
        q = min(max((s.intercept - p) / s.slope, 0.0), s.width)
        total += s.intercept * q - 0.5 * s.slope * q * q
    return total


def segment_utility(segment: DemandSegment, d: float) -> float:
    return segment.intercept * d - 0.5 * segment.slope * d * d


def point_elasticity(model: DemandModel, p: float) -> float:
    """(dd/dp)·(p/d) on the linear piece active at price p."""
    if isinstance(model, (PerfectlyInelastic, Voll)):
        raise DemandModelError("elasticity undefined on perfectly elastic/inelastic pieces")
    segments = _segments(model)
    if p < 0 or p > max(s.intercept for s in segments):
        raise DemandModelError("price outside the demand curve's range")
    # a segment is active when its consumption responds to price at p;
    # at a kink the slope of the cheaper tranche applies
    active = [s for s in segments if s.floor_price < p <= s.intercept]
    if not active:
        raise DemandModelError(f"price {p} falls on a perfectly inelastic stretch")
    d = _demand_at_price(segments, p)
    if d <= 0:
        raise DemandModelError("zero demand at this price")
    slope_sum = sum(1.0 / s.slope for s in active)
    return -slope_sum * p / d


@dataclass(frozen=True)
class SheddingGenerator:
    """Load-shedding generator with cost linear_cost*g + quadratic_cost*g^2."""

    capacity: float
    linear_cost: float
    quadratic_cost: float


@dataclass(frozen=True)
class SheddingForm:
    """Fixed demand plus shedding generators equivalent to an elastic model.

    The substituted problem reproduces the direct formulation's dispatch and
    duals; its objective differs by ``constant_per_hour`` (times the snapshot
    weight) which is the utility of consuming the full fixed demand.
    """

    fixed_demand: float
    shedders: tuple[SheddingGenerator, ...]
    constant_per_hour: float


def segment_shedding(segment: DemandSegment) -> SheddingGenerator:
    return SheddingGenerator(capacity=segment.width,
                             linear_cost=segment.floor_price,
                             quadratic_cost=0.5 * segment.slope)


def to_load_shedding_form(model) -> SheddingForm:
    """Rewrite an elastic demand model (or a single segment) as shedding."""
    if isinstance(model, DemandSegment):
        return SheddingForm(
            fixed_demand=model.width,
            shedders=(segment_shedding(model),),
            constant_per_hour=segment_utility(model, model.width))
    if isinstance(model, PerfectlyInelastic):
        raise DemandModelError("no load-shedding substitution exists for perfectly "
                               "inelastic demand")
    if isinstance(model, Voll):
        shedder = SheddingGenerator(model.peak_demand, model.value_of_lost_load, 0.0)
        return SheddingForm(model.peak_demand, (shedder,),
                            model.value_of_lost_load * model.peak_demand)
    segments = _segments(model)
    shedders = tuple(segment_shedding(s) for s in segments)
    const = sum(segment_utility(s, s.width) for s in segments)
    return SheddingForm(sum(s.width for s in segments), shedders, const)


@dataclass(frozen=True)
class CrossElasticTerms:
    """Cross-hour coupling terms for the shedding-substituted objective.

    ``pairs`` lists unordered snapshot pairs (t, k), t < k, inside the window.
    Per segment c and pair, the minimization objective gains
    D_c*gamma_c*(g_t + g_k) - gamma_c*g_t*g_k; ``linear_cost`` accumulates the
    linear part per segment and snapshot. ``dropped_constant_per_pair`` is the
    utility constant removed from the objective for one pair of one segment.
    """

    gammas: tuple[float, ...]
    pairs: tuple[tuple[int, int], ...]
    linear_cost: np.ndarray           # (n_segments, T)
    dropped_constants: tuple[float, ...]   # per segment: gamma_c * D_c^2 * n_pairs

    @property
    def total_dropped_constant(self) -> float:
        return float(sum(self.dropped_constants))


def hessian_min_form(segments, spec: CrossElasticitySpec, n_snapshots: int, c: int) -> np.ndarray:
    """Minimization-form utility Hessian block for segment c: slope*I - gamma*A."""
    seg = segments[c]
    gamma = spec.gamma_fraction * seg.slope
    h = np.zeros((n_snapshots, n_snapshots))
    np.fill_diagonal(h, seg.slope)
    for t in range(n_snapshots):
        lo = max(0, t - spec.window_hours)
        hi = min(n_snapshots, t + spec.window_hours + 1)
        for k in range(lo, hi):
            if k != t:
                h[t, k] = -gamma
    return h


def check_concavity(segments, spec: CrossElasticitySpec, n_snapshots: int,
                    tol: float = 1e-8) -> float:
    """Smallest eigenvalue of the minimization-form Hessian over all segments.

    Non-negative (within tol) means the maximization objective stays concave.
    """
    worst = math.inf
    for c in range(len(segments)):
        h = hessian_min_form(segments, spec, n_snapshots, c)
        worst = min(worst, float(np.linalg.eigvalsh(h)[0]))
    return worst


def cross_elastic_terms(spec: CrossElasticitySpec, segments, time_grid) -> CrossElasticTerms:
    """Build the substituted cross-elasticity terms for a time grid."""
    segments = tuple(segments)
    n = len(time_grid)
    if check_concavity(segments, spec, n) < -1e-8:
        raise ValueError("cross-elasticity coefficients destroy concavity; "
                         "reduce gamma_fraction or the window")
    pairs = tuple((t, k) for t in range(n)
                  for k in range(t + 1, min(n, t + spec.window_hours + 1)))
    gammas = tuple(spec.gamma_fraction * s.slope for s in segments)
    linear = np.zeros((len(segments), n))
    neighbours = np.zeros(n)
    for t, k in pairs:
        neighbours[t] += 1
        neighbours[k] += 1
    for c, seg in enumerate(segments):
        linear[c, :] = gammas[c] * seg.width * neighbours
    dropped = tuple(g * s.width ** 2 * len(pairs) for g, s in zip(gammas, segments))
    return CrossElasticTerms(gammas, pairs, linear, dropped)
