"""Per-ticket valuation and each buyer's maximal price."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DivergentValuation, QuadratureFailure
from .model import (
    BuyerSpec,
    Empirical,
    ExpConcave,
    Exponential,
    MarketParams,
    MevModel,
    PointMass,
    RiskNeutral,
    RiskProfile,
    Uniform,
)
from .pbs import effective_market

QUAD_TOL = 1e-10
TAIL_MASS = 1e-12
BISECT_TOL = 1e-9
BISECT_MAX_ITER = 200
# Steep net-value curves need more than the price tolerance before the
# returned price is also near-zero in value.
BISECT_VALUE_TOL = 1e-10
TIE_TOL = 1e-9

R0_BOUNDARY = "r0-concave-boundary"


def expected_gain(profile: RiskProfile, mev: MevModel, price: float) -> float:
    """E[Pi(R - price)]."""
    price = float(price)
    if isinstance(profile, RiskNeutral):
        return mev.mean() - price
    if isinstance(mev, PointMass):
        return float(profile(mev.mu - price))
    if isinstance(mev, Empirical):
        return float(np.mean(profile(mev.samples - price)))
    if isinstance(profile, ExpConcave) and not profile.clip:
        return _cara_gain(profile.alpha, mev, price)
    support_lo = mev.a if isinstance(mev, Uniform) else 0.0
    # A clipped Pi vanishes below price, so only [price, hi] contributes.
    lo = max(support_lo, price) if profile.clip else support_lo
    pi = profile.scalar
    return _quad(lambda x: pi(x - price), mev, lo, price, f"{type(profile).__name__}, price={price}")


def _cara_gain(alpha: float, mev: MevModel, price: float) -> float:
    # E[(1 - e^{-a(R-P)})/a] = (1 - e^{aP} E[e^{-aR}])/a. Integrating the
    # unfactored form loses absolute accuracy once e^{aP} is large.
    if isinstance(mev, Exponential):
        log_l = -math.log1p(alpha * mev.mean_)
    elif isinstance(mev, Uniform):
        w = alpha * (mev.b - mev.a)
        log_l = -alpha * mev.a + (math.log(-math.expm1(-w) / w) if w > 0 else 0.0)
    else:
        lap = _quad(lambda x: math.exp(-alpha * x), mev, 0.0, None, f"Laplace transform at {alpha}")
        if lap <= 0:
            raise QuadratureFailure(f"Laplace transform of {mev!r} underflows at {alpha}")
        log_l = math.log(lap)
    return -math.expm1(alpha * price + log_l) / alpha


def _quad(fn, mev: MevModel, lo: float, kink: float | None, what: str) -> float:
    """Integrate ``fn * pdf`` over ``[lo, support top]``."""
    dist = mev.dist()
    hi = mev.b if isinstance(mev, Uniform) else math.inf
    if hi <= lo:
        return 0.0
    pdf = mev.pdf

    def integrand(x):
        return fn(x) * pdf(x)

    # Split at interior quantiles so quad sees the bulk of the mass; the last
    # piece runs to +inf on unbounded support.
    inner = {float(dist.ppf(q)) for q in (0.5, 0.9, 0.99, 0.9999, 1.0 - TAIL_MASS)}
    if kink is not None:
        inner.add(kink)
    cuts = [lo, *sorted(x for x in inner if lo < x < hi), hi]

    total = 0.0
    err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, abserr = integrate.quad(
            integrand, a, b, epsabs=QUAD_TOL / len(cuts), epsrel=1e-12, limit=200, full_output=1
        )[:2]
        total += val
        err += abserr
    if not math.isfinite(total) or err > QUAD_TOL:
        raise QuadratureFailure(
            f"quadrature error estimate {err:.3g} exceeds {QUAD_TOL:g} ({what}, {mev!r})"
        )
    return total


def net_value(buyer: BuyerSpec, tickets: int, price: float) -> float:
    """(1/N) E[Pi(R - P)] - r P: the per-ticket value of holding at ``price``."""
    return expected_gain(buyer.risk, buyer.mev, price) / tickets - buyer.cost_of_capital * price


def max_price(buyer: BuyerSpec, tickets: int, method: str = "auto") -> float:
    """Largest P >= 0 with nonnegative net value.

    ``method="bisection"`` forces the numeric path even for risk-neutral
    buyers, which is how the closed form gets cross-checked.
    """
    r = buyer.cost_of_capital
    mean = buyer.mev.mean()
    if isinstance(buyer.risk, RiskNeutral):
        if method != "bisection":
            return mean / (1.0 + r * tickets)
        if r == 0:
            return _bisect(buyer, tickets, mean)
    elif r == 0:
        if not buyer.risk.clip:
            # Unclipped concave Pi: Jensen keeps the root below the mean.
            return _bisect(buyer, tickets, mean)
        # Clipped Pi is nonnegative, so every price is feasible; use the top of the support.
        top = buyer.mev.ess_sup()
        if math.isinf(top):
            raise DivergentValuation(
                f"buyer {buyer.id!r}: zero cost of capital with unbounded MEV support"
            )
        return top
    upper = expected_gain(buyer.risk, buyer.mev, 0.0) / (r * tickets)
    if not buyer.risk.clip:
        upper = min(upper, mean)
    return _bisect(buyer, tickets, upper)


def _bisect(buyer: BuyerSpec, tickets: int, upper: float) -> float:
    if upper <= 0:
        return 0.0
    if net_value(buyer, tickets, upper) >= 0:
        return upper
    lo, hi = 0.0, upper
    v_lo = net_value(buyer, tickets, lo)
    for _ in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_TOL and v_lo <= BISECT_VALUE_TOL:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        v = net_value(buyer, tickets, mid)
        if v >= 0:
            lo, v_lo = mid, v
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ValuationResult:
    per_buyer: dict[str, float]
    p_top: float
    p_second: float
    top_set: frozenset[str]
    tie_tolerance: float = TIE_TOL
    flags: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_buyer": dict(self.per_buyer),
            "p_top": self.p_top,
            "p_second": self.p_second,
            "top_set": sorted(self.top_set),
            "tie_tolerance": self.tie_tolerance,
            "flags": {k: list(v) for k, v in sorted(self.flags.items())},
        }


def rank(per_buyer: dict[str, float], tie_tolerance: float = TIE_TOL) -> tuple[float, float, frozenset[str]]:
    """(p_top, p_second, top_set) from a map of maximal prices."""
    p_top = max(per_buyer.values())
    slack = tie_tolerance * max(1.0, p_top)
    top = frozenset(b for b, p in per_buyer.items() if abs(p - p_top) <= slack)
    rest = [p for b, p in per_buyer.items() if b not in top]
    if len(top) > 1 or not rest:
        p_second = p_top
    else:
        p_second = max(rest)
    return p_top, p_second, top


def rank_valuations(market: MarketParams, tie_tolerance: float = TIE_TOL) -> ValuationResult:
    """Maximal prices for every buyer plus the top price, runner-up and top set.

    PBS markets are first reduced to their derived payoff laws.
    """
    market = effective_market(market)
    per_buyer = {}
    flags = {}
    for b in market.buyers:
        per_buyer[b.id] = max_price(b, market.tickets)
        if b.risk.concave and b.risk.clip and b.cost_of_capital == 0:
            flags[b.id] = [R0_BOUNDARY]
    p_top, p_second, top = rank(per_buyer, tie_tolerance)
    return ValuationResult(per_buyer, p_top, p_second, top, tie_tolerance, flags)
