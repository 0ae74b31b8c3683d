"""Equilibrium selection, MEV capture, and the large-investor threshold."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPartition, ValidationError, ZeroMevMarket
from .model import BuyerSpec, MarketParams
from .pbs import effective_market
from .valuation import R0_BOUNDARY, TIE_TOL, ValuationResult, net_value, rank_valuations


@dataclass(frozen=True)
class Equilibrium:
    price: float
    holdings: dict[str, float]
    chi: float
    selection_lambda: float = 0.0
    regime_tags: frozenset[str] = frozenset()
    valuation: ValuationResult | None = field(default=None, compare=False)

    @property
    def holders(self) -> list[str]:
        return sorted(b for b, k in self.holdings.items() if k > 0)

    def to_dict(self) -> dict:
        d = {
            "price": self.price,
            "holdings": dict(self.holdings),
            "chi": self.chi,
            "selection_lambda": self.selection_lambda,
            "regime_tags": sorted(self.regime_tags),
        }
        if self.valuation is not None:
            d["valuation"] = self.valuation.to_dict()
        return d


def largest_remainder(total: int, ids: list[str]) -> dict[str, float]:
    """Integer split of ``total`` across ``ids``; earlier ids get the remainder."""
    base, rem = divmod(total, len(ids))
    return {b: float(base + (1 if i < rem else 0)) for i, b in enumerate(ids)}


def solve_equilibrium(
    market: MarketParams,
    lam: float = 0.0,
    rounding: str | None = None,
    tie_tolerance: float = TIE_TOL,
) -> Equilibrium:
    """Price ``p_second + lam * (p_top - p_second)`` with the top set holding all tickets.

    ``rounding="largest_remainder"`` gives integer holdings instead of the
    equal real split.
    """
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    eff = effective_market(market)
    val = rank_valuations(eff, tie_tolerance)
    price = val.p_second + lam * (val.p_top - val.p_second)

    n = eff.tickets
    top = [b for b in eff.ids if b in val.top_set]
    if rounding == "largest_remainder":
        split = largest_remainder(n, top)
    elif rounding is None:
        split = {b: n / len(top) for b in top}
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    holdings = {b: split.get(b, 0.0) for b in eff.ids}

    tags = set()
    if len(top) == len(eff.buyers) and len(top) > 1:
        tags.add("homogeneous")
    if len(top) == 1:
        tags.add("centralized")
    if any(R0_BOUNDARY in v for v in val.flags.values()):
        tags.add(R0_BOUNDARY)
    if market.pbs is not None:
        tags.add("pbs")

    chi = _capture(price, holdings, eff)
    return Equilibrium(price, holdings, chi, lam, frozenset(tags), val)


def winner_mean(holdings: dict[str, float], market: MarketParams) -> float:
    """E[R] of the lottery winner: the holdings-weighted mixture mean."""
    n = market.tickets
    return sum(k / n * market.buyer(b).mev.mean() for b, k in holdings.items() if k)


def _capture(price: float, holdings: dict[str, float], market: MarketParams) -> float:
    m = winner_mean(holdings, market)
    if m == 0:
        raise ZeroMevMarket("winner mean MEV is zero; capture ratio undefined")
    return price / m


def mev_capture(eq: Equilibrium, market: MarketParams) -> float:
    """Price over the expected MEV of the winning holder."""
    return _capture(eq.price, eq.holdings, effective_market(market))


def investor_threshold(
    market: MarketParams, investor_ids, investor_payoff_mean: float
) -> tuple[float, bool]:
    """Cost-of-capital bound below which zero-ability investors take every ticket.

    Returns ``(bound, dominates)``; ``market`` carries each non-investor's
    payoff law (already PBS-derived where relevant).
    """
    investors = set(investor_ids)
    ids = set(market.ids)
    if not investors:
        raise InvalidPartition("investor set is empty")
    if not investors <= ids:
        raise InvalidPartition(f"unknown investor ids: {sorted(investors - ids)}")
    if investors == ids:
        raise InvalidPartition("investor set covers every buyer")

    n = market.tickets
    terms = []
    for b in market.buyers:
        if b.id in investors:
            continue
        m = b.mev.mean()
        if m <= 0:
            raise InvalidPartition(f"non-investor {b.id!r} has zero mean payoff")
        terms.append((1 + b.cost_of_capital * n) * investor_payoff_mean / m - 1)
    bound = min(terms) / n
    dominates = all(market.buyer(i).cost_of_capital < bound for i in investors)
    return bound, dominates


# Alternate public name kept for API compatibility.
prop9_threshold = investor_threshold


def buyer_objective(buyer: BuyerSpec, k: int, market: MarketParams, price: float) -> float:
    """E[Pi(P&L)] - r P k for ``k`` tickets.

    The holder wins with probability k/N and Pi(0) = 0, so this equals
    ``k * net_value``.
    """
    if not 0 <= k <= market.tickets:
        raise ValidationError(f"k must lie in [0, {market.tickets}], got {k}")
    return k * net_value(buyer, market.tickets, price)

