"""Seeded slot-by-slot Monte Carlo of the execution-ticket lottery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .equilibrium import Equilibrium
from .errors import InsufficientData, InvalidHoldings
from .model import MarketParams, SlotOutcome
from .pbs import draw_abilities, substream

TRACE_LIMIT = 10_000
MIN_DELAYS = 1_000
GOF_ALPHA = 0.01


@dataclass(frozen=True)
class SimReport:
    slots: int
    seed: int
    price: float
    wins: dict[str, int]
    protocol_revenue: float
    realized_mev_total: float
    chi_hat: float | None
    chi_hat_stderr: float | None
    chi_analytic: float
    per_buyer_pnl: dict[str, float]
    win_delay_histogram: dict[int, int]
    outsource_fraction: float
    trace: list[SlotOutcome] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "slots": self.slots,
            "seed": self.seed,
            "price": self.price,
            "wins": dict(self.wins),
            "protocol_revenue": self.protocol_revenue,
            "realized_mev_total": self.realized_mev_total,
            "chi_hat": self.chi_hat,
            "chi_hat_stderr": self.chi_hat_stderr,
            "chi_analytic": self.chi_analytic,
            "per_buyer_pnl": dict(self.per_buyer_pnl),
            "win_delay_histogram": {str(k): v for k, v in sorted(self.win_delay_histogram.items())},
            "outsource_fraction": self.outsource_fraction,
        }
        if self.trace is not None:
            d["trace"] = [vars(o) for o in self.trace]
        return d


def run_slots(
    market: MarketParams,
    eq: Equilibrium,
    slots: int,
    seed: int,
    trace: bool | None = None,
) -> SimReport:
    """Simulate ``slots`` lotteries at the equilibrium price.

    Winner draws, MEV draws, PBS ability draws and the tagged-ticket delay
    tracker each use their own named substream of ``seed``.
    """
    if slots < 1:
        raise ValueError(f"slots must be positive, got {slots}")
    n = market.tickets
    ids = market.ids
    k = np.array([eq.holdings.get(b, 0.0) for b in ids], dtype=float)
    if abs(k.sum() - n) > 1e-9 or np.any(k < 0):
        raise InvalidHoldings(f"holdings sum to {k.sum()}, expected {n}")
    price = eq.price
    if trace is None:
        trace = slots <= TRACE_LIMIT

    probs = k / k.sum()
    winners = substream(seed, "winner").choice(len(ids), size=slots, p=probs)

    exercised = np.ones(slots, dtype=bool)
    if market.pbs is None:
        realized = np.empty(slots)
        children = substream(seed, "mev").spawn(len(ids))
        for i, b in enumerate(market.buyers):
            mask = winners == i
            cnt = int(mask.sum())
            if cnt:
                realized[mask] = b.mev.sample(children[i], cnt)
        outsource = 0.0
    else:
        cfg = market.pbs
        abil = draw_abilities(market, slots, seed=seed)
        rows = np.arange(slots)
        own = abil[rows, winners]
        if cfg.exclude_holder:
            gamma = np.empty(slots)
            for i in range(len(ids)):
                mask = winners == i
                if mask.any():
                    gamma[mask] = cfg.gamma_rule(np.delete(abil[mask], i, axis=1))
        else:
            gamma = cfg.gamma_rule(abil)
        # Ties go to PBS, matching the derived-law outsource convention.
        exercised = own > gamma
        realized = np.where(exercised, own, gamma)
        outsource = float(np.mean(~exercised))

    pnl = realized - price
    wins = np.bincount(winners, minlength=len(ids))
    pnl_by = np.bincount(winners, weights=pnl, minlength=len(ids))
    total = float(realized.sum())
    revenue = slots * price
    if total > 0:
        chi_hat = revenue / total
        mean_r = total / slots
        sd = float(realized.std(ddof=1)) if slots > 1 else 0.0
        chi_se = chi_hat * sd / (mean_r * math.sqrt(slots))
    else:
        chi_hat = chi_se = None

    hist = _tagged_delays(n, slots, seed)

    outcomes = None
    if trace:
        before = k[winners] * price
        after = (k[winners] - 1) * price + realized
        outcomes = [
            SlotOutcome(t, ids[w], float(r), float(p), float(v0), float(v1), bool(e))
            for t, (w, r, p, v0, v1, e) in enumerate(zip(winners, realized, pnl, before, after, exercised))
        ]

    return SimReport(
        slots=slots,
        seed=seed,
        price=price,
        wins={b: int(w) for b, w in zip(ids, wins)},
        protocol_revenue=revenue,
        realized_mev_total=total,
        chi_hat=chi_hat,
        chi_hat_stderr=chi_se,
        chi_analytic=eq.chi,
        per_buyer_pnl={b: float(x) for b, x in zip(ids, pnl_by)},
        win_delay_histogram=hist,
        outsource_fraction=outsource,
        trace=outcomes,
    )


def _tagged_delays(tickets: int, slots: int, seed: int) -> dict[int, int]:
    # A tagged ticket wins each slot w.p. 1/N; on a win the re-issued ticket is tagged.
    u = substream(seed, "delay").random(slots)
    hits = np.flatnonzero(u < 1.0 / tickets) + 1
    delays = np.diff(np.concatenate(([0], hits)))
    vals, counts = np.unique(delays, return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, counts)}


class DelayStats(NamedTuple):
    mean_delay: float
    gof_statistic: float
    p_value: float
    passed: bool


def win_delay_stats(report: SimReport, tickets: int) -> DelayStats:
    """Compare tagged-ticket delays with Geometric(1/N) by a chi-square test."""
    hist = report.win_delay_histogram
    obs_n = sum(hist.values())
    if obs_n < MIN_DELAYS:
        raise InsufficientData(f"{obs_n} completed delays, need at least {MIN_DELAYS}")
    mean_delay = sum(d * c for d, c in hist.items()) / obs_n
    p = 1.0 / tickets
    if tickets == 1:
        ok = set(hist) == {1}
        return DelayStats(mean_delay, 0.0 if ok else math.inf, 1.0 if ok else 0.0, ok)

    # Bins 1..K with expected count >= 5, plus a tail bin for delays > K.
    expected, observed = [], []
    d = 1
    while obs_n * p * (1 - p) ** (d - 1) >= 5:
        expected.append(obs_n * p * (1 - p) ** (d - 1))
        observed.append(hist.get(d, 0))
        d += 1
    kmax = d - 1
    tail_exp = obs_n * (1 - p) ** kmax
    tail_obs = sum(c for v, c in hist.items() if v > kmax)
    if tail_exp < 5 and expected:
        expected[-1] += tail_exp
        observed[-1] += tail_obs
    else:
        expected.append(tail_exp)
        observed.append(tail_obs)
    expected = np.array(expected)
    observed = np.array(observed, dtype=float)
    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = len(expected) - 1
    pval = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return DelayStats(mean_delay, stat, pval, pval >= GOF_ALPHA)
