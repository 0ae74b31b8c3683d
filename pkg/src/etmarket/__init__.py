"""Equilibrium prices, holdings and MEV capture for execution-ticket markets."""

from .equilibrium import (
    Equilibrium,
    buyer_objective,
    investor_threshold,
    mev_capture,
    prop9_threshold,
    solve_equilibrium,
)
from .model import (
    BuyerSpec,
    Empirical,
    ExpConcave,
    Exponential,
    LogNormal,
    MarketParams,
    PointMass,
    PowerConcave,
    RiskNeutral,
    SlotOutcome,
    Uniform,
    eval_pi,
    mev_mean,
    mev_sample,
)
from .pbs import DerivedPayoff, MaxHaircut, PbsConfig, SecondMax, derive_payoffs, gamma_eval, pbs_market
from .sim import SimReport, run_slots, win_delay_stats
from .valuation import ValuationResult, expected_gain, max_price, net_value, rank_valuations

__version__ = "0.1.0"
