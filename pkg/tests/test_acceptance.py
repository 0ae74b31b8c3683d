"""Acceptance criteria AC1 to AC10, one summary line each (see the terminal summary)."""

import dataclasses
import functools
import itertools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import make_market
from etmarket.equilibrium import buyer_objective, investor_threshold, solve_equilibrium
from etmarket.model import (
    BuyerSpec,
    Empirical,
    ExpConcave,
    Exponential,
    LogNormal,
    MarketParams,
    PointMass,
    PowerConcave,
    RiskNeutral,
    Uniform,
    eval_pi,
    scaled,
)
from etmarket.pbs import MaxHaircut, PbsConfig, SecondMax, derive_payoffs, effective_market, investor_payoff_mean
from etmarket.sim import run_slots, win_delay_stats
from etmarket.valuation import expected_gain, max_price, net_value, rank_valuations
from etmarket.verify import builtin_suite


def builtin(name):
    return next(s for s in builtin_suite() if s.name == name)


# ---------------------------------------------------------------- AC1


def test_ac1_total_capture(criterion):
    n, b = 8, 4
    market = make_market(n, [(f"b{i}", 0.0, Exponential(1.0)) for i in range(b)])
    eq = solve_equilibrium(market)
    criterion("AC1", abs(eq.chi - 1.0) <= 1e-12, f"chi={eq.chi!r}", "chi")
    criterion("AC1", all(k == n / b for k in eq.holdings.values()), f"holdings={eq.holdings}", "holdings")
    rep = run_slots(market, eq, 100_000, seed=1)
    z = (rep.chi_hat - 1.0) / rep.chi_hat_stderr
    criterion("AC1", abs(z) <= 3, f"chi_hat={rep.chi_hat:.5f} z={z:.2f}", "simulation")


# ---------------------------------------------------------------- AC2

P_GRID = np.linspace(0.0, 0.999, 40)


@pytest.mark.parametrize("n", [9, 100])
def test_ac2_partial_capture_strictly_concave(criterion, n):
    """ExpConcave on all of R: strictly concave, so the gap applies at every price below the mean."""
    risk, mev = ExpConcave(1.0, clip=False), Exponential(1.0)
    market = make_market(n, [(f"b{i}", 0.01, mev, risk) for i in range(4)])
    eq = solve_equilibrium(market)
    criterion("AC2", eq.chi < 1 - 1e-6, f"N={n} chi={eq.chi:.6f}", f"chi<1 N={n}")
    criterion("AC2", all(abs(k - n / 4) <= 1e-12 for k in eq.holdings.values()), "", f"holdings N={n}")
    gaps = [eval_pi(risk, mev.mean() - p) - expected_gain(risk, mev, p) for p in P_GRID]
    criterion("AC2", min(gaps) > 0, f"min gap={min(gaps):.3g}", f"jensen N={n}")
    criterion("AC2", max_price(market.buyers[0], n) < mev.mean(), "", f"max_price<mean N={n}")


def test_ac2_partial_capture_clipped(criterion):
    """Profit clipped at zero: capture still partial at N=100 with r=0.01."""
    n = 100
    market = make_market(n, [(f"b{i}", 0.01, Exponential(1.0), ExpConcave(1.0)) for i in range(4)])
    eq = solve_equilibrium(market)
    criterion("AC2", eq.chi < 1 - 1e-6, f"clipped chi={eq.chi:.6f}", "chi<1 clipped")
    criterion("AC2", all(abs(k - 25) <= 1e-12 for k in eq.holdings.values()), "", "holdings clipped")
    criterion("AC2", max_price(market.buyers[0], n) < 1.0, "", "max_price<mean clipped")


# ---------------------------------------------------------------- AC3


def test_ac3_second_lowest_cost(criterion):
    market = make_market(100, [("b1", 0.001, PointMass(1.0)), ("b2", 0.002, PointMass(1.0)),
                               ("b3", 0.002, PointMass(1.0))])
    eq = solve_equilibrium(market)
    criterion("AC3", abs(eq.chi - 1 / 1.2) <= 1e-9, f"chi={eq.chi!r}", "chi")
    criterion("AC3", eq.holdings == {"b1": 100.0, "b2": 0.0, "b3": 0.0}, f"{eq.holdings}", "holdings")


# ---------------------------------------------------------------- AC4


def test_ac4_centralized_best_buyer(criterion):
    market = make_market(5, [("b1", 0.0, PointMass(2.0)), ("b2", 0.0, PointMass(1.0))])
    eq = solve_equilibrium(market)
    criterion("AC4", abs(eq.chi - 0.5) <= 1e-12, f"chi={eq.chi!r}", "chi")
    criterion("AC4", eq.holdings["b1"] == 5 and eq.holders == ["b1"], f"{eq.holdings}", "k1=N")


# ---------------------------------------------------------------- AC5


def test_ac5_pbs_reduces_to_hand_built(criterion):
    rs = [0.001, 0.002, 0.003]
    pbs = PbsConfig((PointMass(5.0), PointMass(3.0)), SecondMax())
    with_pbs = make_market(100, [(f"i{j}", r, PointMass(0.0)) for j, r in enumerate(rs)], pbs)
    # Second highest of {0, 0, 0, 5, 3} is 3, paid to every holder.
    hand = make_market(100, [(f"i{j}", r, PointMass(3.0)) for j, r in enumerate(rs)])
    a, b = solve_equilibrium(with_pbs), solve_equilibrium(hand)
    same = (
        abs(a.price - b.price) <= 1e-12
        and abs(a.chi - b.chi) <= 1e-12
        and all(abs(a.holdings[k] - b.holdings[k]) <= 1e-12 for k in b.holdings)
    )
    criterion("AC5", same, f"price {a.price!r} vs {b.price!r}, chi {a.chi!r} vs {b.chi!r}")


# ---------------------------------------------------------------- AC6


def _investor_share(market, ids):
    eq = solve_equilibrium(market)
    return sum(eq.holdings[i] for i in ids)


@pytest.mark.parametrize("name", ["pbs_large_investors_threshold", "pbs_large_investors_lowest_cost"])
def test_ac6_investor_dominance_flips(criterion, name):
    sc = builtin(name)
    market = sc.market
    ids = sc.expect["investors"]["ids"]
    eff = effective_market(market)
    bound, dom = investor_threshold(eff, ids, investor_payoff_mean(market))
    n = market.tickets
    criterion("AC6", dom and abs(_investor_share(market, ids) - n) <= 1e-9, f"{name} bound={bound:.5g}",
              f"{name} holds all")

    # Perturb one investor above the bound, then back below it.
    victim = ids[0]
    above = market.with_buyer(victim, cost_of_capital=bound + 1e-4)
    _, dom_above = investor_threshold(effective_market(above), ids, investor_payoff_mean(above))
    criterion("AC6", not dom_above and _investor_share(above, [victim]) == 0, "", f"{name} flips above")

    below = market.with_buyer(victim, cost_of_capital=max(bound - 1e-4, 0.0))
    _, dom_below = investor_threshold(effective_market(below), ids, investor_payoff_mean(below))
    criterion("AC6", dom_below and abs(_investor_share(below, ids) - n) <= 1e-9, "", f"{name} restored below")


# ---------------------------------------------------------------- AC7


def test_ac7_top_set_is_valuation_argmax(criterion):
    market = builtin("pbs_builders_highest_valuation").market
    derived = {d.buyer_id: d.payoff.mean() for d in derive_payoffs(market)}
    n = market.tickets
    scores = {b.id: derived[b.id] / (1 + b.cost_of_capital * n) for b in market.buyers}
    best = max(scores.values())
    scan = sorted(b for b, s in scores.items() if s == best)
    got = sorted(solve_equilibrium(market).valuation.top_set)
    criterion("AC7", got == scan, f"top_set={got} scan={scan}")


# ---------------------------------------------------------------- AC8

GRID = list(itertools.product([0.5, 3.0, 40.0, 1e-3, 1234.5], [0.0, 0.003, 0.05, 1.0], [1, 64]))[::2]


def test_ac8_bisection_matches_closed_form(criterion):
    assert len(GRID) == 20
    worst = 0.0
    for mean, r, n in GRID:
        b = BuyerSpec("b", r, RiskNeutral(), Exponential(mean))
        worst = max(worst, abs(max_price(b, n, method="bisection") - mean / (1 + r * n)))
    criterion("AC8", worst <= 1e-9, f"max |diff|={worst:.3g} over {len(GRID)} points")


# ---------------------------------------------------------------- AC9


def test_ac9_geometric_delay(criterion):
    n, slots = 16, 200_000
    market = make_market(n, [("a", 0.0, PointMass(1.0)), ("b", 0.0, PointMass(1.0))])
    rep = run_slots(market, solve_equilibrium(market), slots, seed=2024, trace=False)
    hist = rep.win_delay_histogram
    m = sum(hist.values())
    mean = sum(d * c for d, c in hist.items()) / m
    se = math.sqrt(1 - 1 / n) * n / math.sqrt(m)
    criterion("AC9", abs(mean - n) <= 3 * se, f"mean={mean:.3f} se={se:.3f}", "mean")
    stats = win_delay_stats(rep, n)
    criterion("AC9", stats.passed, f"p={stats.p_value:.3f}", "gof")
    control = win_delay_stats(rep, n // 2)
    criterion("AC9", not control.passed, f"control p={control.p_value:.2g}", "wrong-law control")


# ---------------------------------------------------------------- AC10

CASES = 200
PROPS = settings(
    max_examples=CASES,
    deadline=None,
    derandomize=True,
    database=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much, HealthCheck.data_too_large],
)

pos = st.floats(0.05, 20.0, allow_nan=False)

rn_mev = st.one_of(
    pos.map(PointMass),
    pos.map(Exponential),
    st.tuples(st.floats(-1.5, 2.0), st.floats(0.05, 1.0)).map(lambda t: LogNormal(*t)),
    st.tuples(st.floats(0.0, 5.0), pos).map(lambda t: Uniform(t[0], t[0] + t[1])),
    st.lists(st.floats(0.0, 20.0), min_size=1, max_size=12).filter(lambda xs: sum(xs) > 0).map(Empirical),
)
fast_concave = st.one_of(
    st.floats(0.1, 3.0).map(ExpConcave),
    st.floats(0.1, 3.0).map(lambda a: ExpConcave(a, clip=False)),
    st.floats(0.2, 1.0).map(PowerConcave),
)
# Concave profiles only with laws that avoid quadrature, to keep the suite fast.
fast_pair = st.one_of(
    st.tuples(st.just(RiskNeutral()), rn_mev, st.floats(0.0, 0.05)),
    st.tuples(fast_concave, st.one_of(pos.map(PointMass), rn_mev.filter(lambda m: isinstance(m, Empirical))),
              st.floats(1e-4, 0.05)),
)


@st.composite
def markets(draw, pair=fast_pair, max_buyers=4):
    n = draw(st.integers(1, 200))
    k = draw(st.integers(1, max_buyers))
    buyers = []
    for i in range(k):
        risk, mev, r = draw(pair)
        buyers.append(BuyerSpec(f"b{i}", r, risk, mev))
    return MarketParams(n, tuple(buyers))


@st.composite
def sim_markets(draw):
    market = draw(markets(max_buyers=3))
    if draw(st.booleans()):
        abil = draw(st.lists(st.one_of(pos.map(PointMass), pos.map(Exponential)), min_size=0, max_size=2))
        rule = draw(st.one_of(st.just(SecondMax()), st.floats(0.0, 0.5).map(MaxHaircut)))
        market = dataclasses.replace(market, pbs=PbsConfig(tuple(abil), rule, joint_samples=500,
                                                           seed=draw(st.integers(0, 99))))
    return market


def _ok(eq):
    # Markets where every derived mean is zero have no capture ratio; skip them.
    return eq is not None


def _solve(market, lam=0.0):
    from etmarket.errors import ZeroMevMarket

    try:
        return solve_equilibrium(market, lam)
    except ZeroMevMarket:
        return None


def run_property(criterion, label, prop):
    count = [0]

    @functools.wraps(prop)
    def counted(*a, **k):
        count[0] += 1
        prop(*a, **k)

    wrapped = PROPS(given(*prop._strategies)(counted))
    try:
        wrapped()
        ok, detail = count[0] >= CASES, f"{count[0]} cases"
    except Exception as e:  # noqa: BLE001
        ok, detail = False, f"{type(e).__name__}: {str(e).splitlines()[0][:160]}"
    criterion("AC10", ok, detail, label)


def strategies(*s):
    def deco(fn):
        fn._strategies = s
        return fn

    return deco


@strategies(markets(), st.floats(0.0, 1.0))
def prop_price_band(market, lam):
    eq = _solve(market, lam)
    if eq is None:
        return
    v = eq.valuation
    assert v.p_second - 1e-12 <= eq.price <= v.p_top + 1e-12
    assert v.p_second <= v.p_top


@strategies(markets(), st.floats(0.0, 1.0))
def prop_market_clearing(market, lam):
    eq = _solve(market, lam)
    if eq is None:
        return
    assert abs(sum(eq.holdings.values()) - market.tickets) <= 1e-12
    assert all(k >= 0 for k in eq.holdings.values())
    assert set(eq.holders) == set(eq.valuation.top_set)


@strategies(markets(max_buyers=1), st.floats(0.0, 30.0), st.data())
def prop_objective_linear(market, price, data):
    b = market.buyers[0]
    k = data.draw(st.integers(0, market.tickets))
    one = buyer_objective(b, 1, market, price)
    assert buyer_objective(b, k, market, price) == pytest.approx(k * one, rel=1e-12, abs=1e-12)


# x**gamma has infinite slope at 0, so on an atom the objective is not
# Lipschitz near the root and no float price meets a 1e-9 objective band.
# That profile is drawn only with continuous laws here.
smooth_pair = st.one_of(
    st.tuples(st.just(RiskNeutral()), rn_mev, st.floats(0.0, 0.05)),
    st.tuples(st.one_of(st.floats(0.1, 3.0).map(ExpConcave), st.floats(0.1, 3.0).map(lambda a: ExpConcave(a, clip=False))),
              st.one_of(pos.map(PointMass), rn_mev.filter(lambda m: isinstance(m, Empirical))), st.floats(1e-4, 0.05)),
    st.tuples(st.floats(0.2, 1.0).map(PowerConcave), st.one_of(pos.map(Exponential), st.tuples(
        st.floats(0.0, 2.0), pos).map(lambda t: Uniform(t[0], t[0] + t[1]))), st.floats(1e-3, 0.05)),
)


@strategies(markets(pair=smooth_pair), st.floats(0.0, 1.0))
def prop_best_response(market, lam):
    eq = _solve(market, lam)
    if eq is None:
        return
    eff = effective_market(market)
    for b in eff.buyers:
        obj = buyer_objective(b, 1, eff, eq.price)
        if eq.holdings[b.id] > 0:
            assert obj >= -1e-9, (b.id, obj)
        else:
            assert obj <= 1e-9, (b.id, obj)


slow_pair = st.one_of(
    fast_pair,
    st.tuples(fast_concave, st.one_of(pos.map(Exponential), st.tuples(st.floats(0.0, 2.0), pos).map(
        lambda t: Uniform(t[0], t[0] + t[1]))), st.floats(1e-3, 0.05)),
)


@strategies(markets(pair=slow_pair, max_buyers=1), st.floats(0.0, 25.0), st.floats(0.0, 25.0))
def prop_net_value_monotone(market, p1, p2):
    lo, hi = sorted((p1, p2))
    b = market.buyers[0]
    assert net_value(b, market.tickets, lo) >= net_value(b, market.tickets, hi) - 1e-10


@strategies(markets(max_buyers=1), st.floats(1e-4, 0.05), st.floats(1e-4, 0.05))
def prop_max_price_monotone(market, r1, r2):
    lo, hi = sorted((r1, r2))
    b = market.buyers[0]
    n = market.tickets
    assert max_price(b.__class__(b.id, hi, b.risk, b.mev), n) <= max_price(
        b.__class__(b.id, lo, b.risk, b.mev), n) + 1e-9


rn_pair = st.tuples(st.just(RiskNeutral()), rn_mev, st.floats(0.0, 0.05))


@strategies(markets(pair=rn_pair), st.floats(0.01, 100.0))
def prop_scaling_invariance(market, c):
    eq = _solve(market)
    if eq is None:
        return
    big = MarketParams(market.tickets, tuple(dataclasses.replace(b, mev=scaled(b.mev, c)) for b in market.buyers))
    eq2 = solve_equilibrium(big)
    assert eq2.valuation.top_set == eq.valuation.top_set
    assert eq2.holdings == eq.holdings
    assert eq2.price == pytest.approx(c * eq.price, rel=1e-9)
    assert eq2.chi == pytest.approx(eq.chi, rel=1e-9)


@strategies(sim_markets(), st.integers(0, 2**32 - 1), st.integers(1, 300))
def prop_sim_deterministic(market, seed, slots):
    eq = _solve(market)
    if eq is None:
        return
    a = run_slots(market, eq, slots, seed, trace=True)
    b = run_slots(market, eq, slots, seed, trace=True)
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize(
    "label,prop",
    [
        ("price band", prop_price_band),
        ("market clearing", prop_market_clearing),
        ("objective linearity", prop_objective_linear),
        ("best response", prop_best_response),
        ("net_value monotone in P", prop_net_value_monotone),
        ("max_price monotone in r", prop_max_price_monotone),
        ("argmax invariance under scaling", prop_scaling_invariance),
        ("simulation determinism", prop_sim_deterministic),
    ],
)
def test_ac10_properties(criterion, label, prop):
    run_property(criterion, label, prop)
