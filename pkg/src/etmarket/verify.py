"""Run scenario expectations against the solver and simulator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .equilibrium import Equilibrium, investor_threshold, solve_equilibrium
from .errors import EtMarketError
from .model import RiskNeutral
from .pbs import effective_market, investor_payoff_mean
from .scenario import Scenario, load_suite, scenario_from_dict
from .sim import run_slots
from .valuation import rank

@dataclass
class Check:
    scenario: str
    claim: str
    expected: Any
    actual: Any
    tolerance: float | None
    passed: bool

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "claim": self.claim,
            "expected": self.expected,
            "actual": self.actual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class VerificationReport:
    per_check: list[Check] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.per_check)

    def to_dict(self) -> dict:
        return {"per_check": [c.to_dict() for c in self.per_check], "all_pass": self.all_pass}


def builtin_suite() -> list[Scenario]:
    files = sorted(
        (p for p in resources.files("etmarket.scenarios").iterdir() if p.name.endswith(".json")),
        key=lambda p: p.name,
    )
    return [scenario_from_dict(json.loads(p.read_text())) for p in files]


def valuation_argmax(market) -> set[str]:
    """Exhaustive scan for argmax of E[R_b] / (1 + r_b N) over risk-neutral buyers."""
    eff = effective_market(market)
    n = eff.tickets
    vals = {}
    for b in eff.buyers:
        if not isinstance(b.risk, RiskNeutral):
            raise ValueError(f"buyer {b.id!r} is not risk-neutral")
        vals[b.id] = b.mev.mean() / (1 + b.cost_of_capital * n)
    return set(rank(vals)[2])


def _close(a: float, b: float, tol: float) -> bool:
    return math.isfinite(a) and abs(a - b) <= tol


def check_scenario(sc: Scenario) -> list[Check]:
    exp = sc.expect or {}
    tol = sc.tolerance
    checks: list[Check] = []

    def add(claim, expected, actual, ok, t=tol):
        checks.append(Check(sc.name, claim, expected, actual, t, bool(ok)))

    try:
        eq: Equilibrium = solve_equilibrium(sc.market, sc.lam)
    except EtMarketError as e:
        add("solve_equilibrium", "success", f"{type(e).__name__}: {e}", False, None)
        return checks

    if "chi" in exp:
        add("chi", exp["chi"], eq.chi, _close(eq.chi, exp["chi"], tol))
    if "chi_max" in exp:
        add("chi < chi_max", exp["chi_max"], eq.chi, eq.chi < exp["chi_max"], None)
    if "price" in exp:
        add("price", exp["price"], eq.price, _close(eq.price, exp["price"], tol))
    if "holdings" in exp:
        for b, k in sorted(exp["holdings"].items()):
            got = eq.holdings.get(b, 0.0)
            add(f"holdings[{b}]", k, got, _close(got, k, tol))
    if "holders" in exp:
        add("holders", sorted(exp["holders"]), eq.holders, sorted(exp["holders"]) == eq.holders, None)
    if exp.get("top_set_is_valuation_argmax"):
        try:
            scan = sorted(valuation_argmax(sc.market))
            got = sorted(eq.valuation.top_set)
            add("top_set == argmax E[R]/(1+rN)", scan, got, scan == got, None)
        except (EtMarketError, ValueError) as e:
            add("top_set == argmax E[R]/(1+rN)", "scan", str(e), False, None)
    if "investors" in exp:
        inv = exp["investors"]
        try:
            eff = effective_market(sc.market)
            if sc.market.pbs is not None:
                payoff = investor_payoff_mean(sc.market)
            else:
                payoff = eff.buyer(inv["ids"][0]).mev.mean()
            bound, dom = investor_threshold(eff, inv["ids"], payoff)
            add("investor dominance flag", inv["dominates"], {"bound": bound, "dominates": dom},
                dom == inv["dominates"], None)
            held = sum(eq.holdings.get(i, 0.0) for i in inv["ids"])
            if dom:
                add("investors hold all tickets", sc.market.tickets, held,
                    _close(held, sc.market.tickets, tol))
        except EtMarketError as e:
            add("investor dominance flag", inv["dominates"], f"{type(e).__name__}: {e}", False, None)
    if "chi_hat_sigmas" in exp and sc.sim is not None:
        k = exp["chi_hat_sigmas"]
        try:
            rep = run_slots(sc.market, eq, sc.sim.slots, sc.sim.seed, trace=False)
            se = rep.chi_hat_stderr or 0.0
            ok = rep.chi_hat is not None and abs(rep.chi_hat - eq.chi) <= k * se + 1e-12
            add(f"chi_hat within {k:g} SE of chi", eq.chi, {"chi_hat": rep.chi_hat, "stderr": se}, ok, k * se)
        except EtMarketError as e:
            add("chi_hat", eq.chi, f"{type(e).__name__}: {e}", False, None)
    return checks


def cmd_verify(suite: str | None = None) -> tuple[VerificationReport, int]:
    """Run a suite (built-in when ``suite`` is None); exit code 0 iff all pass."""
    scenarios = builtin_suite() if suite is None else load_suite(suite)
    report = VerificationReport()
    for sc in sorted(scenarios, key=lambda s: s.name):
        report.per_check.extend(check_scenario(sc))
    return report, 0 if report.all_pass else 1
