"""Proposer-builder separation: derived ET payoffs ``max(Gamma, X_b)``.

An ET holder may sell the block through PBS at price Gamma or build it
themselves.  Gamma is a pluggable rule over every participant's ability.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import MissingPbsConfig, ValidationError
from .model import Empirical, MarketParams, MevModel, PointMass

DEFAULT_JOINT_SAMPLES = 200_000


@dataclass(frozen=True)
class MaxHaircut:
    """Winning bid is the top ability less a fractional haircut."""

    epsilon: float = 0.0
    rule = "MaxHaircut"

    def __post_init__(self):
        if not 0 <= float(self.epsilon) < 1:
            raise ValidationError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    def __call__(self, abilities: np.ndarray) -> np.ndarray:
        # abilities: (..., n) -> (...)
        if abilities.shape[-1] == 0:
            return np.zeros(abilities.shape[:-1])
        return (1.0 - self.epsilon) * abilities.max(axis=-1)


@dataclass(frozen=True)
class SecondMax:
    rule = "SecondMax"

    def __call__(self, abilities: np.ndarray) -> np.ndarray:
        n = abilities.shape[-1]
        if n < 2:
            return np.zeros(abilities.shape[:-1])
        return np.partition(abilities, n - 2, axis=-1)[..., n - 2]


GammaRule = Union[MaxHaircut, SecondMax]


@dataclass(frozen=True)
class PbsConfig:
    non_buyer_abilities: tuple[MevModel, ...] = ()
    gamma_rule: GammaRule = field(default_factory=SecondMax)
    joint_samples: int = DEFAULT_JOINT_SAMPLES
    seed: int = 0
    # Drop the holder's own ability from the PBS price for their slot.
    exclude_holder: bool = False

    def __post_init__(self):
        object.__setattr__(self, "non_buyer_abilities", tuple(self.non_buyer_abilities))
        if int(self.joint_samples) < 1:
            raise ValidationError(f"joint_samples must be positive, got {self.joint_samples}")


@dataclass(frozen=True)
class DerivedPayoff:
    buyer_id: str
    payoff: MevModel
    outsource_probability: float

    def to_dict(self) -> dict:
        return {
            "buyer_id": self.buyer_id,
            "payoff": {"kind": self.payoff.kind, "mean": self.payoff.mean(), **_payoff_summary(self.payoff)},
            "outsource_probability": self.outsource_probability,
        }


def _payoff_summary(m: MevModel) -> dict:
    if isinstance(m, Empirical):
        return {"samples": int(m.samples.size), "ess_sup": m.ess_sup()}
    return {"params": m.params()}


def gamma_eval(rule: GammaRule, abilities) -> float:
    return float(rule(np.asarray(list(abilities), dtype=float)))


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator keyed by (seed, name)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())]))


def _require_pbs(market: MarketParams) -> PbsConfig:
    if market.pbs is None:
        raise MissingPbsConfig("market has no PBS configuration")
    return market.pbs


def gamma_for(cfg: PbsConfig, abilities: np.ndarray, holder: int) -> np.ndarray:
    """Gamma per row of ``abilities`` (buyers first, then non-buyers)."""
    if cfg.exclude_holder:
        abilities = np.delete(abilities, holder, axis=-1)
    return cfg.gamma_rule(abilities)


def draw_abilities(market: MarketParams, n: int, seed: int | None = None) -> np.ndarray:
    """``(n, B + J)`` matrix of independent ability draws, buyers first."""
    cfg = _require_pbs(market)
    models = [b.mev for b in market.buyers] + list(cfg.non_buyer_abilities)
    rng = substream(cfg.seed if seed is None else seed, "abilities")
    children = rng.spawn(len(models))
    cols = [np.asarray(m.sample(g, n), dtype=float) for m, g in zip(models, children)]
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def derive_payoffs(market: MarketParams) -> list[DerivedPayoff]:
    cfg = _require_pbs(market)
    models = [b.mev for b in market.buyers] + list(cfg.non_buyer_abilities)
    if all(isinstance(m, PointMass) for m in models):
        abil = np.array([m.mu for m in models], dtype=float)
        out = []
        for i, b in enumerate(market.buyers):
            g = float(gamma_for(cfg, abil, i))
            x = abil[i]
            out.append(DerivedPayoff(b.id, PointMass(max(g, x)), 1.0 if g >= x else 0.0))
        return out

    abil = draw_abilities(market, int(cfg.joint_samples))
    shared = None if cfg.exclude_holder else cfg.gamma_rule(abil)
    out = []
    for i, b in enumerate(market.buyers):
        g = shared if shared is not None else gamma_for(cfg, abil, i)
        x = abil[:, i]
        out.append(DerivedPayoff(b.id, Empirical(np.maximum(g, x)), float(np.mean(g >= x))))
    return out


def pbs_market(market: MarketParams) -> MarketParams:
    """Equivalent no-PBS market whose buyers carry the derived payoff laws."""
    derived = {d.buyer_id: d.payoff for d in derive_payoffs(market)}
    buyers = tuple(replace(b, mev=derived[b.id]) for b in market.buyers)
    return MarketParams(market.tickets, buyers, None)


def effective_market(market: MarketParams) -> MarketParams:
    return pbs_market(market) if market.pbs is not None else market


def investor_payoff_mean(market: MarketParams) -> float:
    """E[Gamma] with every buyer's ability included: the payoff of a zero-ability investor."""
    cfg = _require_pbs(market)
    models = [b.mev for b in market.buyers] + list(cfg.non_buyer_abilities)
    if all(isinstance(m, PointMass) for m in models):
        return gamma_eval(cfg.gamma_rule, [m.mu for m in models])
    return float(np.mean(cfg.gamma_rule(draw_abilities(market, int(cfg.joint_samples)))))

