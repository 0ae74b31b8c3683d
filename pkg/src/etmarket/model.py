"""Core domain types: risk adjustments, MEV laws, buyers and markets.

Risk profiles map a (random) profit to risk-adjusted utility.  The two concave
families are clipped to zero for non-positive arguments; the risk-neutral
profile is the identity on all reals so that ``E[R] - P`` is reproduced
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Union

import numpy as np
from scipy import stats

from .errors import ValidationError

if TYPE_CHECKING:
    from .pbs import PbsConfig


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


def _finite(x: float, name: str) -> float:
    x = float(x)
    _require(math.isfinite(x), f"{name} must be finite, got {x!r}")
    return x


# --------------------------------------------------------------------------
# Risk profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskNeutral:
    kind = "RiskNeutral"
    clip = False

    @property
    def concave(self) -> bool:
        return False

    def __call__(self, x):
        return np.asarray(x, dtype=float) if np.ndim(x) else float(x)


@dataclass(frozen=True)
class ExpConcave:
    """``(1 - exp(-alpha*x)) / alpha``.

    Clipped to zero for x <= 0 by default.  ``clip=False`` keeps the
    exponential form on all reals (CARA utility), which penalizes losses.
    """

    alpha: float
    clip: bool = True
    kind = "ExpConcave"

    def __post_init__(self):
        a = _finite(self.alpha, "alpha")
        _require(a > 0, f"alpha must be positive, got {a}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "clip", bool(self.clip))

    @property
    def concave(self) -> bool:
        return True

    def scalar(self, x: float) -> float:
        if self.clip and x <= 0:
            return 0.0
        return -math.expm1(-self.alpha * x) / self.alpha

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.clip:
            x = np.maximum(x, 0.0)
        out = -np.expm1(-self.alpha * x) / self.alpha
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PowerConcave:
    """``x**gamma`` on x > 0, zero elsewhere; gamma in (0, 1]."""

    gamma: float
    kind = "PowerConcave"
    clip = True

    def __post_init__(self):
        g = _finite(self.gamma, "gamma")
        _require(0 < g <= 1, f"gamma must lie in (0, 1], got {g}")
        object.__setattr__(self, "gamma", g)

    @property
    def concave(self) -> bool:
        return True

    def scalar(self, x: float) -> float:
        return x**self.gamma if x > 0 else 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.power(np.maximum(x, 0.0), self.gamma)
        out = np.where(x > 0, out, 0.0)
        return out if out.ndim else float(out)


RiskProfile = Union[RiskNeutral, ExpConcave, PowerConcave]


def eval_pi(profile: RiskProfile, x: float) -> float:
    """Risk-adjusted value of profit ``x`` under ``profile``."""
    return profile(_finite(x, "x"))


# --------------------------------------------------------------------------
# MEV laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    mu: float
    kind = "PointMass"

    def __post_init__(self):
        mu = _finite(self.mu, "mu")
        _require(mu >= 0, f"mu must be nonnegative, got {mu}")
        object.__setattr__(self, "mu", mu)

    def mean(self) -> float:
        return self.mu

    def ess_sup(self) -> float:
        return self.mu

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.mu
        return np.full(size, self.mu)

    def params(self) -> dict:
        return {"mu": self.mu}


@dataclass(frozen=True)
class Exponential:
    mean_: float
    kind = "Exponential"

    def __post_init__(self):
        m = _finite(self.mean_, "mean")
        _require(m > 0, f"mean must be positive, got {m}")
        object.__setattr__(self, "mean_", m)

    def mean(self) -> float:
        return self.mean_

    def ess_sup(self) -> float:
        return math.inf

    def dist(self):
        return stats.expon(scale=self.mean_)

    def pdf(self, x: float) -> float:
        return math.exp(-x / self.mean_) / self.mean_ if x >= 0 else 0.0

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(self.mean_, size)

    def params(self) -> dict:
        return {"mean": self.mean_}


@dataclass(frozen=True)
class LogNormal:
    mu_log: float
    sigma_log: float
    kind = "LogNormal"

    def __post_init__(self):
        mu = _finite(self.mu_log, "mu_log")
        s = _finite(self.sigma_log, "sigma_log")
        _require(s > 0, f"sigma_log must be positive, got {s}")
        object.__setattr__(self, "mu_log", mu)
        object.__setattr__(self, "sigma_log", s)

    def mean(self) -> float:
        return math.exp(self.mu_log + 0.5 * self.sigma_log**2)

    def ess_sup(self) -> float:
        return math.inf

    def dist(self):
        return stats.lognorm(s=self.sigma_log, scale=math.exp(self.mu_log))

    def pdf(self, x: float) -> float:
        if x <= 0:
            return 0.0
        z = (math.log(x) - self.mu_log) / self.sigma_log
        return math.exp(-0.5 * z * z) / (x * self.sigma_log * math.sqrt(2 * math.pi))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.lognormal(self.mu_log, self.sigma_log, size)

    def params(self) -> dict:
        return {"mu_log": self.mu_log, "sigma_log": self.sigma_log}


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float
    kind = "Uniform"

    def __post_init__(self):
        a = _finite(self.a, "a")
        b = _finite(self.b, "b")
        _require(a >= 0, f"a must be nonnegative, got {a}")
        _require(b > a, f"b must exceed a, got a={a}, b={b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def ess_sup(self) -> float:
        return self.b

    def dist(self):
        return stats.uniform(loc=self.a, scale=self.b - self.a)

    def pdf(self, x: float) -> float:
        return 1.0 / (self.b - self.a) if self.a <= x <= self.b else 0.0

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.a, self.b, size)

    def params(self) -> dict:
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class Empirical:
    """Discrete law putting equal mass on each stored sample."""

    samples: np.ndarray
    kind = "Empirical"

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        _require(s.size > 0, "samples must be nonempty")
        _require(bool(np.all(np.isfinite(s))), "samples must be finite")
        _require(bool(np.all(s >= 0)), "samples must be nonnegative")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __eq__(self, other):
        if not isinstance(other, Empirical):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash(self.samples.tobytes())

    def __repr__(self):
        n = self.samples.size
        if n <= 6:
            return f"Empirical({self.samples.tolist()})"
        return f"Empirical(n={n}, mean={self.mean():.6g})"

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def ess_sup(self) -> float:
        return float(np.max(self.samples))

    def sample(self, rng: np.random.Generator, size=None):
        idx = rng.integers(0, self.samples.size, size)
        return self.samples[idx] if size is not None else float(self.samples[idx])

    def params(self) -> dict:
        return {"samples": self.samples.tolist()}


MevModel = Union[PointMass, Exponential, LogNormal, Uniform, Empirical]


def mev_mean(model: MevModel) -> float:
    return model.mean()


def mev_sample(model: MevModel, rng: np.random.Generator) -> float:
    """One draw from ``model`` using ``rng``."""
    return float(model.sample(rng))


def scaled(model: MevModel, c: float) -> MevModel:
    """The law of ``c * R`` for ``c > 0``."""
    if isinstance(model, PointMass):
        return PointMass(c * model.mu)
    if isinstance(model, Exponential):
        return Exponential(c * model.mean_)
    if isinstance(model, LogNormal):
        return LogNormal(model.mu_log + math.log(c), model.sigma_log)
    if isinstance(model, Uniform):
        return Uniform(c * model.a, c * model.b)
    return Empirical(c * model.samples)


# --------------------------------------------------------------------------
# Buyers and markets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BuyerSpec:
    id: str
    cost_of_capital: float
    risk: RiskProfile = field(default_factory=RiskNeutral)
    mev: MevModel = field(default_factory=lambda: PointMass(0.0))

    def __post_init__(self):
        _require(isinstance(self.id, str) and self.id != "", "id must be a nonempty string")
        r = _finite(self.cost_of_capital, "cost_of_capital")
        _require(r >= 0, f"cost_of_capital must be nonnegative, got {r} (buyer {self.id!r})")
        object.__setattr__(self, "cost_of_capital", r)

    @property
    def r(self) -> float:
        return self.cost_of_capital


@dataclass(frozen=True)
class MarketParams:
    tickets: int
    buyers: tuple[BuyerSpec, ...]
    pbs: PbsConfig | None = None

    def __post_init__(self):
        _require(
            isinstance(self.tickets, (int, np.integer)) and not isinstance(self.tickets, bool),
            f"tickets must be an integer, got {self.tickets!r}",
        )
        _require(self.tickets >= 1, f"tickets must be at least 1, got {self.tickets}")
        buyers = tuple(self.buyers)
        _require(len(buyers) > 0, "buyers must be nonempty")
        ids = [b.id for b in buyers]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        _require(not dupes, f"duplicate buyer ids: {dupes}")
        object.__setattr__(self, "tickets", int(self.tickets))
        object.__setattr__(self, "buyers", buyers)

    def with_buyer(self, buyer_id: str, **changes) -> MarketParams:
        """Copy with one buyer's fields replaced."""
        buyers = tuple(replace(b, **changes) if b.id == buyer_id else b for b in self.buyers)
        return replace(self, buyers=buyers)

    def buyer(self, buyer_id: str) -> BuyerSpec:
        for b in self.buyers:
            if b.id == buyer_id:
                return b
        raise KeyError(buyer_id)

    @property
    def ids(self) -> list[str]:
        return [b.id for b in self.buyers]


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    winner_id: str
    realized_mev: float
    pnl: float
    portfolio_before: float
    portfolio_after: float
    exercised_self: bool = True
