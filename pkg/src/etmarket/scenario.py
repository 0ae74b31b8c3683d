"""Scenario files: JSON loading, validation and serialization.

Structure is checked against a JSON schema (SchemaError); value invariants
such as a negative cost of capital are checked by the domain constructors
(ValidationError).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .errors import ParseError, SchemaError, ValidationError
from .model import (
    BuyerSpec,
    Empirical,
    ExpConcave,
    Exponential,
    LogNormal,
    MarketParams,
    MevModel,
    PointMass,
    PowerConcave,
    RiskNeutral,
    RiskProfile,
    Uniform,
)
from .pbs import DEFAULT_JOINT_SAMPLES, MaxHaircut, PbsConfig, SecondMax

SCHEMA_VERSION = 1

MEV_PARAMS = {
    "PointMass": ["mu"],
    "Exponential": ["mean"],
    "LogNormal": ["mu_log", "sigma_log"],
    "Uniform": ["a", "b"],
    "Empirical": ["samples"],
}
RISK_KINDS = ["RiskNeutral", "ExpConcave", "PowerConcave"]
GAMMA_RULES = ["MaxHaircut", "SecondMax"]

_number = {"type": "number"}

_mev_schema = {
    "type": "object",
    "required": ["kind", "params"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(MEV_PARAMS)},
        "params": {"type": "object"},
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": kind}}},
            "then": {
                "properties": {
                    "params": {
                        "type": "object",
                        "required": keys,
                        "additionalProperties": False,
                        "properties": {
                            k: ({"type": "array", "items": _number} if k == "samples" else _number)
                            for k in keys
                        },
                    }
                }
            },
        }
        for kind, keys in MEV_PARAMS.items()
    ],
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "name", "market"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "lambda": _number,
        "market": {
            "type": "object",
            "required": ["tickets", "buyers"],
            "additionalProperties": False,
            "properties": {
                "tickets": {"type": "integer"},
                "buyers": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["id", "r", "mev"],
                        "additionalProperties": False,
                        "properties": {
                            "id": {"type": "string"},
                            "r": _number,
                            "risk": {
                                "type": "object",
                                "required": ["kind"],
                                "additionalProperties": False,
                                "properties": {
                                    "kind": {"enum": RISK_KINDS},
                                    "param": _number,
                                    "clip": {"type": "boolean"},
                                },
                            },
                            "mev": _mev_schema,
                        },
                    },
                },
                "pbs": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "non_buyer_abilities": {"type": "array", "items": _mev_schema},
                        "gamma": {
                            "type": "object",
                            "required": ["rule"],
                            "additionalProperties": False,
                            "properties": {"rule": {"enum": GAMMA_RULES}, "epsilon": _number},
                        },
                        "joint_samples": {"type": "integer"},
                        "seed": {"type": "integer"},
                        "exclude_holder": {"type": "boolean"},
                    },
                },
            },
        },
        "sim": {
            "type": "object",
            "required": ["slots"],
            "additionalProperties": False,
            "properties": {
                "slots": {"type": "integer"},
                "seed": {"type": "integer"},
                "trace": {"type": "boolean"},
            },
        },
        "expect": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tolerance": _number,
                "chi": _number,
                "chi_max": _number,
                "price": _number,
                "holdings": {"type": "object", "additionalProperties": _number},
                "holders": {"type": "array", "items": {"type": "string"}},
                "top_set_is_valuation_argmax": {"type": "boolean"},
                "investors": {
                    "type": "object",
                    "required": ["ids", "dominates"],
                    "additionalProperties": False,
                    "properties": {
                        "ids": {"type": "array", "items": {"type": "string"}},
                        "dominates": {"type": "boolean"},
                    },
                },
                "chi_hat_sigmas": _number,
            },
        },
    },
}

SUITE_SCHEMA = {
    "type": "object",
    "required": ["schema", "scenarios"],
    "additionalProperties": False,
    "properties": {"schema": {"const": SCHEMA_VERSION}, "scenarios": {"type": "array"}},
}


@dataclass(frozen=True)
class SimConfig:
    slots: int
    seed: int = 0
    trace: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    market: MarketParams
    lam: float = 0.0
    sim: SimConfig | None = None
    expect: dict[str, Any] | None = field(default=None, compare=True)

    @property
    def tolerance(self) -> float:
        return float((self.expect or {}).get("tolerance", 1e-9))


# --------------------------------------------------------------------------
# dict -> objects
# --------------------------------------------------------------------------


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _check_schema(data: Any, schema: dict) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(data))
    if err is not None:
        raise SchemaError(f"{_path(err.absolute_path)}: {err.message}")


def _at(where: str, fn, *args):
    try:
        return fn(*args)
    except ValidationError as e:
        raise ValidationError(f"{where}: {e}") from None


def parse_mev(d: dict) -> MevModel:
    p = d["params"]
    kind = d["kind"]
    if kind == "PointMass":
        return PointMass(p["mu"])
    if kind == "Exponential":
        return Exponential(p["mean"])
    if kind == "LogNormal":
        return LogNormal(p["mu_log"], p["sigma_log"])
    if kind == "Uniform":
        return Uniform(p["a"], p["b"])
    return Empirical(p["samples"])


def parse_risk(d: dict | None) -> RiskProfile:
    if d is None or d["kind"] == "RiskNeutral":
        return RiskNeutral()
    if "param" not in d:
        raise ValidationError(f"{d['kind']} requires 'param'")
    if d["kind"] == "ExpConcave":
        return ExpConcave(d["param"], d.get("clip", True))
    if "clip" in d and not d["clip"]:
        raise ValidationError("PowerConcave has no unclipped form")
    return PowerConcave(d["param"])


def _build_market(m: dict) -> MarketParams:
    buyers = []
    for i, b in enumerate(m["buyers"]):
        where = f"market.buyers[{i}]"
        risk = _at(f"{where}.risk", parse_risk, b.get("risk"))
        mev = _at(f"{where}.mev", parse_mev, b["mev"])
        buyers.append(_at(where, BuyerSpec, b["id"], b["r"], risk, mev))
    pbs = None
    if "pbs" in m:
        p = m["pbs"]
        abil = tuple(
            _at(f"market.pbs.non_buyer_abilities[{j}]", parse_mev, a)
            for j, a in enumerate(p.get("non_buyer_abilities", []))
        )
        g = p.get("gamma", {"rule": "SecondMax"})
        rule = (
            _at("market.pbs.gamma", MaxHaircut, g.get("epsilon", 0.0))
            if g["rule"] == "MaxHaircut"
            else SecondMax()
        )
        pbs = _at(
            "market.pbs",
            PbsConfig,
            abil,
            rule,
            p.get("joint_samples", DEFAULT_JOINT_SAMPLES),
            p.get("seed", 0),
            p.get("exclude_holder", False),
        )
    return _at("market", MarketParams, m["tickets"], tuple(buyers), pbs)


def scenario_from_dict(data: Any) -> Scenario:
    _check_schema(data, SCENARIO_SCHEMA)
    market = _build_market(data["market"])
    lam = float(data.get("lambda", 0.0))
    if not 0 <= lam <= 1:
        raise ValidationError(f"lambda: must lie in [0, 1], got {lam}")
    sim = None
    if "sim" in data:
        s = data["sim"]
        if s["slots"] < 1:
            raise ValidationError(f"sim.slots: must be positive, got {s['slots']}")
        sim = SimConfig(s["slots"], s.get("seed", 0), s.get("trace", False))
    expect = data.get("expect")
    if expect is not None:
        tol = expect.get("tolerance", 1e-9)
        if tol <= 0:
            raise ValidationError(f"expect.tolerance: must be positive, got {tol}")
        if "chi_hat_sigmas" in expect and expect["chi_hat_sigmas"] <= 0:
            raise ValidationError("expect.chi_hat_sigmas: must be positive")
        ids = set(market.ids)
        named = list(expect.get("holdings", {})) + list(expect.get("holders", []))
        named += list(expect.get("investors", {}).get("ids", []))
        unknown = sorted(set(named) - ids)
        if unknown:
            raise ValidationError(f"expect: unknown buyer ids {unknown}")
    return Scenario(data["name"], market, lam, sim, expect)


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_read_json(path))


def load_suite(path) -> list[Scenario]:
    """A suite file ``{"schema": 1, "scenarios": [...]}`` or a single scenario file."""
    data = _read_json(path)
    if isinstance(data, dict) and "scenarios" in data:
        _check_schema(data, SUITE_SCHEMA)
        if not data["scenarios"]:
            raise ValidationError("scenarios: suite is empty")
        out = []
        for i, s in enumerate(data["scenarios"]):
            try:
                out.append(scenario_from_dict(s))
            except (SchemaError, ValidationError) as e:
                raise type(e)(f"scenarios[{i}].{e}") from None
        names = [s.name for s in out]
        if len(set(names)) != len(names):
            raise ValidationError("scenarios: names must be unique")
        return out
    return [scenario_from_dict(data)]


# --------------------------------------------------------------------------
# objects -> dict
# --------------------------------------------------------------------------


def mev_to_dict(m: MevModel) -> dict:
    return {"kind": m.kind, "params": m.params()}


def risk_to_dict(r: RiskProfile) -> dict:
    if isinstance(r, ExpConcave):
        return {"kind": r.kind, "param": r.alpha, "clip": r.clip}
    if isinstance(r, PowerConcave):
        return {"kind": r.kind, "param": r.gamma}
    return {"kind": r.kind}


def market_to_dict(market: MarketParams) -> dict:
    d: dict[str, Any] = {
        "tickets": market.tickets,
        "buyers": [
            {"id": b.id, "r": b.cost_of_capital, "risk": risk_to_dict(b.risk), "mev": mev_to_dict(b.mev)}
            for b in market.buyers
        ],
    }
    if market.pbs is not None:
        p = market.pbs
        gamma = {"rule": p.gamma_rule.rule}
        if isinstance(p.gamma_rule, MaxHaircut):
            gamma["epsilon"] = p.gamma_rule.epsilon
        d["pbs"] = {
            "non_buyer_abilities": [mev_to_dict(m) for m in p.non_buyer_abilities],
            "gamma": gamma,
            "joint_samples": p.joint_samples,
            "seed": p.seed,
            "exclude_holder": p.exclude_holder,
        }
    return d


def scenario_to_dict(sc: Scenario) -> dict:
    d: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "name": sc.name,
        "market": market_to_dict(sc.market),
        "lambda": sc.lam,
    }
    if sc.sim is not None:
        d["sim"] = {"slots": sc.sim.slots, "seed": sc.sim.seed, "trace": sc.sim.trace}
    if sc.expect is not None:
        d["expect"] = sc.expect
    return d


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True)
