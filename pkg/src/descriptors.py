"""
String descriptors for Orlicz functions, risk measures and quantile families,
e.g. `power:p=2`, `es:alpha=0.5`, `counterexample:phi=power:p=2`,
`exponential:rate=1,truncate=5`.
"""

import math
from typing import Dict, List, Tuple

from errors import DescriptorError
import distributions as dist
import orlicz
from data_io import read_kusuoka, read_phi_table
from risk import (
    TABLE_MEASURES,
    RiskMeasure,
    counterexample_measure,
    es_measure,
    kusuoka_measure,
    var_measure,
)


def split_descriptor(text: str) -> Tuple[str, str]:
    name, _, rest = text.strip().partition(":")
    if not name:
        raise DescriptorError(f"empty descriptor {text!r}")
    return name, rest


def parse_params(rest: str, allowed: List[str]) -> Dict[str, float]:
    params: Dict[str, float] = {}
    if not rest:
        return params
    for item in rest.split(","):
        key, eq, raw = item.partition("=")
        key = key.strip()
        if not eq or key not in allowed:
            raise DescriptorError(f"unexpected parameter {item!r}; expected one of {', '.join(allowed)}")
        try:
            params[key] = float(raw)
        except ValueError:
            raise DescriptorError(f"parameter {key} must be a number, got {raw!r}")
    return params


# ── Orlicz functions ──

def parse_phi(text: str) -> orlicz.OrliczFunction:
    name, rest = split_descriptor(text)
    try:
        if name == "power":
            return orlicz.power(parse_params(rest, ["p"]).get("p", 2.0))
        if name == "power_over_p":
            return orlicz.power_over_p(parse_params(rest, ["p"]).get("p", 2.0))
        if name == "exp_minus_one":
            parse_params(rest, [])
            return orlicz.exp_minus_one()
        if name == "exp_square_minus_one":
            parse_params(rest, [])
            return orlicz.exp_square_minus_one()
    except ValueError as e:
        raise DescriptorError(f"{text!r}: {e}")
    if name == "table":
        if not rest:
            raise DescriptorError("table descriptor needs a path: table:<path>")
        return read_phi_table(rest)
    raise DescriptorError(f"unknown Orlicz family {name!r}")


# ── Risk measures ──

def parse_measure(text: str) -> RiskMeasure:
    name, rest = split_descriptor(text)
    try:
        if name == "var":
            return var_measure(_required(parse_params(rest, ["alpha"]), "alpha", text))
        if name == "es":
            return es_measure(_required(parse_params(rest, ["alpha"]), "alpha", text))
    except ValueError as e:
        raise DescriptorError(f"{text!r}: {e}")
    if name == "kusuoka":
        if not rest:
            raise DescriptorError("kusuoka descriptor needs a path: kusuoka:<path>")
        return kusuoka_measure(read_kusuoka(rest), name=f"kusuoka:{rest}")
    if name == "counterexample":
        key, eq, phi_text = rest.partition("=")
        if key != "phi" or not eq:
            raise DescriptorError("counterexample descriptor reads counterexample:phi=<orlicz descriptor>")
        return counterexample_measure(parse_phi(phi_text))
    if name == "table":
        if rest not in TABLE_MEASURES:
            raise DescriptorError(f"unknown table measure {rest!r}; expected one of {', '.join(TABLE_MEASURES)}")
        return TABLE_MEASURES[rest]
    raise DescriptorError(f"unknown risk measure {name!r}")


def _required(params: Dict[str, float], key: str, text: str) -> float:
    if key not in params:
        raise DescriptorError(f"{text!r} needs {key}=")
    return params[key]


# ── Quantile families ──

FAMILIES = {
    "exponential": (dist.exponential, ["rate"]),
    "neg_exponential": (dist.neg_exponential, ["rate"]),
    "normal": (dist.normal, ["mu", "sigma"]),
    "lognormal": (dist.lognormal, ["sigma"]),
    "pareto": (dist.pareto, ["b"]),
    "uniform": (dist.uniform, ["low", "high"]),
    "constant": (dist.constant, ["c"]),
}

MODIFIERS = ["truncate", "scale", "shift"]


def parse_family(text: str) -> dist.QuantileRV:
    """A named family with optional truncate=, then scale= and shift= modifiers."""
    name, rest = split_descriptor(text)
    if name not in FAMILIES:
        raise DescriptorError(f"unknown family {name!r}; expected one of {', '.join(FAMILIES)}")
    factory, keys = FAMILIES[name]
    params = parse_params(rest, keys + MODIFIERS)
    mods = {k: params.pop(k) for k in MODIFIERS if k in params}
    try:
        X = factory(**params)
        if "truncate" in mods:
            X = dist.truncate_min(X, mods["truncate"])
        if "scale" in mods or "shift" in mods:
            X = dist.affine(X, mods.get("scale", 1.0), mods.get("shift", 0.0))
    except ValueError as e:
        raise DescriptorError(f"{text!r}: {e}")
    return X


def parse_truncation_family(text: str, depth: int) -> Tuple[List[dist.QuantileRV], dist.QuantileRV]:
    """`exp-truncation[:rate=..,shift=..]` -> (X_1..X_depth, limit)."""
    name, rest = split_descriptor(text)
    if name != "exp-truncation":
        raise DescriptorError(f"unknown sequence family {name!r}; expected exp-truncation")
    params = parse_params(rest, ["rate", "shift"])
    try:
        return dist.exp_truncation_family(depth, params.get("rate", 1.0), params.get("shift"))
    except ValueError as e:
        raise DescriptorError(f"{text!r}: {e}")


def parse_floats(text: str, what: str = "values", positive: bool = False) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DescriptorError(f"{what} must be a comma-separated list of numbers, got {text!r}")
    if not values or any(not math.isfinite(v) for v in values):
        raise DescriptorError(f"{what} must be a nonempty list of finite numbers")
    if positive and any(v <= 0 for v in values):
        raise DescriptorError(f"{what} must be positive")
    return values


def parse_mu(text: str) -> Tuple[List[float], List[float]]:
    """`alpha:weight,...` -> (alphas, weights) of a finitely supported measure on (0, 1]."""
    alphas, weights = [], []
    for item in text.split(","):
        a, sep, w = item.partition(":")
        if not sep:
            raise DescriptorError(f"mu entries read alpha:weight, got {item!r}")
        try:
            alphas.append(float(a))
            weights.append(float(w))
        except ValueError:
            raise DescriptorError(f"mu entry {item!r} is not numeric")
    if any(not 0 < a <= 1 for a in alphas):
        raise DescriptorError("mu alphas must lie in (0, 1]")
    if any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
        raise DescriptorError("mu weights must be nonnegative and sum to 1")
    return alphas, weights
