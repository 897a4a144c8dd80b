"""Closed-form broadcast-time bounds for hyperfractal vehicular networks.

All functions are pure.  Times are in seconds when ``h`` is in seconds and
``v`` in map units per second.  Expressions stated only up to an order
symbol are returned with constant 1 and tagged ``order-scale``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

from .geometry import DomainError, HyperfractalParams, critical_level_H

DEFAULT_EPSILON = 0.1
TAIL_DOMINANT_SHARE = 0.25
NEAR_SINGULAR_GAP = 0.05


class NearSingularWarning(RuntimeWarning):
    """delta is close to 1 where Gamma(1 - delta) has its pole."""


def gamma_neg_delta(delta: float) -> float:
    """``-Gamma(-delta)`` for ``0 < delta < 1``, via ``Gamma(1 - delta) / delta``."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if abs(delta - 1.0) < NEAR_SINGULAR_GAP:
        warnings.warn(f"delta={delta} is within {NEAR_SINGULAR_GAP} of the pole at 1",
                      NearSingularWarning, stacklevel=2)
    return math.gamma(1.0 - delta) / delta


def busy_streets_asymptotic(params: HyperfractalParams) -> float:
    """``n**delta * (-Gamma(-delta)) / log(2/q)``."""
    d = params.delta
    return params.n ** d * gamma_neg_delta(d) / math.log(2.0 / params.q)


def busy_streets_asymptotic_radio(params: HyperfractalParams) -> float:
    """Busy streets without an inter-node gap above ``1/sqrt(n)``."""
    d = params.delta
    return params.n ** (d / 2.0) * gamma_neg_delta(d) / math.log(2.0 / params.q)


@dataclass(frozen=True)
class BoundInputs:
    params: HyperfractalParams
    h: float
    v: float
    epsilon: float = DEFAULT_EPSILON
    radio: bool = False
    tight_turns: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("h must be positive")
        if not self.v > 0:
            raise DomainError("v must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")


@dataclass
class BoundValue:
    value: float
    formula: str
    flags: list[str] = field(default_factory=list)
    terms: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": self.value, "formula": self.formula, "flags": list(self.flags)}
        if self.terms:
            out["terms"] = dict(self.terms)
        return out


def upper_bound_direct(inp: BoundInputs) -> float:
    """Direct route: ``h p n + 1/v``.  Unchanged under the radio range."""
    return inp.h * inp.params.p * inp.params.n + 1.0 / inp.v


def _diverted(inp: BoundInputs, radio: bool) -> BoundValue:
    P = inp.params
    n, p, q, d, eps, h, v = P.n, P.p, P.q, P.delta, inp.epsilon, inp.h, inp.v
    lead = (0.5 if radio else 1.0) - d + eps
    terms = {
        "route": 2.0 * h * p * n ** lead * (2.0 / p) ** d,
        "critical_hops": (4.0 / q) * h * n ** (eps / d),
    }
    if inp.tight_turns:
        terms["turns"] = 2.0 / (v * n) + 1.0 / (v * n ** (eps / d))
    else:
        terms["turns"] = 3.0 / v
    terms["empty_street_tail"] = n * math.exp(-(q / 2.0) * n ** eps)
    total = sum(terms.values())
    flags = []
    if terms["empty_street_tail"] > TAIL_DOMINANT_SHARE * total:
        flags.append("tail-dominant")
    if eps >= d:
        flags.append("epsilon-not-below-delta")
    if radio and lead < 0:
        flags.append("decaying-route-term")
    if inp.tight_turns:
        flags.append("tight-turns")
    name = "2hp n^(1/2-d+e)(2/p)^d + (4/q)h n^(e/d) + turns + n exp(-(q/2)n^e)" if radio else \
        "2hp n^(1-d+e)(2/p)^d + (4/q)h n^(e/d) + turns + n exp(-(q/2)n^e)"
    return BoundValue(total, name, flags, terms)


def upper_bound_diverted_detail(inp: BoundInputs) -> BoundValue:
    """Diverted-route bound with per-term breakdown and flags.

    The order term is evaluated as ``n exp(-(q/2) n**eps)`` and kept in the
    sum; ``tail-dominant`` marks results where it exceeds a quarter of the
    total.
    """
    return _diverted(inp, radio=False)


def upper_bound_diverted(inp: BoundInputs) -> float:
    return _diverted(inp, radio=False).value


def upper_bounds_radio(inp: BoundInputs) -> tuple[float, float]:
    """(direct, diverted) bounds under the radio range ``1/sqrt(n)``."""
    return upper_bound_direct(inp), _diverted(inp, radio=True).value


def upper_bound_diverted_radio_detail(inp: BoundInputs) -> BoundValue:
    return _diverted(inp, radio=True)


def lower_bound(inp: BoundInputs) -> float:
    """``(p^3/2) h n^(1-delta) log(2/q) / (-Gamma(-delta))``; exponent ``1 - delta/2`` with radio."""
    P = inp.params
    exponent = 1.0 - (P.delta / 2.0 if inp.radio else P.delta)
    return (P.p ** 3 / 2.0) * inp.h * P.n ** exponent * math.log(2.0 / P.q) / gamma_neg_delta(P.delta)


def turn_time_bound(n_i: int, n_j: int, v: float) -> float:
    """Mean packet turn time bound ``1 / (v (n_i + n_j))``."""
    if n_i < 0 or n_j < 0 or n_i + n_j < 1:
        raise DomainError("need at least one node across the two streets")
    if not v > 0:
        raise DomainError("v must be positive")
    return 1.0 / (v * (n_i + n_j))


def poisson_uniform_bound(h: float, v: float) -> float:
    """Order scale ``1/v + h`` of the broadcast time in the one-node-per-street limit."""
    if not (h > 0 and v > 0):
        raise DomainError("h and v must be positive")
    return 1.0 / v + h


@dataclass(frozen=True)
class EmptyStreetProbability:
    per_street: float
    multiplier: float

    @property
    def value(self) -> float:
        return self.per_street * self.multiplier


def empty_street_probability(params: HyperfractalParams, epsilon: float = DEFAULT_EPSILON,
                             radio: bool = False) -> EmptyStreetProbability:
    """Bound ``exp(-(q/2) n**eps)`` on a critical-level street being empty.

    Under the radio range the bound on a gap wider than the range carries an
    extra factor ``n``, returned as ``multiplier``.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0, 1)")
    factor = math.exp(-(params.q / 2.0) * params.n ** epsilon)
    return EmptyStreetProbability(factor, float(params.n) if radio else 1.0)


def scaling_exponent(params: HyperfractalParams, radio: bool = False) -> float:
    """Order-scale growth exponent of the broadcast time in ``n``."""
    return 1.0 - (params.delta / 2.0 if radio else params.delta)


@dataclass
class BoundSet:
    upper_direct: float
    upper_diverted: float
    lower: float
    busy_streets: float
    turn_time_bound: Callable[[int, int], float]
    notes: list[str]
    diverted_detail: BoundValue | None = None

    def to_dict(self) -> dict:
        return {
            "upper_direct": self.upper_direct,
            "upper_diverted": self.upper_diverted,
            "lower": self.lower,
            "busy_streets": self.busy_streets,
            "notes": list(self.notes),
        }


def bound_set(inp: BoundInputs) -> BoundSet:
    """Every bound for one parameter point, with dropped-term notes."""
    notes = []
    if inp.radio:
        direct = upper_bound_direct(inp)
        detail = upper_bound_diverted_radio_detail(inp)
        busy = busy_streets_asymptotic_radio(inp.params)
    else:
        direct = upper_bound_direct(inp)
        detail = upper_bound_diverted_detail(inp)
        busy = busy_streets_asymptotic(inp.params)
    notes.append("busy_streets is the asymptotic equivalent; finite-n corrections dropped")
    notes.append("diverted bound keeps the order term as n*exp(-(q/2)n^eps) with constant 1")
    notes.extend(f"diverted:{f}" for f in detail.flags)
    v = inp.v
    return BoundSet(direct, detail.value, lower_bound(inp), busy,
                    lambda n_i, n_j: turn_time_bound(n_i, n_j, v), notes, detail)


def bounds_report(inp: BoundInputs) -> dict:
    """JSON-ready report: every value with its formula name and flags."""
    P = inp.params
    out = {
        "upper_direct": BoundValue(upper_bound_direct(inp), "h p n + 1/v").to_dict(),
        "upper_diverted": (upper_bound_diverted_radio_detail(inp) if inp.radio
                           else upper_bound_diverted_detail(inp)).to_dict(),
        "lower": BoundValue(lower_bound(inp),
                            "(p^3/2) h n^(1-d/2) log(2/q)/(-Gamma(-d))" if inp.radio
                            else "(p^3/2) h n^(1-d) log(2/q)/(-Gamma(-d))").to_dict(),
        "busy_streets": BoundValue(
            busy_streets_asymptotic_radio(P) if inp.radio else busy_streets_asymptotic(P),
            "n^(d/2)(-Gamma(-d))/log(2/q)" if inp.radio else "n^d(-Gamma(-d))/log(2/q)",
            ["asymptotic"]).to_dict(),
        "gamma_neg_delta": BoundValue(gamma_neg_delta(P.delta), "Gamma(1-d)/d").to_dict(),
        "poisson_uniform_scale": BoundValue(poisson_uniform_bound(inp.h, inp.v), "1/v + h",
                                            ["order-scale"]).to_dict(),
        "scaling_exponent": BoundValue(scaling_exponent(P, inp.radio), "1 - d", ["order-scale"]).to_dict(),
    }
    esp = empty_street_probability(P, inp.epsilon, inp.radio)
    out["empty_street_probability"] = {
        "value": esp.value, "per_street": esp.per_street, "multiplier": esp.multiplier,
        "formula": "exp(-(q/2) n^e)" + (" * n" if inp.radio else ""), "flags": [],
    }
    level_formula = "ceil(log(n^(%s) p/2)/log(2/q))" % ("1/2-e" if inp.radio else "1-e")
    try:
        out["critical_level"] = {"value": critical_level_H(P, inp.epsilon, inp.radio),
                                 "formula": level_formula, "flags": []}
    except DomainError as exc:
        out["critical_level"] = {"value": None, "formula": level_formula, "flags": [f"undefined: {exc}"]}
    return out
