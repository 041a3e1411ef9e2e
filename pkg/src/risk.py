import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import COUNTEREXAMPLE_EXTRA_SHIFTS, COUNTEREXAMPLE_LAMBDAS
from distributions import (
    AtomicRV,
    QuantileRV,
    RandomVariable,
    affine,
    expectation,
    law_signature,
    negative_part,
)
from errors import EmptyEffectiveDomainError
from orlicz import OrliczFunction, heart_membership_probe

logger = logging.getLogger("risk")


# ── Value-at-Risk and Expected Shortfall on n equally likely atoms ──

def _check_alpha(alpha: float, allow_one: bool):
    upper_ok = alpha <= 1 if allow_one else alpha < 1
    if not (alpha > 0 and upper_ok):
        raise ValueError(f"alpha={alpha!r} outside {'(0, 1]' if allow_one else '(0, 1)'}")


def var(X: AtomicRV, alpha: float) -> float:
    """inf{m : P(X + m < 0) <= alpha}, scanned over the breakpoints -x_(i)."""
    _check_alpha(alpha, allow_one=False)
    x = law_signature(X).sorted_values
    n = x.size
    below = np.searchsorted(x, x, side="left")
    admissible = x[below / n <= alpha]
    return float(-admissible.max())


def _atoms_below(alpha: float, n: int) -> int:
    # no rounding up: the remainder term covers alpha n just under an integer
    return min(n, int(math.floor(alpha * n)))


def es(X: AtomicRV, alpha: float) -> float:
    """(1/alpha) * integral of beta -> VaR_beta(X) over (0, alpha], exactly on the step function."""
    _check_alpha(alpha, allow_one=True)
    x = law_signature(X).sorted_values
    n = x.size
    k = _atoms_below(alpha, n)
    terms = list(-x[:k] / n)
    remainder = min(max(alpha - k / n, 0.0), 1.0 / n)
    if k < n and remainder > 0:
        terms.append(remainder * -x[k])
    return math.fsum(terms) / alpha


# ─────────────────────────────────────────────────────────────────────────────
# Kusuoka mixtures
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class KusuokaCandidate:
    alphas: Tuple[float, ...]
    weights: Tuple[float, ...]
    gamma: float = 0.0
    candidate_id: str = ""

    def __post_init__(self):
        if len(self.alphas) == 0 or len(self.alphas) != len(self.weights):
            raise ValueError("candidate needs matching nonempty alpha and weight lists")
        if any(not 0 < a <= 1 for a in self.alphas):
            raise ValueError("candidate alphas must lie in (0, 1]")
        if any(w < 0 for w in self.weights):
            raise ValueError("candidate weights must be nonnegative")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"candidate {self.candidate_id!r} weights sum to {math.fsum(self.weights)!r}, not 1")
        if math.isnan(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be >= 0 or +inf")


@dataclass(frozen=True)
class KusuokaSpec:
    candidates: Tuple[KusuokaCandidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("KusuokaSpec needs at least one candidate")

    @classmethod
    def dirac(cls, alpha: float, gamma: float = 0.0) -> "KusuokaSpec":
        return cls((KusuokaCandidate((alpha,), (1.0,), gamma, f"delta_{alpha:g}"),))

    @property
    def effective(self) -> List[KusuokaCandidate]:
        return [c for c in self.candidates if math.isfinite(c.gamma)]

    @property
    def zero_penalty(self) -> bool:
        return all(c.gamma == 0 for c in self.effective)


def mixture_value(X: AtomicRV, alphas: Sequence[float], weights: Sequence[float]) -> float:
    return math.fsum(w * es(X, a) for a, w in zip(alphas, weights))


def kusuoka_eval(X: AtomicRV, spec: KusuokaSpec) -> float:
    """max over finite-penalty candidates of sum_i w_i ES_{alpha_i}(X) - gamma."""
    effective = spec.effective
    if not effective:
        raise EmptyEffectiveDomainError()
    return max(mixture_value(X, c.alphas, c.weights) - c.gamma for c in effective)


# ─────────────────────────────────────────────────────────────────────────────
# Counterexample measure: acceptance set {X^- in heart, E[X] >= 0}
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CounterexampleEvidence:
    shift: float
    in_heart: Dict[float, bool]    # shift -> heart verdict for (X + shift)^-
    value: float


def counterexample_accepts(X: RandomVariable, phi: OrliczFunction) -> bool:
    """X in C: E[X] >= 0 and X^- in the heart of L^Phi."""
    if expectation(X) < 0:
        return False
    if isinstance(X, AtomicRV) or X.atoms is not None:
        return True
    return heart_membership_probe(negative_part(X), phi, COUNTEREXAMPLE_LAMBDAS).in_heart


def counterexample_evidence(X: RandomVariable, phi: OrliczFunction) -> CounterexampleEvidence:
    """
    inf{m : X + m in C} with the heart verdicts at m0 = -E[X] and at the extra
    shifts m0 + 1, m0 + 10 used as consistency evidence.
    """
    m0 = -expectation(X)
    if isinstance(X, AtomicRV) or X.atoms is not None:
        return CounterexampleEvidence(m0, {m0: True}, m0)

    verdicts: Dict[float, bool] = {}
    for offset in [0.0] + list(COUNTEREXAMPLE_EXTRA_SHIFTS):
        m = m0 + offset
        report = heart_membership_probe(negative_part(affine(X, 1.0, m)), phi, COUNTEREXAMPLE_LAMBDAS)
        verdicts[m] = report.in_heart
    if len(set(verdicts.values())) > 1:
        logger.warning("[COUNTEREXAMPLE] %s: heart verdict changes with the shift %r", X.label, verdicts)
    value = m0 if verdicts[m0] else math.inf
    return CounterexampleEvidence(m0, verdicts, value)


def counterexample_rho(X: RandomVariable, phi: OrliczFunction) -> float:
    return counterexample_evidence(X, phi).value


# ─────────────────────────────────────────────────────────────────────────────
# RiskMeasure
# ─────────────────────────────────────────────────────────────────────────────

class Kind(str, Enum):
    VAR = "var"
    ES = "es"
    KUSUOKA = "kusuoka"
    COUNTEREXAMPLE = "counterexample"
    TABLE = "table"


@dataclass(frozen=True)
class DeclaredProperties:
    monotone: bool = True
    cash_additive: bool = True
    convex: bool = True
    quasiconvex: bool = True
    positively_homogeneous: bool = True
    law_invariant: bool = True

    def declared(self) -> List[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]


@dataclass(frozen=True, eq=False)
class RiskMeasure:
    """A risk measure with declared properties; the harness verifies them."""

    kind: Kind
    name: str
    properties: DeclaredProperties = DeclaredProperties()
    alpha: Optional[float] = None
    spec: Optional[KusuokaSpec] = field(default=None, repr=False)
    phi: Optional[OrliczFunction] = field(default=None, repr=False)
    table: Optional[Callable[[AtomicRV], float]] = field(default=None, repr=False)

    def __call__(self, X: RandomVariable) -> float:
        if self.kind is Kind.COUNTEREXAMPLE:
            return counterexample_rho(X, self.phi)
        if isinstance(X, QuantileRV):
            if X.atoms is None:
                raise ValueError(f"{self.name} is evaluated on atomic inputs only")
            X = AtomicRV(X.atoms)
        if self.kind is Kind.VAR:
            return var(X, self.alpha)
        if self.kind is Kind.ES:
            return es(X, self.alpha)
        if self.kind is Kind.KUSUOKA:
            return kusuoka_eval(X, self.spec)
        return float(self.table(X))

    @property
    def is_convex(self) -> bool:
        return self.properties.convex


def var_measure(alpha: float) -> RiskMeasure:
    _check_alpha(alpha, allow_one=False)
    props = DeclaredProperties(convex=False, quasiconvex=False)
    return RiskMeasure(Kind.VAR, f"var:alpha={alpha:g}", props, alpha=alpha)


def es_measure(alpha: float) -> RiskMeasure:
    _check_alpha(alpha, allow_one=True)
    return RiskMeasure(Kind.ES, f"es:alpha={alpha:g}", alpha=alpha)


def kusuoka_measure(spec: KusuokaSpec, name: str = "kusuoka") -> RiskMeasure:
    props = DeclaredProperties(positively_homogeneous=spec.zero_penalty)
    return RiskMeasure(Kind.KUSUOKA, name, props, spec=spec)


def counterexample_measure(phi: OrliczFunction) -> RiskMeasure:
    return RiskMeasure(Kind.COUNTEREXAMPLE, f"counterexample:phi={phi.name}", phi=phi)


def table_measure(name: str, fn: Callable[[AtomicRV], float], properties: DeclaredProperties) -> RiskMeasure:
    return RiskMeasure(Kind.TABLE, f"table:{name}", properties, table=fn)


TABLE_MEASURES: Dict[str, RiskMeasure] = {
    "zero": table_measure("zero", lambda X: 0.0, DeclaredProperties(cash_additive=False)),
    "negative_mean": table_measure("negative_mean", lambda X: -expectation(X), DeclaredProperties()),
    "worst_case": table_measure("worst_case", lambda X: -float(X.values.min()), DeclaredProperties()),
}
