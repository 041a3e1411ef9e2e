import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from config import (
    DIVERGENCE_BOUND,
    EXTENSION_ATOL,
    EXTENSION_RTOL,
    LAW_TOL,
    MIN_EXTENSION_ATOMS_LOG2,
    STALL_STEP,
)
from distributions import AtomicRV, RandomVariable
from errors import DimensionMismatchError, EmptyAcceptanceError
from orlicz import OrliczFunction
from partitions import cecon_sequence
from risk import Kind, RiskMeasure, _atoms_below, mixture_value

logger = logging.getLogger("duality")

MAX_SWEEPS = 10_000


# ─────────────────────────────────────────────────────────────────────────────
# Densities and reports
# ─────────────────────────────────────────────────────────────────────────────

def is_feasible_density(z: np.ndarray, cap: Optional[float] = None, tol: float = LAW_TOL) -> bool:
    z = np.asarray(z, dtype=float)
    if z.size == 0 or not np.all(np.isfinite(z)):
        return False
    if np.any(z < -tol) or abs(math.fsum(z) / z.size - 1.0) > tol:
        return False
    return cap is None or bool(np.all(z <= cap + tol))


@dataclass(frozen=True, eq=False)
class Density:
    """dQ/dP on n equally likely atoms: z >= 0, mean 1, optionally z <= cap."""

    z: np.ndarray
    cap: Optional[float] = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        if not is_feasible_density(z, self.cap):
            raise ValueError("density must be nonnegative with mean 1 (and below its cap)")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return int(self.z.size)

    @classmethod
    def uniform(cls, n: int) -> "Density":
        return cls(np.ones(n))

    def expectation(self, X: AtomicRV) -> float:
        """E_Q[X]."""
        if X.n != self.n:
            raise DimensionMismatchError(f"density on {self.n} atoms, variable on {X.n}")
        return math.fsum(self.z * X.values) / self.n


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    GREEDY = "greedy"
    SEARCH = "search"


@dataclass(frozen=True, eq=False)
class ConjugateReport:
    value: float
    witness: Union[AtomicRV, Density]
    method: Method
    lower_bound: bool = False
    diverged: bool = False

    def describe(self) -> str:
        if self.diverged:
            return "+inf (divergence detected)"
        return f"{self.value:.17g}" + (" (lower bound)" if self.lower_bound else "")


def _pairing(Z: AtomicRV, X: AtomicRV) -> float:
    return math.fsum(Z.values * X.values) / Z.n


# ─────────────────────────────────────────────────────────────────────────────
# Fenchel conjugate
# ─────────────────────────────────────────────────────────────────────────────

def _ascend(rho: RiskMeasure, Z: AtomicRV, start: np.ndarray, value: float) -> Tuple[np.ndarray, float, bool]:
    """Coordinate ascent on E[ZX] - rho(X) over single atoms and the constant direction."""
    n = Z.n
    x = start.copy()
    step = 1.0
    directions = list(np.eye(n)) + [np.ones(n)]
    for _ in range(MAX_SWEEPS):
        improved = False
        for d in directions:
            for sign in (1.0, -1.0):
                trial = x + sign * step * d
                cand = AtomicRV(trial)
                v = _pairing(Z, cand) - rho(cand)
                if v > value:
                    x, value, improved = trial, v, True
                    if value > DIVERGENCE_BOUND:
                        return x, value, True
        step = 2 * step if improved else step / 2
        if step < STALL_STEP:
            break
    return x, value, False


def fenchel_conjugate(
    rho: RiskMeasure,
    Z: AtomicRV,
    candidates: Optional[Sequence[AtomicRV]] = None,
    ascent: bool = True,
    method: Optional[Method] = None,
    threads: int = 1,
) -> ConjugateReport:
    """
    rho*(Z) = sup_X (E[ZX] - rho(X)).

    Closed form for es: 0 when -Z is a density bounded by 1/alpha, +inf otherwise.
    Any other measure (or method=SEARCH) gets a lower bound from the candidates
    followed by coordinate ascent; values past DIVERGENCE_BOUND report +inf.
    """
    if rho.kind is Kind.ES and method in (None, Method.CLOSED_FORM):
        feasible = is_feasible_density(-Z.values, 1.0 / rho.alpha)
        value = 0.0 if feasible else math.inf
        return ConjugateReport(value, AtomicRV(np.zeros(Z.n)), Method.CLOSED_FORM, diverged=not feasible)

    pool = [AtomicRV(np.zeros(Z.n))] + list(candidates or [])
    for X in pool:
        if X.n != Z.n:
            raise DimensionMismatchError(f"candidate on {X.n} atoms, Z on {Z.n}")
    with ThreadPoolExecutor(max_workers=threads) as ex:
        values = list(ex.map(lambda X: _pairing(Z, X) - rho(X), pool))
    best = int(np.argmax(values))
    x, value = pool[best].values, values[best]

    diverged = False
    if ascent:
        x, value, diverged = _ascend(rho, Z, np.asarray(x, dtype=float), value)
    if diverged:
        logger.info("[CONJUGATE] %s: objective passed %.0e, reporting +inf", rho.name, DIVERGENCE_BOUND)
        return ConjugateReport(math.inf, AtomicRV(x), Method.SEARCH, lower_bound=True, diverged=True)
    return ConjugateReport(value, AtomicRV(x), Method.SEARCH, lower_bound=True)


# ─────────────────────────────────────────────────────────────────────────────
# ES dual via the greedy density
# ─────────────────────────────────────────────────────────────────────────────

def es_dual_eval(X: AtomicRV, alpha: float) -> ConjugateReport:
    """
    max E_Q[-X] over densities 0 <= z <= 1/alpha: density 1/alpha on the
    floor(alpha n) worst atoms, the remaining mass on the next worst one.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha={alpha!r} outside (0, 1]")
    n = X.n
    order = np.argsort(X.values, kind="stable")
    k = _atoms_below(alpha, n)
    z = np.zeros(n)
    z[order[:k]] = 1.0 / alpha
    if k < n:
        # k <= alpha n, so the greedy mass k / alpha never exceeds n
        z[order[k]] = min(max(n - k / alpha, 0.0), 1.0 / alpha)
    density = Density(z, cap=1.0 / alpha)
    value = math.fsum(-density.z * X.values) / n
    return ConjugateReport(value, density, Method.GREEDY)


# ─────────────────────────────────────────────────────────────────────────────
# Biconjugate and Kusuoka penalty
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class BiconjugateResult:
    lower: float
    gap: float
    primal: float
    terms: Tuple[float, ...]


def biconjugate_check(
    rho: RiskMeasure,
    X: AtomicRV,
    densities: Sequence[Density],
    threads: int = 1,
) -> BiconjugateResult:
    """lower = max over densities of (E_Q[-X] - rho*(-dQ/dP)), a lower bound of rho(X)."""
    if not rho.properties.convex:
        raise ValueError(f"{rho.name} is not declared convex")
    if not densities:
        raise ValueError("densities must be nonempty")

    def term(d: Density) -> float:
        Z = AtomicRV(-d.z)
        conj = fenchel_conjugate(rho, Z, candidates=[X])
        if math.isinf(conj.value):
            return -math.inf
        return _pairing(Z, X) - conj.value

    with ThreadPoolExecutor(max_workers=threads) as ex:
        terms = tuple(ex.map(term, densities))
    primal = rho(X)
    lower = max(terms)
    return BiconjugateResult(lower, primal - lower, primal, terms)


def gamma_from_rho(
    rho: RiskMeasure,
    mu: Tuple[Sequence[float], Sequence[float]],
    acceptance_samples: Sequence[AtomicRV],
    threads: int = 1,
) -> float:
    """max over samples with rho(X) <= 0 of sum_i w_i ES_{alpha_i}(X): a lower bound of gamma(mu)."""
    if not acceptance_samples:
        raise ValueError("acceptance_samples must be nonempty")
    alphas, weights = mu
    with ThreadPoolExecutor(max_workers=threads) as ex:
        risks = list(ex.map(rho, acceptance_samples))
    accepted = [X for X, r in zip(acceptance_samples, risks) if r <= 0]
    if not accepted:
        raise EmptyAcceptanceError()
    logger.debug("[GAMMA] %d of %d samples accepted by %s", len(accepted), len(risks), rho.name)
    return max(mixture_value(X, alphas, weights) for X in accepted)


def boundary_samples(rho: RiskMeasure, n: int, count: int, seed: int = 0) -> List[AtomicRV]:
    """
    X = 0 plus `count` random bounded positions moved onto {rho <= 0}: shifted by
    rho(X) when rho is declared cash additive, filtered otherwise.
    """
    rng = np.random.default_rng(seed)
    samples = [AtomicRV(np.zeros(n))]
    for _ in range(count):
        X = AtomicRV(rng.normal(size=n) * rng.uniform(0.5, 5.0))
        r = rho(X)
        if rho.properties.cash_additive and math.isfinite(r):
            X = X.shift(r + 1e-12 * (1.0 + abs(r)))
        samples.append(X)
    return samples


# ─────────────────────────────────────────────────────────────────────────────
# Extension from bounded positions
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExtensionTrace:
    depths: Tuple[int, ...]
    values: Tuple[float, ...]
    stabilized: bool


def _stabilized(values: Sequence[float]) -> bool:
    if len(values) < 2:
        return False
    last, prev = values[-1], values[-2]
    return abs(last - prev) <= max(EXTENSION_RTOL * abs(last), EXTENSION_ATOL)


def extend_by_condexp(
    rho_bounded: RiskMeasure,
    X: RandomVariable,
    phi: OrliczFunction,
    depth: int,
    threads: int = 1,
) -> ExtensionTrace:
    """
    rho_bounded(E[X | pi_n]) along the nested level partitions of cecon_sequence.

    Each E[X | pi_n] is discretised onto N = 2^max(depth, 12) equally likely atoms,
    atom i being the average of the step quantile over [i/N, (i+1)/N].
    """
    cells = cecon_sequence(X, phi, depth)
    atoms = 2 ** max(depth, MIN_EXTENSION_ATOMS_LOG2)
    grid = np.arange(atoms + 1) / atoms

    def discretise(level) -> AtomicRV:
        return AtomicRV(atoms * np.diff(level.cumulative(grid)))

    with ThreadPoolExecutor(max_workers=threads) as ex:
        values = tuple(float(v) for v in ex.map(lambda c: rho_bounded(discretise(c)), cells))
    trace = ExtensionTrace(tuple(c.depth for c in cells), values, _stabilized(values))
    logger.info("[EXTEND] %s: %d depths, last %.17g, stabilized=%s", rho_bounded.name, depth, values[-1], trace.stabilized)
    return trace
