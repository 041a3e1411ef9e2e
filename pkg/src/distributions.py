import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import stats

from config import (
    DEFAULT_GRIDPOINTS,
    DEFAULT_TAIL_SPLIT,
    DIVERGENCE_FACTOR,
    EXPECTATION_RTOL,
    LAW_TOL,
    MAX_REFINEMENTS,
    OCTAVES_PER_LEVEL,
    PANELS_PER_OCTAVE,
    PHI_CAP,
    TAIL_OCTAVES,
)
from errors import DivergentIntegralError, NonComparableSupportsError, QuadratureSettingError

logger = logging.getLogger("distributions")

Evaluator = Callable[[np.ndarray], np.ndarray]

# Largest double strictly below 1, used when a quantile-only evaluator is asked for u -> 1.
_ONE_MINUS_ULP = 1.0 - 2.0 ** -53


# ─────────────────────────────────────────────────────────────────────────────
# Finite model: uniform n-atom space
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class AtomicRV:
    """A random variable on n equally likely atoms."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size < 1:
            raise ValueError("AtomicRV needs at least one atom")
        if not np.all(np.isfinite(arr)):
            raise ValueError("AtomicRV values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    @classmethod
    def constant(cls, c: float, n: int = 1) -> "AtomicRV":
        return cls(np.full(n, float(c)))

    def shift(self, m: float) -> "AtomicRV":
        return AtomicRV(self.values + m)

    def scale(self, c: float) -> "AtomicRV":
        return AtomicRV(self.values * c)

    def replicate(self, k: int) -> "AtomicRV":
        """Same law on k*n atoms."""
        return AtomicRV(np.repeat(self.values, k))

    def digest(self) -> str:
        return hashlib.md5(self.values.tobytes()).hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class LawSignature:
    sorted_values: np.ndarray


def law_signature(X: AtomicRV) -> LawSignature:
    """Empirical quantile function of X at levels k/n."""
    return LawSignature(np.sort(X.values))


def _common_refinement(X: AtomicRV, Y: AtomicRV) -> Tuple[np.ndarray, np.ndarray]:
    a, b = X.n, Y.n
    if a % b and b % a:
        raise NonComparableSupportsError(
            f"atom counts {a} and {b} have no common uniform refinement by replication"
        )
    m = max(a, b)
    sx = np.repeat(law_signature(X).sorted_values, m // a)
    sy = np.repeat(law_signature(Y).sorted_values, m // b)
    return sx, sy


def equal_in_law(X: AtomicRV, Y: AtomicRV, tol: float = LAW_TOL) -> bool:
    sx, sy = _common_refinement(X, Y)
    return bool(np.all(np.abs(sx - sy) <= tol))


# ─────────────────────────────────────────────────────────────────────────────
# Quadrature on the probability axis
# ─────────────────────────────────────────────────────────────────────────────

class QuadratureRule(NamedTuple):
    lower: np.ndarray      # u, ascending
    upper: np.ndarray      # 1 - u, computed without cancellation
    weights: np.ndarray
    right_start: int       # first index of the upper-tail panels


@lru_cache(maxsize=8)
def quadrature_rule(gridpoints: int, tail_split: float, level: int) -> QuadratureRule:
    """
    Composite midpoint rule on (0, 1) at a refinement level.

    Bulk panels are uniform on [1 - tail_split, tail_split]; each tail is cut into
    octaves p in [w 2^-(j+1), w 2^-j] (w = 1 - tail_split) with uniform panels in
    log2(p). Raising the level doubles every panel count and adds octaves.
    """
    w = 1.0 - tail_split
    bulk_panels = gridpoints * 2 ** level
    per_octave = PANELS_PER_OCTAVE * 2 ** level
    octaves = TAIL_OCTAVES + OCTAVES_PER_LEVEL * level

    h = (tail_split - w) / bulk_panels
    bulk_u = w + h * (np.arange(bulk_panels) + 0.5)
    bulk_w = np.full(bulk_panels, h)

    x = (np.arange(octaves * per_octave) + 0.5) / per_octave
    p = w * np.exp2(-x)
    tail_w = p * (math.log(2.0) / per_octave)

    lower = np.concatenate([p[::-1], bulk_u, 1.0 - p])
    upper = np.concatenate([1.0 - p[::-1], 1.0 - bulk_u, p])
    weights = np.concatenate([tail_w[::-1], bulk_w, tail_w])
    for arr in (lower, upper, weights):
        arr.setflags(write=False)
    return QuadratureRule(lower, upper, weights, p.size + bulk_panels)


class QuadratureTrace(NamedTuple):
    values: Tuple[float, ...]
    magnitudes: Tuple[float, ...]
    status: str            # "converged" | "divergent" | "unresolved"
    capped: bool

    @property
    def value(self) -> float:
        return self.values[-1] if self.values else math.nan


# ─────────────────────────────────────────────────────────────────────────────
# Quantile-backed model
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class QuantileRV:
    """
    A law given by its quantile function.

    `upper_quantile(p)` evaluates q(1 - p) accurately for small p; when absent the
    quantile is evaluated at 1 - p directly. `atoms` holds the sorted support of a
    variable lifted from an AtomicRV, which makes every quadrature exact.
    """

    quantile: Evaluator
    gridpoints: int = DEFAULT_GRIDPOINTS
    tail_split: float = DEFAULT_TAIL_SPLIT
    upper_quantile: Optional[Evaluator] = None
    atoms: Optional[np.ndarray] = None
    label: str = "custom"
    source: Optional[Tuple["QuantileRV", Evaluator, bool]] = field(default=None, repr=False)
    _cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if int(self.gridpoints) < 1:
            raise QuadratureSettingError(f"gridpoints must be a positive integer, got {self.gridpoints!r}")
        # the bulk band [1 - tail_split, tail_split] must be nonempty for the mirrored tails
        if not 0.5 < self.tail_split < 1.0:
            raise QuadratureSettingError(
                f"tail_split must lie in (0.5, 1), got {self.tail_split!r} (ORLICZ_TAIL_SPLIT)"
            )
        if self.atoms is not None:
            atoms = np.sort(np.asarray(self.atoms, dtype=float).reshape(-1))
            atoms.setflags(write=False)
            object.__setattr__(self, "atoms", atoms)

        levels = (np.arange(1024) + 0.5) / 1024
        sample = self.evaluate(levels)
        if not np.all(np.isfinite(sample)):
            raise ValueError(f"quantile of {self.label} is not finite on (0, 1)")
        scale = max(1.0, float(np.max(np.abs(sample))))
        if np.any(np.diff(sample) < -1e-12 * scale):
            raise ValueError(f"quantile of {self.label} is not nondecreasing")

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.quantile(np.asarray(u, dtype=float)), dtype=float)

    def evaluate_upper(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.upper_quantile is not None:
            return np.asarray(self.upper_quantile(p), dtype=float)
        return self.evaluate(np.minimum(1.0 - p, _ONE_MINUS_ULP))

    def tail_values(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Quantiles at levels p and 1 - p, usable for p far below the quadrature nodes."""
        p = np.asarray(p, dtype=float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.source is not None:
                parent, g, increasing = self.source
                low, high = parent.tail_values(p)
                if not increasing:
                    low, high = high, low
                return np.asarray(g(low), dtype=float), np.asarray(g(high), dtype=float)
            return self.evaluate(p), self.evaluate_upper(p)

    def discretize(self, level: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Quantile values at the quadrature nodes of `level` and their weights."""
        if self.atoms is not None:
            n = self.atoms.size
            return self.atoms, np.full(n, 1.0 / n)
        cached = self._cache.get(level)
        if cached is not None:
            return cached
        rule = quadrature_rule(int(self.gridpoints), float(self.tail_split), level)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.source is not None:
                # the rule is symmetric: node i of g(Y) sits at node -1-i of Y when g decreases
                parent, g, increasing = self.source
                base, _ = parent.discretize(level)
                values = np.asarray(g(base if increasing else base[::-1]), dtype=float)
            else:
                head = self.evaluate(rule.lower[: rule.right_start])
                tail = self.evaluate_upper(rule.upper[rule.right_start:])
                values = np.concatenate([head, tail])
        values.setflags(write=False)
        self._cache[level] = (values, rule.weights)
        return values, rule.weights


RandomVariable = Union[AtomicRV, QuantileRV]


def from_scipy(dist, label: str, **kwargs) -> QuantileRV:
    """Wrap a frozen scipy.stats distribution (ppf for the body, isf for the upper tail)."""
    return QuantileRV(quantile=dist.ppf, upper_quantile=dist.isf, label=label, **kwargs)


def exponential(rate: float = 1.0, **kwargs) -> QuantileRV:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return from_scipy(stats.expon(scale=1.0 / rate), f"exponential:rate={rate:g}", **kwargs)


def normal(mu: float = 0.0, sigma: float = 1.0, **kwargs) -> QuantileRV:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return from_scipy(stats.norm(loc=mu, scale=sigma), f"normal:mu={mu:g},sigma={sigma:g}", **kwargs)


def lognormal(sigma: float = 1.0, **kwargs) -> QuantileRV:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return from_scipy(stats.lognorm(s=sigma), f"lognormal:sigma={sigma:g}", **kwargs)


def pareto(b: float = 3.0, **kwargs) -> QuantileRV:
    if b <= 0:
        raise ValueError("pareto shape b must be positive")
    return from_scipy(stats.pareto(b=b), f"pareto:b={b:g}", **kwargs)


def uniform(low: float = 0.0, high: float = 1.0, **kwargs) -> QuantileRV:
    if not high > low:
        raise ValueError("uniform needs high > low")
    return from_scipy(stats.uniform(loc=low, scale=high - low), f"uniform:low={low:g},high={high:g}", **kwargs)


def constant(c: float, **kwargs) -> QuantileRV:
    c = float(c)
    return QuantileRV(
        quantile=lambda u: np.full(np.shape(u), c),
        upper_quantile=lambda p: np.full(np.shape(p), c),
        atoms=np.array([c]),
        label=f"constant:c={c:g}",
        **kwargs,
    )


def from_atomic(X: AtomicRV, **kwargs) -> QuantileRV:
    """Lift an AtomicRV: its step quantile u -> x_(floor(u n))."""
    sorted_values = law_signature(X).sorted_values
    n = sorted_values.size

    def step(u):
        idx = np.clip(np.floor(np.asarray(u) * n).astype(int), 0, n - 1)
        return sorted_values[idx]

    def step_upper(p):
        idx = np.clip(n - 1 - np.floor(np.asarray(p) * n).astype(int), 0, n - 1)
        return sorted_values[idx]

    return QuantileRV(
        quantile=step,
        upper_quantile=step_upper,
        atoms=sorted_values,
        label=f"atomic:n={n}",
        **kwargs,
    )


def neg_exponential(rate: float = 1.0, **kwargs) -> QuantileRV:
    """The law of -Y for Y ~ Exp(rate): an unbounded loss tail."""
    return affine(exponential(rate, **kwargs), -1.0, 0.0)


def as_quantile(X: RandomVariable) -> QuantileRV:
    return from_atomic(X) if isinstance(X, AtomicRV) else X


def essentially_bounded(X: RandomVariable) -> bool:
    """sup|X| is the same at the coarsest and finest quadrature levels (relative 1e-9)."""
    if isinstance(X, AtomicRV) or X.atoms is not None:
        return True
    coarse, _ = X.discretize(0)
    fine, _ = X.discretize(MAX_REFINEMENTS)
    a, b = float(np.max(np.abs(coarse))), float(np.max(np.abs(fine)))
    return math.isfinite(b) and b <= a * (1 + 1e-9) + 1e-300


def _monotone_map(Y: QuantileRV, g: Evaluator, increasing: bool, label: str) -> QuantileRV:
    if increasing:
        ppf = lambda u: g(Y.evaluate(u))
        isf = lambda p: g(Y.evaluate_upper(p))
    else:
        # q_{g(Y)}(u) = g(q_Y(1 - u)) for nonincreasing g
        ppf = lambda u: g(Y.evaluate_upper(u))
        isf = lambda p: g(Y.evaluate(p))
    atoms = None if Y.atoms is None else g(Y.atoms)
    return QuantileRV(
        quantile=ppf,
        upper_quantile=isf,
        gridpoints=Y.gridpoints,
        tail_split=Y.tail_split,
        atoms=atoms,
        label=label,
        source=(Y, g, increasing) if Y.atoms is None else None,
    )


def affine(Y: QuantileRV, scale: float = 1.0, shift: float = 0.0) -> QuantileRV:
    """The law of shift + scale * Y."""
    if scale == 0:
        return constant(shift, gridpoints=Y.gridpoints, tail_split=Y.tail_split)
    label = f"{shift:g}+{scale:g}*({Y.label})"
    return _monotone_map(Y, lambda v: shift + scale * v, scale > 0, label)


def negative_part(X: QuantileRV) -> QuantileRV:
    return _monotone_map(X, lambda v: np.maximum(-v, 0.0), False, f"({X.label})^-")


def truncate_min(Y: QuantileRV, n: float) -> QuantileRV:
    """The law of min(Y, n); n = inf returns Y itself."""
    if not n > 0:
        raise ValueError("truncation level must be positive")
    if math.isinf(n):
        return Y
    return _monotone_map(Y, lambda v: np.minimum(v, n), True, f"min({Y.label},{n:g})")


def exp_truncation_family(
    depth: int, rate: float = 1.0, shift: Optional[float] = None
) -> Tuple[List[QuantileRV], QuantileRV]:
    """
    X_n = shift - min(Y, n) for n = 1..depth and the limit X = shift - Y, Y ~ Exp(rate).

    Every X_n is bounded while X is not; shift defaults to E[Y].
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    Y = exponential(rate)
    mean = 1.0 / rate
    shift = mean if shift is None else float(shift)
    if shift < mean:
        raise ValueError("shift must be at least E[Y] so that E[X_n] >= 0")
    sequence = [affine(truncate_min(Y, float(n)), -1.0, shift) for n in range(1, depth + 1)]
    return sequence, affine(Y, -1.0, shift)


# ─────────────────────────────────────────────────────────────────────────────
# Expectations
# ─────────────────────────────────────────────────────────────────────────────

def _stable(values: List[float], scales: List[float], rtol: float, steps: int) -> bool:
    if len(values) < steps + 1:
        return False
    for a, b, s in zip(values[-steps - 1:-1], values[-steps:], scales[-steps:]):
        if abs(b - a) > rtol * s:
            return False
    return True


def integrate(
    X: QuantileRV,
    integrand: Evaluator,
    rtol: float = EXPECTATION_RTOL,
    stable_steps: int = 1,
    max_level: int = MAX_REFINEMENTS,
) -> QuadratureTrace:
    """
    Integrate integrand(q(u)) over (0, 1) on successive refinement levels.

    Converged when the last `stable_steps` level changes are within rtol of the
    absolute integral; divergent when the absolute integral grows by
    DIVERGENCE_FACTOR over three refinements or any integrand value reaches PHI_CAP.
    """
    signed: List[float] = []
    magnitude: List[float] = []
    for level in range(max_level + 1):
        values, weights = X.discretize(level)
        with np.errstate(over="ignore", invalid="ignore"):
            f = np.asarray(integrand(values), dtype=float)
        if not np.all(np.isfinite(f)) or np.any(np.abs(f) >= PHI_CAP):
            logger.debug("[QUAD] %s: integrand capped at level %d", X.label, level)
            return QuadratureTrace(tuple(signed), tuple(magnitude), "divergent", True)
        signed.append(float(np.dot(weights, f)))
        magnitude.append(float(np.dot(weights, np.abs(f))))
        if X.atoms is not None:
            # exact at every level
            return QuadratureTrace(tuple(signed), tuple(magnitude), "converged", False)
        if _stable(signed, magnitude, rtol, stable_steps):
            return QuadratureTrace(tuple(signed), tuple(magnitude), "converged", False)
        if len(magnitude) >= 4 and magnitude[-1] >= DIVERGENCE_FACTOR * magnitude[-4]:
            return QuadratureTrace(tuple(signed), tuple(magnitude), "divergent", False)
    return QuadratureTrace(tuple(signed), tuple(magnitude), "unresolved", False)


def expectation(X: RandomVariable) -> float:
    if isinstance(X, AtomicRV):
        return math.fsum(X.values) / X.n
    trace = integrate(X, lambda v: v)
    if trace.status == "divergent":
        raise DivergentIntegralError(f"E[{X.label}] diverges: input is not integrable")
    if trace.status == "unresolved":
        logger.warning(
            "[QUAD] E[%s] did not reach rtol %.0e; returning finest level %r",
            X.label, EXPECTATION_RTOL, trace.values,
        )
    return trace.value


# ─────────────────────────────────────────────────────────────────────────────
# Dominated sequences for Fatou probes
# ─────────────────────────────────────────────────────────────────────────────

class Scheme(str, Enum):
    MONOTONE_DOWN = "monotone_down"
    OSCILLATING = "oscillating"
    NOISE_DECAY = "noise_decay"


def dominated_sequence(X: AtomicRV, scheme: Union[Scheme, str], count: int, seed: int = 0) -> List[AtomicRV]:
    """X_1..X_count converging to X entrywise with |X_k| <= |X| + 1."""
    if count < 1:
        raise ValueError("count must be at least 1")
    scheme = Scheme(scheme)
    ks = np.arange(1, count + 1, dtype=float)
    if scheme is Scheme.MONOTONE_DOWN:
        return [X.shift(1.0 / k) for k in ks]
    if scheme is Scheme.OSCILLATING:
        return [X.shift((-1.0) ** int(k) / k) for k in ks]
    rng = np.random.default_rng(seed)
    return [AtomicRV(X.values + rng.uniform(-1.0, 1.0, X.n) / k) for k in ks]
