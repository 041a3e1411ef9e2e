import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from config import (
    CONJUGATE_TOL,
    DELTA2_OCTAVES,
    DELTA2_RTOL,
    DELTA2_T0,
    EXPECTATION_RTOL,
    FAR_TAIL_OCTAVES,
    HEART_RTOL,
    LUXEMBURG_RTOL,
    MAX_REFINEMENTS,
    OCTAVES_PER_LEVEL,
    OVERFLOW_GUARD,
    PHI_CAP,
    SANDWICH_SLACK,
    TAIL_OCTAVES,
)
from distributions import AtomicRV, QuantileRV, RandomVariable, as_quantile, essentially_bounded, integrate
from errors import ConjugateOverflowError, NotInOrliczSpaceError, NumericalInvariantError

logger = logging.getLogger("orlicz")


class Family(str, Enum):
    POWER = "power"
    POWER_OVER_P = "power_over_p"
    EXP_MINUS_ONE = "exp_minus_one"
    EXP_SQUARE_MINUS_ONE = "exp_square_minus_one"
    CUSTOM_TABLE = "custom_table"
    CONJUGATE = "conjugate"


@dataclass(frozen=True)
class Delta2:
    status: str                   # "true" | "false" | "unknown"
    provenance: str = "analytic"  # "analytic" | "probed"
    k: Optional[float] = None

    @property
    def holds(self) -> Optional[bool]:
        return {"true": True, "false": False}.get(self.status)


# ─────────────────────────────────────────────────────────────────────────────
# Orlicz function pairs
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class OrliczFunction:
    """
    An Orlicz function Phi together with its conjugate Psi.

    Phi values are capped at PHI_CAP; Psi returns +inf where the conjugate is infinite.
    Build instances with the family constructors below rather than directly.
    """

    family: Family
    p: Optional[float] = None
    knots: Optional[Tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)
    base: Optional["OrliczFunction"] = field(default=None, repr=False)
    delta2: Delta2 = Delta2("unknown")

    # ── Evaluators ─────────────────────────────────────────────────────────

    def phi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            raw = self._phi_raw(t)
        raw = np.where(np.isnan(raw), PHI_CAP, raw)
        return np.minimum(raw, PHI_CAP)

    def _phi_raw(self, t: np.ndarray) -> np.ndarray:
        f = self.family
        if f is Family.POWER:
            return t ** self.p
        if f is Family.POWER_OVER_P:
            return t ** self.p / self.p
        if f is Family.EXP_MINUS_ONE:
            return np.expm1(t)
        if f is Family.EXP_SQUARE_MINUS_ONE:
            return np.expm1(t * t)
        if f is Family.CUSTOM_TABLE:
            ts, ys = self.knots
            slope = (ys[-1] - ys[-2]) / (ts[-1] - ts[-2])
            inside = np.interp(t, ts, ys)
            return np.where(t > ts[-1], ys[-1] + slope * (t - ts[-1]), inside)
        return self.base.psi(t)

    def psi(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise ValueError("conjugate is evaluated on s >= 0 only")
        closed = self._psi_closed(s)
        if closed is not None:
            return closed
        return _numeric_conjugate(self, s)

    def _psi_closed(self, s: np.ndarray) -> Optional[np.ndarray]:
        f = self.family
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            if f in (Family.POWER, Family.POWER_OVER_P) and self.p == 1.0:
                return np.where(s <= 1.0, 0.0, np.inf)
            if f is Family.POWER:
                p = self.p
                return (p - 1.0) * (s / p) ** (p / (p - 1.0))
            if f is Family.POWER_OVER_P:
                q = self.p / (self.p - 1.0)
                return s ** q / q
            if f is Family.EXP_MINUS_ONE:
                big = np.maximum(s, 1.0)
                return np.where(s >= 1.0, big * np.log(big) - big + 1.0, 0.0)
            if f is Family.CUSTOM_TABLE:
                ts, ys = self.knots
                last_slope = (ys[-1] - ys[-2]) / (ts[-1] - ts[-2])
                # sup over a convex piecewise-linear Phi is attained at a knot
                best = np.max(np.outer(s, ts) - ys[None, :], axis=1).reshape(s.shape)
                return np.where(s <= last_slope * (1 + 1e-15), best, np.inf)
            if f is Family.CONJUGATE:
                return np.asarray(self.base.phi(s), dtype=float)
        return None

    def inverse(self, y: float) -> float:
        """sup{t >= 0 : Phi(t) <= y}."""
        if y < 0:
            raise ValueError("inverse is defined for y >= 0")
        f = self.family
        if f is Family.POWER:
            return y ** (1.0 / self.p)
        if f is Family.POWER_OVER_P:
            return (self.p * y) ** (1.0 / self.p)
        if f is Family.EXP_MINUS_ONE:
            return math.log1p(y)
        if f is Family.EXP_SQUARE_MINUS_ONE:
            return math.sqrt(math.log1p(y))
        return _bisect_inverse(self, y)

    # ── Descriptors ────────────────────────────────────────────────────────

    @property
    def name(self) -> str:
        if self.family in (Family.POWER, Family.POWER_OVER_P):
            return f"{self.family.value}:p={self.p:g}"
        if self.family is Family.CUSTOM_TABLE:
            return f"table:{self.knots[0].size}-knots"
        if self.family is Family.CONJUGATE:
            return f"conjugate({self.base.name})"
        return self.family.value

    @property
    def has_closed_conjugate(self) -> bool:
        return self.family is not Family.EXP_SQUARE_MINUS_ONE

    def dual(self) -> "OrliczFunction":
        """The pair (Psi, Phi) viewed as an Orlicz function in its own right."""
        if self.family is Family.CONJUGATE:
            return self.base
        delta2 = Delta2("unknown")
        if self.family in (Family.POWER, Family.POWER_OVER_P) and self.p > 1:
            q = self.p / (self.p - 1.0)
            delta2 = Delta2("true", "analytic", 2.0 ** q)
        return OrliczFunction(Family.CONJUGATE, base=self, delta2=delta2)


def power(p: float) -> OrliczFunction:
    if p < 1:
        raise ValueError("power family needs p >= 1")
    return OrliczFunction(Family.POWER, p=float(p), delta2=Delta2("true", "analytic", 2.0 ** p))


def power_over_p(p: float) -> OrliczFunction:
    if p < 1:
        raise ValueError("power_over_p family needs p >= 1")
    return OrliczFunction(Family.POWER_OVER_P, p=float(p), delta2=Delta2("true", "analytic", 2.0 ** p))


def exp_minus_one() -> OrliczFunction:
    return OrliczFunction(Family.EXP_MINUS_ONE, delta2=Delta2("false", "analytic"))


def exp_square_minus_one() -> OrliczFunction:
    return OrliczFunction(Family.EXP_SQUARE_MINUS_ONE, delta2=Delta2("false", "analytic"))


def custom_table(t: Sequence[float], phi_t: Sequence[float]) -> OrliczFunction:
    """
    Piecewise-linear Phi through the knots (t_i, phi_t_i), extended past the last
    knot with the last slope. Knots must start at (0, 0), be strictly increasing
    in t, and have nondecreasing slopes.
    """
    ts = np.asarray(t, dtype=float)
    ys = np.asarray(phi_t, dtype=float)
    if ts.size < 2 or ts.size != ys.size:
        raise ValueError("table needs at least two (t, phi_t) knots")
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(ys))):
        raise ValueError("table values must be finite")
    if ts[0] != 0.0 or ys[0] != 0.0:
        raise ValueError("table must start at (0, 0)")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("table t values must be strictly increasing")
    if np.any(np.diff(ys) < 0):
        raise ValueError("table phi_t values must be nondecreasing")
    if ys[1] <= 0:
        raise ValueError("table phi_t must be positive for t > 0")
    slopes = np.diff(ys) / np.diff(ts)
    if np.any(np.diff(slopes) < -1e-12 * np.maximum(1.0, np.abs(slopes[1:]))):
        raise ValueError("table is not convex: slopes must be nondecreasing")
    ts.setflags(write=False)
    ys.setflags(write=False)
    return OrliczFunction(Family.CUSTOM_TABLE, knots=(ts, ys))


# ─────────────────────────────────────────────────────────────────────────────
# Conjugates
# ─────────────────────────────────────────────────────────────────────────────

def _objective(phi: OrliczFunction, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    return t * s - phi.phi(t)


def _numeric_conjugate(phi: OrliczFunction, s: np.ndarray, strict: bool = False) -> np.ndarray:
    """
    Ternary search of t -> ts - Phi(t), which is concave, after doubling the
    bracket [0, b] until the objective turns down. Entries whose bracket passes
    OVERFLOW_GUARD are +inf (or raise when strict).
    """
    shape = s.shape
    s = s.reshape(-1)
    hi = np.ones_like(s)
    infinite = np.zeros(s.shape, dtype=bool)
    grow = _objective(phi, 2 * hi, s) >= _objective(phi, hi, s)
    while np.any(grow):
        hi = np.where(grow, 2 * hi, hi)
        over = hi > OVERFLOW_GUARD
        if np.any(over):
            if strict:
                raise ConjugateOverflowError(
                    f"conjugate of {phi.name} is effectively infinite at s={float(s[over][0]):g}"
                )
            infinite |= over
            hi = np.where(over, 1.0, hi)
        grow = ~infinite & (_objective(phi, 2 * hi, s) >= _objective(phi, hi, s))

    lo = np.zeros_like(s)
    hi = 2 * hi
    while np.max(hi - lo) > CONJUGATE_TOL * np.max(1.0 + hi):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        left = _objective(phi, m1, s) < _objective(phi, m2, s)
        lo = np.where(left, m1, lo)
        hi = np.where(left, hi, m2)
    value = np.maximum(_objective(phi, (lo + hi) / 2, s), 0.0)
    return np.where(infinite, np.inf, value).reshape(shape)


def conjugate(phi: OrliczFunction, s: float, numeric: bool = False) -> float:
    """Psi(s) = sup_{t >= 0} (ts - Phi(t)); closed form unless numeric=True."""
    if s < 0:
        raise ValueError("conjugate is evaluated on s >= 0 only")
    if s == 0:
        return 0.0
    arr = np.array([float(s)])
    if not numeric and phi.has_closed_conjugate:
        value = float(phi.psi(arr)[0])
        if math.isinf(value):
            raise ConjugateOverflowError(f"conjugate of {phi.name} is infinite at s={s:g}")
        return value
    return float(_numeric_conjugate(phi, arr, strict=True)[0])


def young_gap(phi: OrliczFunction, t: float, s: float) -> float:
    if t < 0 or s < 0:
        raise ValueError("young_gap needs t, s >= 0")
    return float(phi.phi(t)) + float(phi.psi(s)) - t * s


def _bisect_inverse(phi: OrliczFunction, y: float) -> float:
    if y == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while float(phi.phi(hi)) <= y:
        lo, hi = hi, 2 * hi
        if hi > OVERFLOW_GUARD:
            raise ConjugateOverflowError(f"{phi.name} never reaches {y:g}")
    while hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if float(phi.phi(mid)) <= y:
            lo = mid
        else:
            hi = mid
    return lo


# ─────────────────────────────────────────────────────────────────────────────
# Axiom diagnostics
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class OrliczCheck:
    zero_at_origin: bool
    nondecreasing: bool
    midpoint_convex: bool
    positive: bool
    superlinear: bool

    @property
    def valid(self) -> bool:
        return self.zero_at_origin and self.nondecreasing and self.midpoint_convex and self.positive


def superlinearity_probe(phi: OrliczFunction, window: int = 64) -> bool:
    """Phi(t)/t at t = 2^k keeps growing until Phi passes OVERFLOW_GUARD."""
    ratios: List[float] = []
    for k in range(0, 1000):
        t = 2.0 ** k
        value = float(phi.phi(t))
        ratios.append(value / t)
        if value >= OVERFLOW_GUARD:
            break
    ratios = np.asarray(ratios)
    if ratios.size < 2 or np.any(np.diff(ratios) < 0):
        return False
    w = min(window, ratios.size - 1)
    base = ratios[-1 - w]
    return base > 0 and ratios[-1] >= 1.01 * base and ratios[-1] >= 16 * max(ratios[0], 1e-300)


def check_orlicz_function(phi: OrliczFunction, seed: int = 0) -> OrliczCheck:
    """Probe the Orlicz-function axioms on a 1024-point log grid and random pairs."""
    grid = np.logspace(-6, 6, 1024)
    values = phi.phi(grid)
    zero = float(phi.phi(0.0)) == 0.0
    nondecreasing = bool(np.all(np.diff(values) >= 0))
    positive = bool(np.all(values > 0))

    rng = np.random.default_rng(seed)
    a = rng.choice(grid, 2048)
    b = rng.choice(grid, 2048)
    fa, fb = phi.phi(a), phi.phi(b)
    ok = (fa < PHI_CAP) & (fb < PHI_CAP)
    mid = phi.phi((a + b) / 2)
    convex = bool(np.all(mid[ok] <= (fa[ok] + fb[ok]) / 2 + 1e-10 * np.maximum(1.0, mid[ok])))

    superlinear = superlinearity_probe(phi)
    if not superlinear:
        logger.warning("[ORLICZ] %s: Phi(t)/t does not grow without bound on the probe grid", phi.name)
    return OrliczCheck(zero, nondecreasing, convex, positive, superlinear)


# ─────────────────────────────────────────────────────────────────────────────
# Luxemburg norm
# ─────────────────────────────────────────────────────────────────────────────

def _assert_monotone_trace(trace: Dict[float, float], label: str):
    lams = sorted(trace)
    gs = np.array([trace[lam] for lam in lams])
    finite = np.isfinite(gs)
    gs = np.where(finite, gs, np.inf)
    slack = 1e-12 * np.maximum(1.0, np.abs(np.where(finite, gs, 0.0)))
    if np.any(np.diff(gs) > slack[1:]):
        raise NumericalInvariantError(f"g(lambda) not nonincreasing on the bisection trace for {label}")


def _bisect(g, lo: float, hi: float, trace: Dict[float, float]) -> float:
    while hi - lo > LUXEMBURG_RTOL * hi:
        mid = 0.5 * (lo + hi)
        value = g(mid)
        trace[mid] = value
        if value <= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _luxemburg_atomic(values: np.ndarray, weights: Optional[np.ndarray], phi: OrliczFunction, label: str) -> float:
    a = np.abs(values)
    top = float(a.max())
    if top == 0:
        return 0.0

    def g(lam: float) -> float:
        f = phi.phi(a / lam)
        if weights is None:
            return math.fsum(f) / a.size - 1.0
        return float(np.dot(weights, f)) - 1.0

    trace: Dict[float, float] = {}
    lo = hi = top / phi.inverse(1.0)
    trace[hi] = g(hi)
    while trace[hi] > 0:
        lo, hi = hi, 2 * hi
        trace[hi] = g(hi)
    if lo == hi:
        lo = hi / 2
        trace[lo] = g(lo)
        while trace[lo] <= 0:
            hi, lo = lo, lo / 2
            trace[lo] = g(lo)
    result = _bisect(g, lo, hi, trace)
    _assert_monotone_trace(trace, label)
    logger.debug("[LUXEMBURG] %s: %.17g after %d evaluations", label, result, len(trace))
    return result


def _far_tail_decays(X: QuantileRV, phi: OrliczFunction, lam: float) -> bool:
    """
    Whether the octave masses p Phi(|q|/lam) keep shrinking in both tails from the
    deepest quadrature octave down to p ~ 2^-FAR_TAIL_OCTAVES.
    """
    first = TAIL_OCTAVES + OCTAVES_PER_LEVEL * MAX_REFINEMENTS
    p = (1.0 - X.tail_split) * np.exp2(-np.arange(first, FAR_TAIL_OCTAVES + 1, dtype=float))
    for q in X.tail_values(p):
        with np.errstate(over="ignore", invalid="ignore"):
            raw = phi.phi(np.abs(q) / lam)
        if not np.all(np.isfinite(q)) or np.any(raw >= PHI_CAP):
            return False
        mass = p * raw
        if np.any(np.diff(mass) > 1e-9 * mass[:-1]):
            return False
    return True


def luxemburg_norm(X: RandomVariable, phi: OrliczFunction) -> float:
    """inf{lambda > 0 : E[Phi(|X| / lambda)] <= 1}."""
    if isinstance(X, AtomicRV):
        return _luxemburg_atomic(X.values, None, phi, X.digest())
    if X.atoms is not None:
        return _luxemburg_atomic(X.atoms, None, phi, X.label)

    mean_abs = integrate(X, np.abs)
    if mean_abs.status == "divergent":
        raise NotInOrliczSpaceError(f"E|{X.label}| diverges")
    if mean_abs.value == 0:
        return 0.0

    # Jensen: Phi(E|X| / lambda) <= E[Phi(|X| / lambda)], so the norm is at least this
    lo = mean_abs.value / phi.inverse(1.0)
    hi = lo
    level = None
    hidden_growth = False
    for _ in range(64):
        trace = integrate(X, lambda v: phi.phi(np.abs(v) / hi), rtol=EXPECTATION_RTOL)
        if trace.status == "converged" and trace.value <= 1.0:
            if _far_tail_decays(X, phi, hi):
                level = len(trace.values) - 1
                break
            # the quadrature accepted a lambda whose integrand still grows past its nodes
            hidden_growth = True
            logger.info("[LUXEMBURG] %s: tail grows past the quadrature nodes at lambda=%.6g", X.label, hi)
        lo, hi = hi, 2 * hi
    if level is None:
        raise NotInOrliczSpaceError(f"E[Phi(|{X.label}|/lambda)] is infinite for every probed lambda")
    if hidden_growth:
        raise NotInOrliczSpaceError(
            f"Phi(|{X.label}|/lambda) outgrows the tail of {X.label} beyond the quadrature nodes"
        )
    if hi == lo:
        lo = hi / 2

    values, weights = X.discretize(level)
    trace_g: Dict[float, float] = {}
    result = _bisect(
        lambda lam: float(np.dot(weights, phi.phi(np.abs(values) / lam))) - 1.0,
        lo, hi, trace_g,
    )
    _assert_monotone_trace(trace_g, X.label)
    logger.debug("[LUXEMBURG] %s under %s: %.17g at level %d", X.label, phi.name, result, level)
    return result


# ─────────────────────────────────────────────────────────────────────────────
# Orlicz norm (Amemiya formula)
# ─────────────────────────────────────────────────────────────────────────────

def orlicz_norm(Z: AtomicRV, psi_of: OrliczFunction) -> float:
    """
    Orlicz norm of Z in L^Psi: sup{E[XZ] : ||X||_Phi <= 1} with Phi the conjugate
    of Psi, computed as inf_k (1 + E[Psi(k|Z|)]) / k and checked against the
    Luxemburg sandwich under Psi.
    """
    a = np.abs(Z.values)
    top = float(a.max())
    if top == 0:
        return 0.0

    def h(k: float) -> float:
        value = (1.0 + math.fsum(psi_of.phi(k * a)) / a.size) / k
        return value if math.isfinite(value) else PHI_CAP

    lux = luxemburg_norm(Z, psi_of)
    # k = 1/lux gives exactly 2 * lux
    ks = [1.0 / lux] + [2.0 ** j / top for j in range(-40, 41)]
    grid = [h(k) for k in ks]
    best_k = ks[int(np.argmin(grid))]
    res = minimize_scalar(
        lambda x: h(math.exp(x)),
        bounds=(math.log(best_k / 2), math.log(best_k * 2)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    value = min(min(grid), float(res.fun))
    logger.debug("[ORLICZ] Amemiya minimum %.17g at k ~ %.6g", value, best_k)

    if not lux * (1 - SANDWICH_SLACK) <= value <= 2 * lux * (1 + SANDWICH_SLACK):
        raise NumericalInvariantError(
            f"Orlicz norm {value:.17g} outside [{lux:.17g}, {2 * lux:.17g}]"
        )
    return value


def dual_pairing_bound(Z: AtomicRV, phi: OrliczFunction, candidates: List[AtomicRV]) -> float:
    """max over candidates of E[XZ] / ||X||_Phi, a lower bound of the Orlicz norm of Z."""
    best = 0.0
    for X in candidates:
        norm = luxemburg_norm(X, phi)
        if norm > 0:
            best = max(best, math.fsum(X.values * Z.values) / Z.n / norm)
    return best


# ─────────────────────────────────────────────────────────────────────────────
# Heart membership and Delta2
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class HeartReport:
    verdicts: Dict[float, str]   # lambda -> "finite" | "divergent" | "inconclusive"
    values: Dict[float, float]

    @property
    def in_heart(self) -> bool:
        return all(v == "finite" for v in self.verdicts.values())

    @property
    def divergent(self) -> List[float]:
        return [lam for lam, v in self.verdicts.items() if v == "divergent"]


_VERDICT = {"converged": "finite", "divergent": "divergent", "unresolved": "inconclusive"}


def heart_membership_probe(
    X: RandomVariable, phi: OrliczFunction, lambdas: Sequence[float]
) -> HeartReport:
    if not lambdas:
        raise ValueError("lambdas must be nonempty")
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("lambdas must be positive")
    Xq = as_quantile(X)
    # bounded variables lie in every heart
    bounded = essentially_bounded(Xq)
    verdicts: Dict[float, str] = {}
    values: Dict[float, float] = {}
    for lam in lambdas:
        trace = integrate(Xq, lambda v: phi.phi(np.abs(v) / lam), rtol=HEART_RTOL, stable_steps=2)
        verdicts[float(lam)] = "finite" if bounded else _VERDICT[trace.status]
        values[float(lam)] = math.inf if trace.capped else trace.value
        logger.debug("[HEART] %s lambda=%g: %s %r", Xq.label, lam, trace.status, trace.values)
    report = HeartReport(verdicts, values)
    logger.info("[HEART] %s under %s: in heart = %s", Xq.label, phi.name, report.in_heart)
    return report


@dataclass(frozen=True)
class Delta2Result:
    holds: bool
    k: Optional[float]
    provenance: str


def _sup_ratio(phi: OrliczFunction, t0: float, grid: int) -> Tuple[float, bool]:
    t = t0 * np.exp2(np.linspace(0.0, DELTA2_OCTAVES, grid))
    num, den = phi.phi(2 * t), phi.phi(t)
    if np.any(num >= PHI_CAP) or np.any(den <= 0):
        return math.inf, True
    return float(np.max(num / den)), False


def delta2_probe(phi: OrliczFunction, t0: float = DELTA2_T0, grid: int = 1024) -> Delta2Result:
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    if grid < 16:
        raise ValueError("grid must be at least 16")
    if phi.delta2.provenance == "analytic" and phi.delta2.holds is not None:
        return Delta2Result(phi.delta2.holds, phi.delta2.k, "analytic")

    coarse, capped = _sup_ratio(phi, t0, grid)
    fine, capped_fine = _sup_ratio(phi, t0, 2 * grid)
    if capped or capped_fine:
        return Delta2Result(False, None, "probed")
    if abs(fine - coarse) <= DELTA2_RTOL * coarse:
        return Delta2Result(True, fine, "probed")
    return Delta2Result(False, None, "probed")
