"""
Property probes for risk measures: axioms, Fatou and norm lower semicontinuity,
dilatation monotonicity, conditional-expectation decay and the order blow-up
statistic. Every probe pre-draws its randomness from the seed, evaluates in a
fixed order and returns a ProbeReport.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from config import AXIOM_TOL, DILATATION_TOL, FATOU_TOL
from data_io import write_scenarios
from distributions import (
    AtomicRV,
    QuantileRV,
    RandomVariable,
    Scheme,
    affine,
    as_quantile,
    dominated_sequence,
)
from duality import extend_by_condexp
from errors import ChainNotNestedError, DimensionMismatchError
from orlicz import OrliczFunction
from partitions import Partition, _node_edges, cond_exp, refines
from risk import Kind, RiskMeasure

logger = logging.getLogger("harness")


# ─────────────────────────────────────────────────────────────────────────────
# Reports
# ─────────────────────────────────────────────────────────────────────────────

class Violation(BaseModel):
    digest: str
    property: str
    gap: float


class ProbeReport(BaseModel):
    probe_name: str
    seed: int
    trials: int
    passed: bool
    violations: List[Violation] = Field(default_factory=list)
    verdicts: Dict[str, bool] = Field(default_factory=dict)
    liminf: Optional[float] = None
    values: List[float] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    scope: Optional[str] = None

    @model_validator(mode="after")
    def _passed_iff_clean(self):
        if self.passed != (not self.violations):
            raise ValueError("passed must be true exactly when there are no violations")
        return self


def _report(name: str, seed: int, trials: int, violations: List[Violation], **extra) -> ProbeReport:
    report = ProbeReport(
        probe_name=name, seed=seed, trials=trials, passed=not violations, violations=violations, **extra
    )
    logger.info("[PROBE] %s seed=%d trials=%d violations=%d", name, seed, trials, len(violations))
    return report


def _digest(*variables: AtomicRV) -> str:
    h = hashlib.md5()
    for X in variables:
        h.update(X.values.tobytes())
    return h.hexdigest()[:12]


def _archive(witness_dir: Optional[Path], probe: str, prop: str, variables: Sequence[AtomicRV]) -> str:
    digest = _digest(*variables)
    if witness_dir is not None:
        witness_dir.mkdir(parents=True, exist_ok=True)
        for k, X in enumerate(variables):
            write_scenarios(X, witness_dir / f"{probe}_{prop}_{digest}_{k}.csv")
    return digest


# ─────────────────────────────────────────────────────────────────────────────
# Axioms
# ─────────────────────────────────────────────────────────────────────────────

AXIOMS = (
    "monotone",
    "cash_additive",
    "convex",
    "quasiconvex",
    "positively_homogeneous",
    "law_invariant",
)

LAMBDA_GRID = np.linspace(0.0, 1.0, 11)


class _AxiomTrial(NamedTuple):
    prop: str
    X: AtomicRV
    Y: AtomicRV
    scalar: float


def _axiom_gap(rho: RiskMeasure, t: _AxiomTrial) -> Tuple[float, float]:
    """(observed gap, allowed gap); the trial violates its axiom when the first exceeds the second."""
    X, Y, s = t.X, t.Y, t.scalar
    if t.prop == "monotone":
        # Y <= X entrywise
        a, b = rho(X), rho(Y)
        return a - b, AXIOM_TOL * (1 + abs(a) + abs(b))
    if t.prop == "cash_additive":
        a, b = rho(X.shift(s)), rho(X) - s
        return abs(a - b), AXIOM_TOL * (1 + abs(a) + abs(b))
    if t.prop in ("convex", "quasiconvex"):
        mix = rho(AtomicRV(s * X.values + (1 - s) * Y.values))
        a, b = rho(X), rho(Y)
        bound = s * a + (1 - s) * b if t.prop == "convex" else max(a, b)
        return mix - bound, AXIOM_TOL * (1 + abs(mix) + abs(bound))
    if t.prop == "positively_homogeneous":
        a, b = rho(X.scale(s)), s * rho(X)
        return abs(a - b), AXIOM_TOL * (1 + abs(a) + abs(b))
    # law_invariant: Y is a permutation of X
    a, b = rho(X), rho(Y)
    return abs(a - b), AXIOM_TOL * (1 + abs(a) + abs(b))


def random_population(count: int, seed: int = 0, max_atoms: int = 16, n: Optional[int] = None) -> List[AtomicRV]:
    """Scenario vectors with random size (or fixed size n), location and scale."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        size = n if n is not None else int(rng.integers(1, max_atoms + 1))
        out.append(AtomicRV(rng.normal(loc=rng.normal(scale=2.0), scale=rng.uniform(0.1, 5.0), size=size)))
    return out


def crafted_var_pair(alpha: float) -> Tuple[AtomicRV, AtomicRV]:
    """Two single-loss positions on n = ceil(1/alpha) atoms whose average has larger VaR_alpha."""
    n = max(2, math.ceil(1.0 / alpha - 1e-12))
    X, Y = np.zeros(n), np.zeros(n)
    X[0], Y[1] = -1.0, -1.0
    return AtomicRV(X), AtomicRV(Y)


def _draw_trials(
    rho: RiskMeasure, population: Sequence[AtomicRV], props: Sequence[str], trials: int, rng: np.random.Generator
) -> List[_AxiomTrial]:
    by_size: Dict[int, List[int]] = {}
    for i, X in enumerate(population):
        by_size.setdefault(X.n, []).append(i)

    out: List[_AxiomTrial] = []
    for prop in props:
        for _ in range(trials):
            X = population[int(rng.integers(len(population)))]
            peers = by_size[X.n]
            Y = population[peers[int(rng.integers(len(peers)))]]
            noise = rng.normal(size=X.n)
            if prop == "monotone":
                out.append(_AxiomTrial(prop, X, AtomicRV(np.minimum(X.values, Y.values) - np.abs(noise)), 0.0))
            elif prop == "cash_additive":
                out.append(_AxiomTrial(prop, X, X, float(rng.normal(scale=5.0))))
            elif prop in ("convex", "quasiconvex"):
                lam = float(LAMBDA_GRID[int(rng.integers(LAMBDA_GRID.size))])
                if Y is X:
                    Y = AtomicRV(X.values + noise)
                out.append(_AxiomTrial(prop, X, Y, lam))
            elif prop == "positively_homogeneous":
                out.append(_AxiomTrial(prop, X, X, float(rng.uniform(0.1, 10.0))))
            else:
                out.append(_AxiomTrial(prop, X, AtomicRV(X.values[rng.permutation(X.n)]), 0.0))
        if rho.kind is Kind.VAR and prop in ("convex", "quasiconvex"):
            X, Y = crafted_var_pair(rho.alpha)
            out.append(_AxiomTrial(prop, X, Y, 0.5))
    return out


def check_axioms(
    rho: RiskMeasure,
    population: Sequence[AtomicRV],
    seed: int = 0,
    trials: int = 200,
    properties: Optional[Sequence[str]] = None,
    threads: int = 1,
    witness_dir: Optional[Path] = None,
) -> ProbeReport:
    """
    Test the declared properties of rho (or an explicit `properties` list) on
    randomised pairs and scalars drawn from the population.
    """
    if not population:
        raise ValueError("population must be nonempty")
    props = list(properties) if properties is not None else rho.properties.declared()
    unknown = [p for p in props if p not in AXIOMS]
    if unknown:
        raise ValueError(f"unknown properties: {', '.join(unknown)}")

    rng = np.random.default_rng(seed)
    tasks = _draw_trials(rho, population, props, trials, rng)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        gaps = list(ex.map(lambda t: _axiom_gap(rho, t), tasks))

    violations: List[Violation] = []
    failed = set()
    for t, (gap, allowed) in zip(tasks, gaps):
        if gap > allowed:
            failed.add(t.prop)
            digest = _archive(witness_dir, "axioms", t.prop, (t.X, t.Y))
            violations.append(Violation(digest=digest, property=t.prop, gap=gap))
    verdicts = {p: p not in failed for p in props}
    return _report(f"axioms:{rho.name}", seed, len(tasks), violations, verdicts=verdicts)


# ─────────────────────────────────────────────────────────────────────────────
# Fatou and norm lower semicontinuity
# ─────────────────────────────────────────────────────────────────────────────

def _tail(values: Sequence[float]) -> Sequence[float]:
    k = len(values)
    return values[(3 * k) // 4:] if k >= 4 else values[-1:]


def _sup_residual(sequence: Sequence[RandomVariable], limit: RandomVariable) -> float:
    if not isinstance(limit, AtomicRV):
        return 0.0
    return max(float(np.max(np.abs(Xk.values - limit.values))) for Xk in sequence)


def fatou_sequence_probe(
    rho: RiskMeasure,
    sequence: Sequence[RandomVariable],
    limit: RandomVariable,
    seed: int = 0,
    name: str = "fatou",
    threads: int = 1,
) -> ProbeReport:
    """
    rho(limit) <= liminf rho(X_k) + tolerance, liminf estimated by the minimum
    over the last quarter of the sequence.

    For monotone cash-additive rho on atomic sequences the tail's sup-norm
    residual is added to the tolerance: rho(X_k) >= rho(X) - ||X_k - X||_inf.
    """
    if not sequence:
        raise ValueError("sequence must be nonempty")
    with ThreadPoolExecutor(max_workers=threads) as ex:
        values = list(ex.map(rho, sequence))
    limit_value = rho(limit)
    tail = _tail(values)
    liminf = min(tail)

    slack = 0.0
    if rho.properties.monotone and rho.properties.cash_additive:
        slack = _sup_residual(_tail(list(sequence)), limit)
    bound = liminf + slack + FATOU_TOL
    # rho(limit) = liminf = +inf satisfies the bound
    gap = limit_value - bound if limit_value > bound else 0.0
    violations = []
    if gap > 0:
        digest = limit.digest() if isinstance(limit, AtomicRV) else hashlib.md5(limit.label.encode()).hexdigest()[:12]
        violations.append(Violation(digest=digest, property="fatou", gap=gap))
    report = _report(name, seed, len(values), violations, liminf=liminf, values=values + [limit_value])
    if slack > 0:
        report.notes.append(
            f"tolerance widened by the tail sup-norm residual {slack:.17g}; "
            f"relies on {rho.name} being monotone and cash-additive as declared"
        )
    return report


def fatou_probe(
    rho: RiskMeasure,
    X: AtomicRV,
    schemes: Sequence[Union[Scheme, str]],
    seed: int = 0,
    count: int = 64,
    repeats: int = 1,
    threads: int = 1,
) -> ProbeReport:
    """Fatou check along dominated sequences of every scheme; noise_decay is drawn `repeats` times."""
    violations: List[Violation] = []
    trials = 0
    liminfs: List[float] = []
    widened = 0
    for scheme in schemes:
        scheme = Scheme(scheme)
        draws = repeats if scheme is Scheme.NOISE_DECAY else 1
        for r in range(draws):
            sequence = dominated_sequence(X, scheme, count, seed + r)
            sub = fatou_sequence_probe(rho, sequence, X, seed + r, threads=threads)
            trials += sub.trials
            liminfs.append(sub.liminf)
            widened += bool(sub.notes)
            violations.extend(
                Violation(digest=v.digest, property=f"fatou:{scheme.value}", gap=v.gap) for v in sub.violations
            )
    report = _report(
        f"fatou:{rho.name}", seed, trials, violations,
        liminf=min(liminfs), values=liminfs,
    )
    if widened:
        report.notes.append(
            f"{widened} of {len(liminfs)} sequences widened the tolerance by their sup-norm residual "
            f"({rho.name} declared monotone and cash-additive)"
        )
    return report


def norm_lsc_probe(
    rho: RiskMeasure, X: RandomVariable, phi: OrliczFunction, count: int = 8, seed: int = 0
) -> ProbeReport:
    """
    rho(X) <= liminf rho(X_k) along X_k = X + 2^-k, which converges in sup norm
    and in Orlicz norm (||X_k - X||_Phi = 2^-k / Phi^-1(1)).
    """
    if isinstance(X, AtomicRV):
        sequence = [X.shift(2.0 ** -k) for k in range(1, count + 1)]
    else:
        sequence = [affine(X, 1.0, 2.0 ** -k) for k in range(1, count + 1)]
    report = fatou_sequence_probe(rho, sequence, X, seed, name=f"lsc:{rho.name}")
    report.notes.append(f"||X_k - X||_Phi = 2^-k / {phi.inverse(1.0):.17g} under {phi.name}")
    report.scope = "sequences X + 2^-k only; limits must have quadrature-computable norms"
    return report


# ─────────────────────────────────────────────────────────────────────────────
# Dilatation monotonicity and conditional-expectation decay
# ─────────────────────────────────────────────────────────────────────────────

def dilatation_probe(rho: RiskMeasure, X: AtomicRV, partitions: Sequence[Partition], seed: int = 0) -> ProbeReport:
    """rho(E[X | pi]) <= rho(X) + DILATATION_TOL for every partition."""
    if not (rho.properties.convex and rho.properties.law_invariant):
        raise ValueError(f"{rho.name} is not declared convex and law-invariant")
    base = rho(X)
    violations = []
    values = []
    for pi in partitions:
        value = rho(cond_exp(X, pi))
        values.append(value)
        if value > base + DILATATION_TOL:
            violations.append(Violation(digest=_digest(X, AtomicRV(pi.labels)), property="dilatation", gap=value - base))
    return _report(f"dilatation:{rho.name}", seed, len(partitions), violations, values=values)


class CoexTrace(NamedTuple):
    values: List[float]
    nonincreasing: bool


def coex_probe(X: AtomicRV, Y: AtomicRV, chain: Sequence[Partition]) -> CoexTrace:
    """E[|E[X | pi_k] - X| Y] along a refinement chain ending at singletons."""
    if np.any(Y.values < 0):
        raise ValueError("Y must be nonnegative")
    if X.n != Y.n:
        raise DimensionMismatchError(f"X on {X.n} atoms, Y on {Y.n}")
    if not chain:
        raise ChainNotNestedError("empty chain")
    for pi in chain:
        if pi.n != X.n:
            raise DimensionMismatchError(f"partition on {pi.n} atoms applied to {X.n} atoms")
    for coarse, fine in zip(chain, chain[1:]):
        if not refines(fine, coarse):
            raise ChainNotNestedError("chain is not ordered by refinement")
    if not chain[-1].is_singletons():
        raise ChainNotNestedError("chain must end at the singleton partition")

    values = [
        math.fsum(np.abs(cond_exp(X, pi).values - X.values) * Y.values) / X.n for pi in chain
    ]
    nonincreasing = all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    return CoexTrace(values, nonincreasing)


def coex_report(X: AtomicRV, Y: AtomicRV, chain: Sequence[Partition], seed: int = 0) -> ProbeReport:
    trace = coex_probe(X, Y, chain)
    violations = []
    if trace.values[-1] != 0:
        violations.append(Violation(digest=_digest(X, Y), property="coex_final_zero", gap=trace.values[-1]))
    return _report(
        "coex", seed, len(chain), violations,
        values=trace.values, verdicts={"nonincreasing": trace.nonincreasing},
    )


# ─────────────────────────────────────────────────────────────────────────────
# Order blow-up statistic
# ─────────────────────────────────────────────────────────────────────────────

BLOWUP_MASS_RATIO = 0.5


def order_blowup_probe(
    X: RandomVariable,
    base_partition_levels: int,
    trials: int,
    seed: int = 0,
    tail_level: float = 2.0,
) -> float:
    """
    Max block mean over cells C = T ∪ B, where A is the top cell of the dyadic
    partition of (0, 1) into 2^base_partition_levels cells, T = A ∩ {X > tail_level}
    and B a random interval of A \\ T with mass at most half that of T.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if base_partition_levels < 0:
        raise ValueError("base_partition_levels must be nonnegative")
    Xq = as_quantile(X)
    values, weights = Xq.discretize(1)
    edges = _node_edges(weights)
    cum = np.concatenate([[0.0], np.cumsum(weights * values)])

    def integral(a: float, b: float) -> float:
        return float(np.interp(b, edges, cum) - np.interp(a, edges, cum))

    top = 1.0 - 2.0 ** -base_partition_levels
    tail_start = max(top, float(edges[np.searchsorted(values, tail_level, side="right")]))
    tail_mass = 1.0 - tail_start
    free = tail_start - top

    rng = np.random.default_rng(seed)
    ratios = rng.uniform(0.0, BLOWUP_MASS_RATIO, trials)
    offsets = rng.uniform(0.0, 1.0, trials)

    best = -math.inf
    for r, o in zip(ratios, offsets):
        b_mass = min(free, r * (tail_mass if tail_mass > 0 else 1.0 - top))
        start = top + o * (free - b_mass)
        mass = tail_mass + b_mass
        if mass <= 0:
            continue
        mean = (integral(tail_start, 1.0) + integral(start, start + b_mass)) / mass
        best = max(best, mean)
    logger.debug("[BLOWUP] %s tail level %g: %.17g", Xq.label, tail_level, best)
    return best


def blowup_report(
    X: RandomVariable,
    base_partition_levels: int,
    trials: int,
    tail_levels: Sequence[float],
    seed: int = 0,
) -> ProbeReport:
    """Statistic per tail level; bounded inputs must stay below sup|X|, others must not decrease."""
    stats = [order_blowup_probe(X, base_partition_levels, trials, seed, k) for k in tail_levels]
    violations: List[Violation] = []
    Xq = as_quantile(X)
    digest = hashlib.md5(Xq.label.encode()).hexdigest()[:12]
    if Xq.atoms is not None:
        bound = float(np.max(np.abs(Xq.atoms)))
        for s in stats:
            if s > bound + 1e-12:
                violations.append(Violation(digest=digest, property="blowup_bounded", gap=s - bound))
    else:
        for a, b in zip(stats, stats[1:]):
            if b < a:
                violations.append(Violation(digest=digest, property="blowup_nondecreasing", gap=a - b))
    return _report("blowup", seed, len(stats) * trials, violations, values=stats)


# ─────────────────────────────────────────────────────────────────────────────
# Norm-lsc extensions that are not the Fatou extension
# ─────────────────────────────────────────────────────────────────────────────

def extension_gap_probe(
    rho: RiskMeasure, X: QuantileRV, phi: OrliczFunction, depth: int = 12, seed: int = 0
) -> ProbeReport:
    """
    Compare rho(X) with the limit of rho(E[X | pi_n]). Both agree on bounded
    positions; a norm-lsc rho without the Fatou property can differ at unbounded X,
    which is reported as a gap (the probe passes when they agree).
    """
    trace = extend_by_condexp(rho, X, phi, depth)
    direct = rho(X)
    limit = trace.values[-1]
    violations = []
    if not (math.isfinite(direct) and abs(direct - limit) <= 1e-3 * max(1.0, abs(limit))):
        violations.append(Violation(
            digest=hashlib.md5(as_quantile(X).label.encode()).hexdigest()[:12],
            property="extension_gap",
            gap=direct - limit if math.isfinite(direct) else math.inf,
        ))
    return _report(
        f"extension-gap:{rho.name}", seed, len(trace.values), violations,
        values=list(trace.values) + [direct],
        verdicts={"stabilized": trace.stabilized},
    )
