"""
Finite partitions of the atom index set, conditional expectations, and the
level-set partitions of the probability axis used to approximate a
quantile-backed variable by conditional expectations.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import MAX_REARRANGEMENTS
from distributions import AtomicRV, RandomVariable, as_quantile, integrate
from errors import DimensionMismatchError, NotInOrliczSpaceError
from orlicz import OrliczFunction, luxemburg_norm

logger = logging.getLogger("partitions")


# ─────────────────────────────────────────────────────────────────────────────
# Partition of {0..n-1}
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Partition:
    """Blocks are sorted index tuples, ordered by their smallest index."""

    blocks: Tuple[Tuple[int, ...], ...]
    n: int

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(int(i) for i in b)) for b in self.blocks), key=lambda b: b[0] if b else -1))
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        flat = [i for b in blocks for i in b]
        if sorted(flat) != list(range(self.n)):
            raise ValueError(f"blocks must cover 0..{self.n - 1} exactly once")
        object.__setattr__(self, "blocks", blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for j, block in enumerate(self.blocks):
            out[list(block)] = j
        return out

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.blocks], dtype=np.int64)

    def is_singletons(self) -> bool:
        return len(self.blocks) == self.n


def trivial(n: int) -> Partition:
    return Partition((tuple(range(n)),), n)


def singletons(n: int) -> Partition:
    return Partition(tuple((i,) for i in range(n)), n)


def from_labels(labels: Sequence[int]) -> Partition:
    """Partition whose blocks are the atoms sharing a label (labels need not be contiguous)."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels must be a nonempty vector")
    _, inverse = np.unique(labels, return_inverse=True)
    blocks = [tuple(np.flatnonzero(inverse == j)) for j in range(inverse.max() + 1)]
    return Partition(tuple(blocks), labels.size)


def random_partition(n: int, rng: np.random.Generator, max_blocks: Optional[int] = None) -> Partition:
    k = int(rng.integers(1, (max_blocks or n) + 1))
    return from_labels(rng.integers(0, k, n))


def _check_dims(n: int, pi: Partition):
    if pi.n != n:
        raise DimensionMismatchError(f"partition on {pi.n} atoms applied to {n} atoms")


def refines(fine: Partition, coarse: Partition) -> bool:
    """True when every block of `fine` lies inside one block of `coarse`."""
    _check_dims(fine.n, coarse)
    coarse_labels = coarse.labels
    return all(len(set(coarse_labels[list(b)])) == 1 for b in fine.blocks)


def refine(pi1: Partition, pi2: Partition) -> Partition:
    """Coarsest common refinement: nonempty pairwise block intersections."""
    _check_dims(pi1.n, pi2)
    l1, l2 = pi1.labels, pi2.labels
    return from_labels(l1 * (int(l2.max()) + 1) + l2)


def cond_exp(X: AtomicRV, pi: Partition) -> AtomicRV:
    _check_dims(X.n, pi)
    labels = pi.labels
    means = np.bincount(labels, weights=X.values) / np.bincount(labels)
    return AtomicRV(means[labels])


def rearrangement_average(X: AtomicRV, pi: Partition) -> List[AtomicRV]:
    """
    Copies X_j, j = 0..m-1 (m = lcm of block sizes), each rotating the values of
    every block by j places. Every copy has the law of X and their entrywise
    average is cond_exp(X, pi).
    """
    _check_dims(X.n, pi)
    m = math.lcm(*(len(b) for b in pi.blocks))
    if m > MAX_REARRANGEMENTS:
        raise ValueError(f"{m} rearrangements exceed the limit of {MAX_REARRANGEMENTS}")
    copies = []
    for j in range(m):
        out = np.empty(X.n)
        for block in pi.blocks:
            idx = np.asarray(block)
            out[idx] = X.values[np.roll(idx, -(j % idx.size))]
        copies.append(AtomicRV(out))
    return copies


# ─────────────────────────────────────────────────────────────────────────────
# Level partitions of the probability axis
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class LevelPartition:
    """
    A partition of (0, 1) into consecutive level cells [edges[k], edges[k+1]).

    Cells 0 and -1 are the tails {X < -threshold} and {X >= threshold} when
    nonempty; the cells in between are left-closed dyadic value bins of width 2^-depth.
    `starts` indexes the first quadrature node of each cell.
    """

    depth: int
    threshold: float
    scale: float
    tail_mass: float
    edges: np.ndarray
    block_means: np.ndarray
    starts: np.ndarray
    lower_tail: bool
    upper_tail: bool

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def cells(self) -> int:
        return int(self.block_means.size)

    def refines(self, coarse: "LevelPartition") -> bool:
        return bool(np.all(np.isin(coarse.edges, self.edges)))

    def step_quantile(self, u: np.ndarray) -> np.ndarray:
        """Quantile function of E[X | cells]."""
        idx = np.searchsorted(self.edges, np.asarray(u), side="right") - 1
        return self.block_means[np.clip(idx, 0, self.cells - 1)]

    def cumulative(self, u: np.ndarray) -> np.ndarray:
        """u -> integral of the step quantile over (0, u); linear between edges."""
        knots = np.concatenate([[0.0], np.cumsum(self.probabilities * self.block_means)])
        return np.interp(np.asarray(u), self.edges, knots)


def _node_edges(weights: np.ndarray) -> np.ndarray:
    edges = np.concatenate([[0.0], np.cumsum(weights)])
    edges[-1] = 1.0
    return edges


def _tail_threshold(abs_values: np.ndarray, tail_f: np.ndarray, budget: float) -> float:
    """Smallest |x| level k such that the nodes with |x| >= k carry at most `budget`."""
    order = np.argsort(-abs_values, kind="stable")
    cum = np.cumsum(tail_f[order])
    j = int(np.searchsorted(cum, budget, side="right"))
    if j >= abs_values.size:
        return 0.0
    # nodes order[:j] may sit in the tail; the next one must not
    return float(abs_values[order[j]])


def cecon_sequence(X: RandomVariable, phi: OrliczFunction, depth: int, level: int = 1) -> List[LevelPartition]:
    """
    Nested level partitions pi_1 <= ... <= pi_depth with tail functional
    E[Phi(2|X'|) 1{|X| >= k_n}] <= 2^-n, X' = X / scale, and dyadic value bins of
    width 2^-n on (-k_n, k_n).

    scale is 1 when E[Phi(2|X|)] is finite and 2 ||X||_Phi otherwise.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    Xq = as_quantile(X)

    trace = integrate(Xq, lambda v: phi.phi(2 * np.abs(v)))
    if trace.status == "converged":
        scale = 1.0
    else:
        norm = luxemburg_norm(Xq, phi)
        if not math.isfinite(norm) or norm <= 0:
            raise NotInOrliczSpaceError(f"{Xq.label} cannot be normalised under {phi.name}")
        scale = 2.0 * norm
        logger.info("[CECON] %s: E[Phi(2|X|)] not finite, rescaling by %.6g", Xq.label, scale)

    values, weights = Xq.discretize(level)
    values = np.asarray(values, dtype=float)
    abs_values = np.abs(values)
    tail_f = weights * phi.phi(2 * abs_values / scale)
    if not np.all(np.isfinite(tail_f)):
        raise NotInOrliczSpaceError(f"E[Phi(2|X|)] diverges for {Xq.label} after normalisation")

    node_edges = _node_edges(weights)
    node_cum = np.concatenate([[0.0], np.cumsum(weights * values)])

    out: List[LevelPartition] = []
    threshold = 0.0
    for n in range(1, depth + 1):
        width = 2.0 ** -n
        raw = _tail_threshold(abs_values, tail_f, width)
        # strictly above the first excluded node, on the 2^-n grid
        k = (math.floor(raw / width) + 1) * width
        threshold = max(threshold, k)

        lower = values < -threshold
        upper = values >= threshold
        bins = np.floor(np.clip(values, -threshold, threshold) / width)
        key = np.where(lower, bins.min() - 1, np.where(upper, bins.max() + 1, bins))
        starts = np.concatenate([[0], np.flatnonzero(np.diff(key) != 0) + 1])
        bounds = np.concatenate([starts, [values.size]])

        edges = node_edges[bounds]
        mass = np.diff(node_cum[bounds])
        probs = np.diff(edges)
        means = np.divide(mass, probs, out=np.zeros_like(mass), where=probs > 0)
        in_tail = lower | upper

        cells = LevelPartition(
            depth=n,
            threshold=threshold,
            scale=scale,
            tail_mass=float(np.sum(tail_f[in_tail])),
            edges=edges,
            block_means=means,
            starts=starts,
            lower_tail=bool(lower[0]),
            upper_tail=bool(upper[-1]),
        )
        logger.debug("[CECON] depth %d: threshold %.6g, %d cells, tail %.3g", n, threshold, cells.cells, cells.tail_mass)
        out.append(cells)
    return out
