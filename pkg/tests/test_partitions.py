import math
from typing import Iterator, List

import numpy as np
import pytest

from distributions import AtomicRV, equal_in_law, exponential, expectation, normal
from errors import DimensionMismatchError
from orlicz import exp_minus_one, luxemburg_norm, power
from partitions import (
    Partition,
    cecon_sequence,
    cond_exp,
    from_labels,
    random_partition,
    rearrangement_average,
    refine,
    refines,
    singletons,
    trivial,
)


def set_partitions(n: int) -> Iterator[Partition]:
    """Every partition of {0..n-1}, via restricted growth strings."""
    def grow(prefix: List[int], top: int):
        if len(prefix) == n:
            yield from_labels(prefix)
            return
        for label in range(top + 2):
            yield from grow(prefix + [label], max(top, label))

    yield from grow([0], 0)


# ── Partition basics ──

def test_set_partition_counts_are_bell_numbers():
    assert [sum(1 for _ in set_partitions(n)) for n in range(1, 7)] == [1, 2, 5, 15, 52, 203]


@pytest.mark.parametrize(
    "blocks, n",
    [
        (((0, 1), (2,)), 4),        # misses 3
        (((0, 1), (1, 2)), 3),      # 1 twice
        (((0, 1), ()), 2),          # empty block
    ],
)
def test_invalid_partitions_are_rejected(blocks, n):
    with pytest.raises(ValueError):
        Partition(blocks, n)


def test_blocks_are_normalised():
    pi = Partition(((3, 1), (2, 0)), 4)
    assert pi.blocks == ((0, 2), (1, 3))
    np.testing.assert_array_equal(pi.labels, [0, 1, 0, 1])


def test_from_labels_accepts_sparse_labels():
    pi = from_labels([7, 7, -2, 40])
    assert len(pi) == 3
    assert pi.blocks == ((0, 1), (2,), (3,))


def test_refinement_order():
    pairs = from_labels([0, 0, 1, 1])
    assert refines(singletons(4), pairs)
    assert refines(pairs, trivial(4))
    assert not refines(trivial(4), pairs)
    assert singletons(4).is_singletons()


def test_refine_is_the_coarsest_common_refinement(rng):
    for _ in range(100):
        n = int(rng.integers(1, 16))
        a, b = random_partition(n, rng), random_partition(n, rng)
        common = refine(a, b)
        assert refines(common, a) and refines(common, b)
        # any block of the meet is an intersection of one block of each
        assert len(common) <= len(a) * len(b)
        assert len(common) >= max(len(a), len(b))


def test_dimension_mismatch(portfolio):
    with pytest.raises(DimensionMismatchError):
        cond_exp(portfolio, trivial(3))
    with pytest.raises(DimensionMismatchError):
        refine(trivial(3), trivial(4))


# ── Conditional expectation ──

def test_cond_exp_on_the_worked_fixture(portfolio):
    pairs = from_labels([0, 0, 1, 1])
    np.testing.assert_array_equal(cond_exp(portfolio, pairs).values, [-7.5, -7.5, 2.5, 2.5])
    np.testing.assert_array_equal(cond_exp(portfolio, trivial(4)).values, np.full(4, -2.5))
    np.testing.assert_array_equal(cond_exp(portfolio, singletons(4)).values, portfolio.values)


def test_cond_exp_preserves_the_mean_and_the_tower_property(rng):
    for _ in range(200):
        n = int(rng.integers(1, 32))
        X = AtomicRV(rng.normal(size=n))
        a, b = random_partition(n, rng), random_partition(n, rng)
        fine = refine(a, b)
        assert expectation(cond_exp(X, a)) == pytest.approx(expectation(X), abs=1e-12)
        np.testing.assert_allclose(cond_exp(cond_exp(X, fine), a).values, cond_exp(X, a).values, atol=1e-12)


@pytest.mark.parametrize("phi", [power(2.0), exp_minus_one()], ids=lambda f: f.name)
def test_cond_exp_is_a_contraction(phi, rng):
    for _ in range(250):
        n = int(rng.integers(1, 65))
        X = AtomicRV(rng.normal(scale=rng.uniform(0.1, 3.0), size=n))
        pi = random_partition(n, rng)
        norm = luxemburg_norm(X, phi)
        assert luxemburg_norm(cond_exp(X, pi), phi) <= norm + 1e-10 * max(1.0, norm)


@pytest.mark.parametrize("phi", [power(2.0), power(3.0), exp_minus_one()], ids=lambda f: f.name)
def test_conditional_jensen(phi, rng):
    for _ in range(250):
        n = int(rng.integers(1, 65))
        X = AtomicRV(rng.normal(scale=rng.uniform(0.1, 3.0), size=n))
        pi = random_partition(n, rng)
        inside = phi.phi(np.abs(cond_exp(X, pi).values))
        outside = cond_exp(AtomicRV(phi.phi(np.abs(X.values))), pi).values
        # Phi(|E[X | pi]|) <= E[Phi(|X|) | pi] atom by atom, hence in expectation
        assert np.all(inside <= outside * (1 + 1e-12) + 1e-300)
        assert math.fsum(inside) <= math.fsum(outside) * (1 + 1e-12) + 1e-300


# ── Rearrangement averaging ──

def _check_rearrangements(X: AtomicRV, pi: Partition):
    copies = rearrangement_average(X, pi)
    assert len(copies) == math.lcm(*(len(b) for b in pi.blocks))
    for copy in copies:
        assert equal_in_law(copy, X)
    stacked = np.stack([c.values for c in copies])
    average = np.array([math.fsum(column) for column in stacked.T]) / len(copies)
    np.testing.assert_allclose(average, cond_exp(X, pi).values, rtol=0, atol=1e-12)


def test_rearrangements_are_exact_on_every_small_partition(rng):
    for n in range(1, 7):
        X = AtomicRV(rng.normal(size=n))
        for pi in set_partitions(n):
            _check_rearrangements(X, pi)


@pytest.mark.parametrize("n", range(7, 13))
def test_rearrangements_are_exact_on_random_partitions(n, rng):
    for _ in range(25):
        _check_rearrangements(AtomicRV(rng.normal(size=n)), random_partition(n, rng))


def test_rearrangement_limit():
    sizes = [5, 7, 8, 9, 11, 13, 17]
    labels = np.repeat(np.arange(len(sizes)), sizes)
    X = AtomicRV(np.arange(labels.size, dtype=float))
    with pytest.raises(ValueError):
        rearrangement_average(X, from_labels(labels))


# ── Level partitions ──

def _check_chain(chain):
    for n, cells in enumerate(chain, start=1):
        assert cells.depth == n
        assert cells.edges[0] == 0.0 and cells.edges[-1] == 1.0
        assert np.all(cells.probabilities > 0)
        assert cells.tail_mass <= 2.0 ** -n
    for coarse, fine in zip(chain, chain[1:]):
        assert fine.threshold >= coarse.threshold
        assert fine.refines(coarse)


def test_cecon_sequence_is_nested_when_phi_of_2x_is_integrable():
    chain = cecon_sequence(exponential(1.0), power(2.0), depth=8)
    _check_chain(chain)
    assert all(cells.scale == 1.0 for cells in chain)
    assert chain[-1].upper_tail and not chain[-1].lower_tail
    assert float(chain[-1].cumulative(1.0)) == pytest.approx(1.0, rel=1e-6)


def test_cecon_sequence_rescales_heavy_inputs():
    chain = cecon_sequence(exponential(1.0), exp_minus_one(), depth=6)
    _check_chain(chain)
    assert chain[0].scale == pytest.approx(2.0 * luxemburg_norm(exponential(1.0), exp_minus_one()), rel=1e-9)


@pytest.mark.parametrize("make", [lambda: exponential(1.0), lambda: normal(0.0, 1.0)], ids=["exponential", "normal"])
def test_cecon_cells_oscillate_less_than_the_bin_width(make):
    X = make()
    chain = cecon_sequence(X, power(2.0), depth=8)
    values, _ = X.discretize(1)
    for cells in chain:
        bounds = np.append(cells.starts, values.size)
        first = 1 if cells.lower_tail else 0
        last = cells.cells - 1 if cells.upper_tail else cells.cells
        assert last > first
        for k in range(first, last):
            block = values[bounds[k]:bounds[k + 1]]
            assert block.max() - block.min() <= 2.0 ** -cells.depth


def test_cecon_sequence_on_scenarios(portfolio):
    chain = cecon_sequence(portfolio, power(2.0), depth=4)
    _check_chain(chain)
    # atoms are exact, so the finest cells reproduce the sorted scenarios
    np.testing.assert_allclose(chain[-1].step_quantile(np.array([0.1, 0.3, 0.6, 0.9])), [-10.0, -5.0, 0.0, 5.0])


def test_cecon_sequence_needs_positive_depth():
    with pytest.raises(ValueError):
        cecon_sequence(exponential(1.0), power(2.0), depth=0)
