import math

import numpy as np
import pytest
from pydantic import ValidationError

from data_io import read_kusuoka, read_scenarios
from distributions import AtomicRV, Scheme, exp_truncation_family, exponential
from errors import ChainNotNestedError, DimensionMismatchError
from harness import (
    ProbeReport,
    blowup_report,
    check_axioms,
    coex_probe,
    coex_report,
    crafted_var_pair,
    dilatation_probe,
    extension_gap_probe,
    fatou_probe,
    fatou_sequence_probe,
    norm_lsc_probe,
    order_blowup_probe,
    random_population,
)
from orlicz import exp_minus_one, power
from partitions import cond_exp, from_labels, random_partition, refine, singletons, trivial
from risk import (
    TABLE_MEASURES,
    KusuokaCandidate,
    KusuokaSpec,
    counterexample_measure,
    es_measure,
    kusuoka_measure,
    var_measure,
)

ALL_SCHEMES = [s.value for s in Scheme]


@pytest.fixture
def chain():
    return [trivial(4), from_labels([0, 0, 1, 1]), singletons(4)]


@pytest.fixture
def kusuoka_file(data_dir):
    return kusuoka_measure(read_kusuoka(data_dir / "kusuoka.csv"))


# ── Population and reports ──

def test_random_population_is_seeded():
    a = random_population(20, seed=5)
    b = random_population(20, seed=5)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert all(1 <= X.n <= 16 for X in a)
    assert all(X.n == 7 for X in random_population(5, seed=1, n=7))


def test_report_passes_exactly_without_violations():
    with pytest.raises(ValidationError):
        ProbeReport(probe_name="x", seed=0, trials=1, passed=False)


# ── Axioms ──

def test_es_satisfies_its_declared_axioms():
    report = check_axioms(es_measure(0.1), random_population(64, seed=2), seed=3, trials=100)
    assert report.passed
    assert set(report.verdicts) == set(es_measure(0.1).properties.declared())
    assert all(report.verdicts.values())


def test_kusuoka_file_satisfies_its_declared_axioms(kusuoka_file):
    report = check_axioms(kusuoka_file, random_population(64, seed=2), seed=3, trials=100, threads=4)
    assert report.passed
    assert "positively_homogeneous" not in report.verdicts


def test_var_is_not_convex(tmp_path):
    rho = var_measure(0.25)
    report = check_axioms(
        rho, random_population(32, seed=1), seed=0, trials=20,
        properties=["convex", "quasiconvex", "monotone"], witness_dir=tmp_path,
    )
    assert not report.passed
    assert report.verdicts == {"convex": False, "quasiconvex": False, "monotone": True}

    witness = report.violations[-1]
    X, Y = crafted_var_pair(0.25)
    assert witness.gap == pytest.approx(0.5)
    written = sorted(tmp_path.glob(f"axioms_{witness.property}_{witness.digest}_*.csv"))
    assert len(written) == 2
    np.testing.assert_array_equal(read_scenarios(written[0]).values, X.values)


def test_var_satisfies_its_declared_axioms():
    assert check_axioms(var_measure(0.25), random_population(64, seed=2), seed=3, trials=100).passed


def test_crafted_var_pair():
    X, Y = crafted_var_pair(0.1)
    assert X.n == 10
    rho = var_measure(0.1)
    mix = AtomicRV(0.5 * X.values + 0.5 * Y.values)
    assert rho(mix) > max(rho(X), rho(Y))


def test_zero_measure_misses_cash_additivity_by_the_shift(portfolio):
    zero = TABLE_MEASURES["zero"]
    for m in (-3.0, 0.5, 7.25):
        assert abs(zero(portfolio.shift(m)) - (zero(portfolio) - m)) == abs(m)
    report = check_axioms(zero, random_population(20, seed=2), seed=2, trials=50, properties=["cash_additive"])
    assert report.verdicts == {"cash_additive": False}
    assert len(report.violations) == 50
    assert all(v.property == "cash_additive" and v.gap > 0 for v in report.violations)


def test_axiom_arguments():
    with pytest.raises(ValueError):
        check_axioms(es_measure(0.5), [])
    with pytest.raises(ValueError):
        check_axioms(es_measure(0.5), random_population(4), properties=["subadditive"])


# ── Fatou ──

@pytest.mark.parametrize("name", ["es", "kusuoka"])
def test_fatou_holds_on_dominated_sequences(name, kusuoka_file):
    rho = es_measure(0.2) if name == "es" else kusuoka_file
    sequences = 0
    for k, X in enumerate(random_population(50, seed=11)):
        report = fatou_probe(rho, X, ALL_SCHEMES, seed=k, count=32, repeats=2)
        assert report.passed, report.violations
        sequences += len(report.values)
    assert sequences >= 200


def test_counterexample_violates_fatou():
    sequence, limit = exp_truncation_family(8)
    report = fatou_sequence_probe(counterexample_measure(exp_minus_one()), sequence, limit, name="fatou:counterexample")
    assert not report.passed
    assert report.liminf == pytest.approx(-math.exp(-7), abs=1e-6)
    assert report.values[-1] == math.inf
    assert report.violations[0].gap == math.inf


def test_fatou_needs_a_sequence(portfolio):
    with pytest.raises(ValueError):
        fatou_sequence_probe(es_measure(0.5), [], portfolio)


def test_norm_lsc_probe(portfolio):
    report = norm_lsc_probe(es_measure(0.5), portfolio, power(2.0), count=8)
    assert report.passed
    assert report.values[-1] == 7.5
    assert report.scope is not None and report.notes
    assert any("sup-norm residual" in note for note in report.notes)


def test_fatou_slack_is_reported(portfolio):
    sequence = [portfolio.shift(2.0 ** -k) for k in range(1, 9)]
    widened = fatou_sequence_probe(es_measure(0.5), sequence, portfolio)
    assert widened.passed and any("es:alpha=0.5" in note for note in widened.notes)
    # no declared cash additivity, no slack
    plain = fatou_sequence_probe(TABLE_MEASURES["zero"], sequence, portfolio)
    assert plain.passed and plain.notes == []
    report = fatou_probe(es_measure(0.5), portfolio, ALL_SCHEMES, count=16)
    assert report.passed and len(report.notes) == 1


def test_counterexample_is_norm_lsc_but_not_fatou():
    phi = exp_minus_one()
    rho = counterexample_measure(phi)
    sequence, limit = exp_truncation_family(8)
    lsc = norm_lsc_probe(rho, limit, phi, count=4)
    # rho(X + 2^-k) = rho(X) = +inf, so the bound holds with equality
    assert lsc.passed and lsc.violations == []
    assert lsc.values == [math.inf] * 5
    fatou = fatou_sequence_probe(rho, sequence, limit)
    assert not fatou.passed
    assert fatou.violations[0].gap == math.inf


# ── Dilatation and coex ──

@pytest.mark.parametrize("name", ["es", "kusuoka"])
def test_dilatation_monotonicity(name, rng):
    zero_penalty = KusuokaSpec((
        KusuokaCandidate((0.1, 0.5), (0.5, 0.5)),
        KusuokaCandidate((0.25, 1.0), (0.75, 0.25)),
    ))
    for _ in range(250):
        n = int(rng.integers(1, 33))
        X = AtomicRV(rng.normal(scale=rng.uniform(0.1, 5.0), size=n))
        rho = es_measure(float(rng.uniform(0.01, 1.0))) if name == "es" else kusuoka_measure(zero_penalty)
        partitions = [random_partition(n, rng) for _ in range(2)]
        assert dilatation_probe(rho, X, partitions).passed


def test_refining_the_information_raises_es(rng):
    for _ in range(250):
        n = int(rng.integers(1, 33))
        X = AtomicRV(rng.normal(scale=rng.uniform(0.1, 5.0), size=n))
        coarse = random_partition(n, rng)
        fine = refine(coarse, random_partition(n, rng))
        alpha = float(rng.uniform(0.01, 1.0))
        rho = es_measure(alpha)
        scale = 1.0 + float(np.max(np.abs(X.values)))
        assert rho(cond_exp(X, coarse)) <= rho(cond_exp(X, fine)) + 1e-9 * scale


def test_dilatation_needs_a_convex_measure(portfolio):
    with pytest.raises(ValueError):
        dilatation_probe(var_measure(0.25), portfolio, [trivial(4)])


def test_coex_fixture(portfolio, chain):
    trace = coex_probe(portfolio, AtomicRV(np.ones(4)), chain)
    assert trace.values == [5.0, 2.5, 0.0]
    assert trace.nonincreasing
    report = coex_report(portfolio, AtomicRV(np.ones(4)), chain)
    assert report.passed and report.verdicts == {"nonincreasing": True}


def test_coex_preconditions(portfolio, chain):
    ones = AtomicRV(np.ones(4))
    with pytest.raises(ValueError):
        coex_probe(portfolio, AtomicRV(np.array([1.0, -1.0, 1.0, 1.0])), chain)
    with pytest.raises(DimensionMismatchError):
        coex_probe(portfolio, AtomicRV(np.ones(3)), chain)
    with pytest.raises(ChainNotNestedError):
        coex_probe(portfolio, ones, [])
    with pytest.raises(ChainNotNestedError):
        coex_probe(portfolio, ones, [chain[1], chain[0], chain[2]])
    with pytest.raises(ChainNotNestedError):
        coex_probe(portfolio, ones, chain[:2])


# ── Blow-up ──

def test_blowup_stays_bounded_on_scenarios(portfolio):
    report = blowup_report(portfolio, 1, 50, [2.0, 4.0, 8.0], seed=0)
    assert report.passed
    assert max(report.values) <= 5.0 + 1e-12


def test_blowup_grows_with_the_tail_level():
    report = blowup_report(exponential(1.0), 3, 100, [2.0, 4.0, 8.0], seed=0)
    assert report.passed
    assert report.values[0] == pytest.approx(1.0 + math.log(8.0), rel=1e-6)
    assert report.values[-1] > 8.0 * 0.75


def test_blowup_arguments(portfolio):
    with pytest.raises(ValueError):
        order_blowup_probe(portfolio, 1, 0)
    with pytest.raises(ValueError):
        order_blowup_probe(portfolio, -1, 10)


# ── Extension gap ──

def test_extension_gap_on_a_bounded_position():
    sequence, _ = exp_truncation_family(3)
    report = extension_gap_probe(counterexample_measure(exp_minus_one()), sequence[-1], exp_minus_one(), depth=6)
    assert report.passed
    assert report.values[-1] == pytest.approx(-math.exp(-3), abs=1e-6)


def test_extension_gap_at_the_unbounded_limit():
    _, limit = exp_truncation_family(1)
    report = extension_gap_probe(counterexample_measure(exp_minus_one()), limit, exp_minus_one(), depth=8)
    assert not report.passed
    assert report.values[-1] == math.inf
    assert report.values[-2] == pytest.approx(0.0, abs=1e-6)


# ── Determinism ──

def test_probes_are_deterministic(portfolio, chain, kusuoka_file):
    population = random_population(16, seed=4)

    def run():
        return [
            check_axioms(es_measure(0.3), population, seed=8, trials=40).model_dump_json(),
            check_axioms(kusuoka_file, population, seed=8, trials=40, threads=3).model_dump_json(),
            fatou_probe(es_measure(0.3), portfolio, ALL_SCHEMES, seed=8, count=16, repeats=3).model_dump_json(),
            blowup_report(exponential(1.0), 2, 50, [2.0, 4.0], seed=8).model_dump_json(),
            coex_report(portfolio, AtomicRV(np.ones(4)), chain, seed=8).model_dump_json(),
        ]

    assert run() == run()
