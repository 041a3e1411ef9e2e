import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from data_io import read_kusuoka
from distributions import AtomicRV, affine, exp_truncation_family, exponential, from_atomic
from errors import EmptyEffectiveDomainError
from orlicz import exp_minus_one
from risk import (
    TABLE_MEASURES,
    KusuokaCandidate,
    KusuokaSpec,
    counterexample_accepts,
    counterexample_evidence,
    counterexample_measure,
    counterexample_rho,
    es,
    es_measure,
    kusuoka_eval,
    kusuoka_measure,
    mixture_value,
    var,
    var_measure,
)

scenarios = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=32).map(
    lambda v: AtomicRV(np.array(v))
)


# ── VaR and ES ──

def test_worked_fixture(portfolio):
    assert var(portfolio, 0.25) == 5.0
    assert var(portfolio, 0.5) == 0.0
    assert es(portfolio, 0.5) == 7.5
    assert es(portfolio, 0.25) == 10.0
    assert es(portfolio, 1.0) == 2.5


def test_es_between_atoms(portfolio):
    # 0.1 of the mass at -10 and 0.2 at -5 over 0.3
    assert es(portfolio, 0.3) == pytest.approx((0.25 * 10 + 0.05 * 5) / 0.3, rel=1e-12)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.0, 1.5, math.nan])
def test_var_rejects_alpha(portfolio, alpha):
    with pytest.raises(ValueError):
        var(portfolio, alpha)


@pytest.mark.parametrize("alpha", [0.0, 1.0001, math.nan])
def test_es_rejects_alpha(portfolio, alpha):
    with pytest.raises(ValueError):
        es(portfolio, alpha)


@settings(max_examples=200, deadline=None, derandomize=True)
@given(X=scenarios, k=st.integers(1, 32), m=st.floats(-100, 100))
def test_es_is_a_coherent_capital_requirement(X, k, m):
    alpha = min(k, X.n) / X.n
    scale = 1.0 + float(np.max(np.abs(X.values))) + abs(m)
    value = es(X, alpha)
    assert es(X.shift(m), alpha) == pytest.approx(value - m, abs=1e-9 * scale)
    assert es(X.scale(2.0), alpha) == pytest.approx(2.0 * value, abs=1e-9 * scale)
    assert value >= -float(np.mean(X.values)) - 1e-9 * scale
    assert value <= -float(X.values.min()) + 1e-9 * scale
    if alpha < 1:
        assert value >= var(X, alpha) - 1e-9 * scale


@settings(max_examples=100, deadline=None, derandomize=True)
@given(X=scenarios)
def test_es_is_nonincreasing_in_alpha(X):
    values = [es(X, k / X.n) for k in range(1, X.n + 1)]
    scale = 1.0 + float(np.max(np.abs(X.values)))
    assert all(b <= a + 1e-9 * scale for a, b in zip(values, values[1:]))


# ── Kusuoka mixtures ──

def test_kusuoka_file(portfolio, data_dir):
    spec = read_kusuoka(data_dir / "kusuoka.csv")
    assert len(spec.candidates) == 3
    assert len(spec.effective) == 2
    assert not spec.zero_penalty
    assert kusuoka_eval(portfolio, spec) == 6.5


def test_mixture_is_linear_in_es(rng):
    for _ in range(100):
        X = AtomicRV(rng.normal(size=int(rng.integers(1, 64))))
        alphas = rng.uniform(0.01, 1.0, size=4)
        weights = rng.dirichlet(np.ones(4))
        weights[-1] = 1.0 - math.fsum(weights[:-1])
        spec = KusuokaSpec((KusuokaCandidate(tuple(alphas), tuple(weights)),))
        expected = sum(w * es(X, a) for a, w in zip(alphas, weights))
        assert kusuoka_eval(X, spec) == pytest.approx(expected, abs=1e-12 * (1 + abs(expected)))
        assert kusuoka_eval(X, spec) == mixture_value(X, alphas, weights)


def test_dirac_candidate_is_es(rng):
    for alpha in (0.05, 0.25, 0.5, 1.0):
        X = AtomicRV(rng.normal(size=40))
        assert kusuoka_eval(X, KusuokaSpec.dirac(alpha)) == es(X, alpha)
        assert kusuoka_measure(KusuokaSpec.dirac(alpha))(X) == es_measure(alpha)(X)


def test_all_infinite_penalties_have_no_effective_domain(portfolio):
    spec = KusuokaSpec.dirac(0.5, gamma=math.inf)
    with pytest.raises(EmptyEffectiveDomainError):
        kusuoka_eval(portfolio, spec)


@pytest.mark.parametrize(
    "alphas, weights, gamma",
    [
        ((0.5,), (0.9,), 0.0),            # weights do not sum to 1
        ((0.0,), (1.0,), 0.0),            # alpha outside (0, 1]
        ((0.5, 0.5), (1.5, -0.5), 0.0),   # negative weight
        ((0.5,), (1.0,), -1.0),           # negative penalty
        ((0.5,), (1.0,), math.nan),
        ((), (), 0.0),
    ],
)
def test_invalid_candidates(alphas, weights, gamma):
    with pytest.raises(ValueError):
        KusuokaCandidate(alphas, weights, gamma)


def test_spec_needs_a_candidate():
    with pytest.raises(ValueError):
        KusuokaSpec(())


# ── Measures and declared properties ──

def test_declared_properties():
    assert not var_measure(0.1).is_convex
    assert "positively_homogeneous" in es_measure(0.1).properties.declared()
    spec = KusuokaSpec((KusuokaCandidate((0.5,), (1.0,), 1.0),))
    assert not kusuoka_measure(spec).properties.positively_homogeneous
    assert not TABLE_MEASURES["zero"].properties.cash_additive


def test_measures_accept_lifted_scenarios(portfolio):
    assert es_measure(0.5)(from_atomic(portfolio)) == 7.5
    with pytest.raises(ValueError):
        es_measure(0.5)(exponential(1.0))


def test_table_measures(portfolio):
    assert TABLE_MEASURES["worst_case"](portfolio) == 10.0
    assert TABLE_MEASURES["negative_mean"](portfolio) == 2.5
    assert TABLE_MEASURES["zero"](portfolio) == 0.0


# ── Counterexample measure ──

def test_counterexample_on_scenarios_is_the_negative_mean(portfolio):
    rho = counterexample_measure(exp_minus_one())
    assert rho(portfolio) == 2.5


def test_counterexample_on_the_truncation_family():
    phi = exp_minus_one()
    rho = counterexample_measure(phi)
    sequence, limit = exp_truncation_family(10)
    for n in (1, 2, 5, 10):
        assert rho(sequence[n - 1]) == pytest.approx(-math.exp(-n), abs=1e-6)

    evidence = counterexample_evidence(limit, phi)
    assert evidence.shift == pytest.approx(0.0, abs=1e-6)
    assert not any(evidence.in_heart.values())
    assert evidence.value == math.inf


def test_counterexample_acceptance_set(portfolio):
    phi = exp_minus_one()
    assert not counterexample_accepts(portfolio, phi)
    assert counterexample_accepts(portfolio.shift(2.5), phi)
    assert counterexample_rho(portfolio, phi) == 2.5
    sequence, limit = exp_truncation_family(3)
    assert counterexample_accepts(sequence[0], phi)
    # positive mean, but the negative part has an exponential tail
    assert not counterexample_accepts(affine(limit, 1.0, 1.0), phi)
