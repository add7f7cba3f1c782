import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasetherm.errors import NormDrift, Reducible, StepTooLarge
from phasetherm.markov import (
    RateTable,
    TransitionMatrix,
    build_rate_table,
    build_transition_matrix,
    canonical_distribution,
    chain_classification,
    closed_form_steady_state,
    evolve_markov,
    golden_rule_rate,
    steady_state,
)
from phasetherm.model import BathSpec, ExponentialDensity, GaussianProfile, InteractionSpec, SystemSpec

GAMMA_PAIR = np.array([100.0, 100.0 * math.exp(-0.3)])


def two_state(W=0.01, gamma=GAMMA_PAIR):
    return RateTable(np.array([[0.0, W], [W, 0.0]]), np.asarray(gamma))


def random_table(seed, d):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.0, 1.0, (d, d))
    W = np.triu(W, 1)
    return RateTable(W + W.T, rng.uniform(0.5, 5.0, d))


tables = st.builds(random_table, st.integers(0, 2**32 - 1), st.integers(2, 6))


# --- rates ---

def test_golden_rule_examples():
    assert golden_rule_rate(0.01, 100.0) == pytest.approx(2 * math.pi * 1e-2, rel=1e-12)
    assert golden_rule_rate(0.0, 50.0) == 0.0
    with pytest.raises(ValueError):
        golden_rule_rate(0.1, 0.0)


def test_rate_table_validation():
    with pytest.raises(ValueError):
        RateTable(np.array([[0.0, 1.0], [2.0, 0.0]]), np.ones(2))
    with pytest.raises(ValueError):
        RateTable(np.zeros((2, 2)), np.array([1.0, 0.0]))


def test_build_rate_table_reference_like():
    system = SystemSpec((0.0, 0.3))
    bath = BathSpec(ExponentialDensity(100.0, 1.0), (1.9, 2.9))
    inter = InteractionSpec(1e-3, GaussianProfile(1.0))
    rates = build_rate_table(system, bath, inter, 2.5)
    assert rates.W[0, 1] == pytest.approx(2 * math.pi * 1e-6, rel=1e-12)
    assert rates.gamma_at[1] / rates.gamma_at[0] == pytest.approx(math.exp(-0.3), rel=1e-12)
    zero = build_rate_table(system, bath, InteractionSpec(0.0), 2.5)
    assert not np.any(zero.W)


# --- transition matrix ---

def test_two_state_transition_matrix_by_hand():
    rates, dt = two_state(), 0.3
    a = 0.01 * dt
    g1, g2 = GAMMA_PAIR
    expected = np.array([[1 - a * g2, a * g1], [a * g2, 1 - a * g1]])
    assert np.allclose(build_transition_matrix(rates, dt).T, expected, atol=1e-15)


def test_zero_rates_identity():
    T = build_transition_matrix(RateTable(np.zeros((3, 3)), np.ones(3)), 0.5)
    assert np.array_equal(T.T, np.eye(3))
    P = evolve_markov(T, [0.2, 0.3, 0.5], 10)
    assert np.array_equal(P[-1], P[0])


def test_step_too_large():
    rates = two_state()
    with pytest.raises(StepTooLarge) as info:
        build_transition_matrix(rates, 2 * rates.max_dt)
    assert info.value.max_dt == pytest.approx(rates.max_dt)


@given(tables, st.floats(0.01, 0.99))
@settings(max_examples=60, deadline=None)
def test_transition_matrix_column_stochastic(rates, frac):
    T = build_transition_matrix(rates, frac * rates.max_dt).T
    assert np.all(T >= 0)
    assert np.max(np.abs(T.sum(axis=0) - 1)) <= 1e-12


# --- evolution ---

def test_two_state_closed_form_relaxation():
    rates, dt = two_state(), 0.2
    T = build_transition_matrix(rates, dt)
    pi = closed_form_steady_state(rates)
    P = evolve_markov(T, [1.0, 0.0], 200)
    lam = 1 - 0.01 * dt * GAMMA_PAIR.sum()
    k = np.arange(201)
    assert np.allclose(P[:, 0] - pi[0], lam ** k * (1 - pi[0]), atol=1e-10)


def test_steady_state_is_fixed_point():
    rates = two_state()
    T = build_transition_matrix(rates, 0.1)
    pi = steady_state(T)
    assert np.allclose(evolve_markov(T, pi, 50), pi, atol=1e-12)


def test_norm_drift_detected():
    bad = TransitionMatrix(np.array([[0.9, 0.1], [0.2, 0.9]]), 1.0)
    with pytest.raises(NormDrift):
        evolve_markov(bad, [0.5, 0.5], 5)


def test_invalid_initial_populations():
    T = build_transition_matrix(two_state(), 0.1)
    with pytest.raises(ValueError):
        evolve_markov(T, [0.7, 0.7], 2)


@given(tables)
@settings(max_examples=20, deadline=None)
def test_powers_stay_stochastic(rates):
    T = build_transition_matrix(rates, 0.5 * rates.max_dt).T
    Tk = np.linalg.matrix_power(T, 10_000)
    assert np.max(np.abs(Tk.sum(axis=0) - 1)) <= 1e-10
    assert np.all(Tk >= -1e-12)


# --- steady state ---

def test_steady_state_example():
    pi = steady_state(build_transition_matrix(two_state(), 0.1))
    assert pi == pytest.approx([0.5744, 0.4256], abs=1e-4)


def test_equal_density_uniform():
    rates = RateTable(random_table(3, 4).W, np.full(4, 2.0))
    pi = steady_state(build_transition_matrix(rates, 0.5 * rates.max_dt))
    assert np.allclose(pi, 0.25, atol=1e-12)


def test_exponential_bath_steady_state_is_gibbs():
    system = SystemSpec((0.0, 0.2, 0.55, 0.9))
    bath = BathSpec(ExponentialDensity(50.0, 1.7), (-2.0, 4.0))
    rates = build_rate_table(system, bath, InteractionSpec(0.01, GaussianProfile(0.5)), 1.5)
    pi = steady_state(build_transition_matrix(rates, rates.default_dt()))
    assert np.max(np.abs(pi - canonical_distribution(system, 1.7))) <= 1e-10


@given(tables, st.floats(0.05, 0.95), st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_detailed_balance_and_dt_invariance(rates, f1, f2):
    T1 = build_transition_matrix(rates, f1 * rates.max_dt)
    pi = steady_state(T1)
    flux = T1.T * pi[None, :]
    assert np.max(np.abs(flux - flux.T)) <= 1e-12
    assert np.max(np.abs(pi - steady_state(build_transition_matrix(rates, f2 * rates.max_dt)))) <= 1e-10
    assert np.max(np.abs(pi - closed_form_steady_state(rates))) <= 1e-10


def test_reducible_chain():
    W = np.zeros((3, 3))
    W[0, 1] = W[1, 0] = 0.1
    T = build_transition_matrix(RateTable(W, np.ones(3)), 0.5)
    assert chain_classification(T) == {"irreducible": False, "regular": False}
    with pytest.raises(Reducible):
        steady_state(T)


def test_classification_regular_and_periodic():
    T = build_transition_matrix(two_state(), 0.1)
    assert chain_classification(T) == {"irreducible": True, "regular": True}
    flip = TransitionMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    assert chain_classification(flip) == {"irreducible": True, "regular": False}


# --- canonical distribution ---

def test_canonical_examples():
    assert np.allclose(canonical_distribution(SystemSpec((0.0, 0.5, 1.0)), 1e-12), 1 / 3, atol=1e-10)
    assert canonical_distribution(SystemSpec((0.0, 0.3)), 1.0) == pytest.approx([0.5744, 0.4256], abs=1e-4)
    assert np.array_equal(canonical_distribution(SystemSpec((0.7,)), 2.0), [1.0])
    with pytest.raises(ValueError):
        canonical_distribution(SystemSpec((0.0, 0.3)), -1.0)
