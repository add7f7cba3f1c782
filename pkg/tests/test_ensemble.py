import dataclasses

import numpy as np
import pytest

from conftest import small_config_dict
from phasetherm.config import parse_config
from phasetherm.dynamics import decompose_population, subspace_populations
from phasetherm.ensemble import (
    Experiment,
    _phase_neutral,
    check_coefficient_decoherence,
    check_fluctuation_bound,
    check_unitary_orthogonality,
    phase_averaged_populations,
    run_ensemble,
    simulate_realization,
)


def experiment(**overrides):
    return Experiment.from_config(parse_config(small_config_dict(**overrides)))


@pytest.fixture(scope="module")
def exp():
    return experiment()


def test_zero_coupling_is_static():
    e = experiment(**{"model.interaction.coupling": 0.0})
    stats = run_ensemble(e, 5, 0)
    assert np.allclose(stats.mean_P, stats.mean_P[0], atol=1e-14)
    assert np.all(stats.var_P <= 1e-28)


def test_identical_seeds_give_zero_variance(exp):
    stats = run_ensemble(exp, 4, 0, seeds=[9, 9, 9, 9])
    assert np.all(stats.var_P == 0)


def test_seed_determinism(exp):
    a = run_ensemble(exp, 6, 40)
    b = run_ensemble(exp, 6, 40, workers=3)
    assert np.array_equal(a.mean_P, b.mean_P) and np.array_equal(a.var_P, b.var_P)
    assert a.seeds == tuple(range(40, 46))


def test_seed_wraps_modulo_2_64(exp):
    stats = run_ensemble(exp, 3, 2**64 - 2)
    assert stats.seeds == (2**64 - 2, 2**64 - 1, 0)


def test_exchangeability(exp):
    seeds = list(range(100, 112))
    a = run_ensemble(exp, 0, 0, seeds=seeds)
    b = run_ensemble(exp, 0, 0, seeds=seeds[::-1])
    assert np.max(np.abs(a.mean_P - b.mean_P)) <= 1e-14
    assert np.max(np.abs(a.var_P - b.var_P)) <= 1e-14


def test_too_few_realizations(exp):
    with pytest.raises(ValueError):
        run_ensemble(exp, 1, 0)


def test_spectrum_reuse_matches_full_diagonalization(exp):
    fast = simulate_realization(exp, 77, reuse_spectrum=True)
    full = simulate_realization(exp, 77, reuse_spectrum=False)
    assert np.max(np.abs(fast.P - full.P)) <= 1e-10
    assert np.max(np.abs(fast.energy - full.energy)) <= 1e-10


def test_conservation_per_realization(exp):
    r = simulate_realization(exp, 5, reuse_spectrum=False)
    assert r.norm_error <= 1e-12
    assert r.energy_drift <= 1e-10


def test_propagator_magnitudes_phase_invariant(exp):
    U1 = exp.propagator(1, 10.0, reuse_spectrum=False)
    U2 = exp.propagator(2, 10.0, reuse_spectrum=False)
    assert np.max(np.abs(np.abs(U1) - np.abs(U2))) <= 1e-10


def test_basis_initial_state_has_no_ensemble_spread():
    e = experiment(**{"dynamics.initial": {"kind": "basis", "index": 3}})
    stats = run_ensemble(e, 8, 0)
    assert np.max(stats.var_P) <= 1e-24
    assert np.max(np.abs(stats.mean_P - phase_averaged_populations(e))) <= 1e-12


def test_ensemble_mean_tracks_phase_average(exp):
    stats = run_ensemble(exp, 200, 500)
    target = phase_averaged_populations(exp)
    for i in (10, 25, 40):
        sigma = np.sqrt(stats.var_P[i, 0] / stats.n_realizations)
        assert abs(stats.mean_P[i, 0] - target[i, 0]) <= 3 * sigma + 1e-12


def test_realization_matches_decomposition(exp):
    t = 12.0
    U = exp.propagator(3, t)
    dec = decompose_population(U, exp.initial, t)
    direct = simulate_realization(exp, 3).P[int(t / 1.0)]
    assert np.allclose(subspace_populations(dec.total().real, exp.shell), direct, atol=1e-12)


# --- phase-average identities ---

def test_phase_neutral_quadruples():
    assert _phase_neutral(2, 2, 5, 5, "complex-phase")
    assert _phase_neutral(1, 4, 1, 4, "complex-phase")
    assert not _phase_neutral(1, 4, 4, 1, "complex-phase")
    assert _phase_neutral(1, 4, 4, 1, "real-sign")
    assert not _phase_neutral(1, 2, 3, 4, "real-sign")


def test_orthogonality_on_exact_quadrature_grid():
    # average of conj(U_01) U_10 over a uniform phase grid vanishes identically
    from phasetherm.dynamics import TwistedUnitary
    A = np.array([[0.6, 0.8j], [0.8j, 0.6]])
    grid = 2 * np.pi * np.arange(8) / 8
    acc = 0
    for a in grid:
        for b in grid:
            U = TwistedUnitary(A, np.exp(1j * np.array([a, b]))).matrix()
            acc += np.conj(U[0, 1]) * U[1, 0]
    assert abs(acc / 64) <= 1e-15


def test_orthogonality_moderate_sample(exp):
    rep = check_unitary_orthogonality(exp, 300, 100, 5.0, seed_base=11, reuse_spectrum=True)
    assert rep.passed
    assert rep.diagonal_spread <= 1e-12


def test_orthogonality_requires_enough_realizations(exp):
    with pytest.raises(ValueError):
        check_unitary_orthogonality(exp, 10, 5, 1.0)


def test_decoherence_at_time_zero_basis():
    e = experiment(**{"dynamics.initial": {"kind": "basis", "index": 0}})
    rep = check_coefficient_decoherence(e, 100, 0.0, pair_sample=30)
    assert rep.max_modulus <= 1e-14


def test_decoherence_generic_time(exp):
    rep = check_coefficient_decoherence(exp, 400, 15.0, pair_sample=100, seed_base=3)
    assert rep.passed
    assert np.all(rep.diagonal >= 0)


# --- fluctuation bound ---

def test_fluctuation_bound_static_model_passes():
    e = experiment(**{"model.interaction.coupling": 0.0})
    assert check_fluctuation_bound(run_ensemble(e, 4, 0)).all_pass


def test_fluctuation_bound_small_model(exp):
    rep = check_fluctuation_bound(run_ensemble(exp, 100, 0))
    assert rep.all_pass and rep.worst_margin >= 0


def test_fluctuation_bound_refuses_single_realization(exp):
    one = dataclasses.replace(run_ensemble(exp, 2, 0), n_realizations=1)
    with pytest.raises(ValueError):
        check_fluctuation_bound(one)
