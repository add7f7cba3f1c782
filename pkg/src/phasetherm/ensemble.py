"""Monte Carlo over phase realizations.

Realization r draws phases from seed ``seed_base + r``.  Because H0 is
diagonal, H(phi) = D H(0) D^dagger with D = diag(exp(i phi_j)); every
realization shares one spectrum and its eigenvectors are D V0.  The default
path diagonalizes once and rotates; ``reuse_spectrum=False`` diagonalizes
each realization's Hamiltonian from scratch.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from phasetherm.config import RunConfig
from phasetherm.dynamics import (
    PropagatorCache,
    StateVector,
    basis_state,
    diagonalize,
    effective_dimension,
    evolve_grid,
    propagator_matrix_elements,
    subspace_populations,
    uniform_state,
)
from phasetherm.model import (
    BathSpec,
    InteractionSpec,
    Shell,
    SystemSpec,
    base_phases,
    build_interaction,
    build_shell,
    draw_phases,
    zero_phases,
)

SEED_MOD = 2**64


@dataclass(frozen=True, eq=False)
class Experiment:
    system: SystemSpec
    bath: BathSpec
    interaction: InteractionSpec
    shell: Shell
    initial: StateVector
    times: np.ndarray

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Experiment":
        system, bath = cfg.system_spec(), cfg.bath_spec()
        shell = build_shell(system, bath, cfg.model.shell.center, cfg.model.shell.width,
                            cfg.model.shell.max_dim)
        init = cfg.dynamics.initial
        if init.kind == "subspace":
            initial = uniform_state(len(shell), shell.indices(init.subspace))
        else:
            if init.index >= len(shell):
                raise IndexError(f"initial basis index {init.index} outside shell of size {len(shell)}")
            initial = basis_state(len(shell), init.index)
        times = cfg.dynamics.dt_output * np.arange(cfg.dynamics.n_steps + 1)
        return cls(system, bath, cfg.interaction_spec(), shell, initial, times)

    @property
    def dimension(self) -> int:
        return len(self.shell)

    @cached_property
    def base(self) -> np.ndarray:
        return base_phases(self.dimension, self.interaction)

    @cached_property
    def h_zero(self) -> np.ndarray:
        """H0 + H1 with every phi_j = 0."""
        h1 = build_interaction(self.shell, self.interaction,
                               zero_phases(self.dimension, self.interaction.ensemble_mode), self.base)
        h = h1.astype(np.complex128)
        h[np.diag_indices_from(h)] += self.shell.energies
        return h

    @cached_property
    def base_cache(self) -> PropagatorCache:
        return diagonalize(self.h_zero)

    def phases(self, seed: int):
        return draw_phases(self.dimension, seed, self.interaction.ensemble_mode)

    def hamiltonian(self, seed: int) -> np.ndarray:
        h = build_interaction(self.shell, self.interaction, self.phases(seed), self.base).astype(np.complex128)
        h[np.diag_indices_from(h)] += self.shell.energies
        return h

    def cache(self, seed: int, reuse_spectrum: bool = True) -> PropagatorCache:
        if reuse_spectrum:
            return self.base_cache.twisted(self.phases(seed).factors.astype(np.complex128))
        return diagonalize(self.hamiltonian(seed))

    def propagator(self, seed: int, t: float, t0: float = 0.0, reuse_spectrum: bool = True) -> np.ndarray:
        return propagator_matrix_elements(self.cache(seed, reuse_spectrum), self.shell.energies, t, t0)


@dataclass(frozen=True, eq=False)
class Realization:
    seed: int
    P: np.ndarray
    d0: np.ndarray
    energy: np.ndarray
    norm_error: float
    energy_drift: float
    final_state: np.ndarray | None = None


def simulate_realization(exp: Experiment, seed: int, reuse_spectrum: bool = True,
                         keep_state: bool = False) -> Realization:
    cache = exp.cache(seed, reuse_spectrum)
    C = evolve_grid(exp.initial, cache, exp.times)
    p = np.abs(C) ** 2
    norm_error = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
    if reuse_spectrum:
        # <psi|D H(0) D^dag|psi> with y = D^dag psi
        Y = C * np.conj(exp.phases(seed).factors)[None, :]
        energy = np.einsum("tj,tj->t", np.conj(Y), Y @ exp.h_zero.T).real
    else:
        H = exp.hamiltonian(seed)
        energy = np.einsum("tj,tj->t", np.conj(C), C @ H.T).real
    scale = abs(energy[0]) if energy[0] != 0 else 1.0
    drift = float(np.max(np.abs(energy - energy[0])) / scale)
    return Realization(seed=seed, P=subspace_populations(p, exp.shell), d0=effective_dimension(p),
                       energy=energy, norm_error=norm_error, energy_drift=drift,
                       final_state=C[-1].copy() if keep_state else None)


@dataclass(frozen=True, eq=False)
class RealizationStats:
    times: np.ndarray
    mean_P: np.ndarray
    var_P: np.ndarray
    var_se_P: np.ndarray
    mean_d0: np.ndarray
    n_realizations: int
    seed_base: int
    seeds: tuple[int, ...]
    samples_P: np.ndarray
    samples_d0: np.ndarray
    samples_energy: np.ndarray
    max_norm_error: float
    max_energy_drift: float
    final_states: np.ndarray | None = None

    @property
    def d_S(self) -> int:
        return self.mean_P.shape[1]


def variance_standard_error(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Large-sample standard error of the unbiased variance estimator."""
    n = samples.shape[axis]
    dev = samples - samples.mean(axis=axis, keepdims=True)
    m2 = np.mean(dev ** 2, axis=axis)
    m4 = np.mean(dev ** 4, axis=axis)
    return np.sqrt(np.maximum(m4 - (n - 3) / (n - 1) * m2 ** 2, 0.0) / n)


def run_ensemble(exp: Experiment, n: int, seed_base: int, *, workers: int = 1,
                 seeds=None, reuse_spectrum: bool = True, keep_states: bool = False) -> RealizationStats:
    """Ensemble means and unbiased variances of P_mu(t) over n realizations."""
    if seeds is None:
        seeds = [(seed_base + r) % SEED_MOD for r in range(n)]
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 2:
        raise ValueError("an ensemble needs at least two realizations")
    if reuse_spectrum:
        exp.base_cache  # build once before any worker touches it

    def one(seed):
        return simulate_realization(exp, seed, reuse_spectrum, keep_states)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    # reduction in realization index order
    P = np.stack([r.P for r in results])
    d0 = np.stack([r.d0 for r in results])
    return RealizationStats(
        times=exp.times.copy(),
        mean_P=P.mean(axis=0),
        var_P=P.var(axis=0, ddof=1),
        var_se_P=variance_standard_error(P),
        mean_d0=d0.mean(axis=0),
        n_realizations=len(seeds),
        seed_base=int(seed_base),
        seeds=seeds,
        samples_P=P,
        samples_d0=d0,
        samples_energy=np.stack([r.energy for r in results]),
        max_norm_error=max(r.norm_error for r in results),
        max_energy_drift=max(r.energy_drift for r in results),
        final_states=np.stack([r.final_state for r in results]) if keep_states else None,
    )


def phase_averaged_populations(exp: Experiment, times=None) -> np.ndarray:
    """<P_mu(t)> from the phase-invariant term alone: sum_k |U_jk|^2 |c_k(0)|^2."""
    times = exp.times if times is None else np.asarray(times, dtype=float)
    cache = exp.base_cache
    w0 = np.abs(exp.initial.amplitudes) ** 2
    out = np.empty((len(times), exp.shell.d_S))
    for i, t in enumerate(times):
        U = propagator_matrix_elements(cache, exp.shell.energies, float(t), exp.initial.time)
        out[i] = subspace_populations((np.abs(U) ** 2) @ w0, exp.shell)
    return out


# ---------------------------------------------------------------------------
# statistical checks of the phase-average identities
# ---------------------------------------------------------------------------


def _phase_neutral(j, k, l, m, mode) -> bool:
    """True when conj(U_jk) U_lm carries no net twist and so does not average out."""
    weight = Counter()
    for idx, s in ((j, -1), (k, 1), (l, 1), (m, -1)):
        weight[idx] += s
    if mode == "real-sign":
        return all(v % 2 == 0 for v in weight.values())
    return all(v == 0 for v in weight.values())


@dataclass(frozen=True, eq=False)
class OrthogonalityReport:
    n: int
    t: float
    threshold: float
    quadruples: np.ndarray
    mean_moduli: np.ndarray
    pass_fraction: float
    diagonal_pairs: np.ndarray
    diagonal_values: np.ndarray
    diagonal_spread: float
    excluded_neutral: int

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= 0.99 and self.diagonal_spread <= 1e-12


def check_unitary_orthogonality(exp: Experiment, n: int, pair_sample: int, t: float, *,
                                seed_base: int = 0, sample_seed: int = 0,
                                reuse_spectrum: bool = False) -> OrthogonalityReport:
    """Monte Carlo estimate of <conj(U_jk) U_lm> over realizations.

    Off-diagonal quadruples whose twist cancels identically (for example
    U_jj and U_ll) are excluded from the sample and counted.
    """
    if n < 100:
        raise ValueError("need n >= 100 realizations")
    dim, mode = exp.dimension, exp.interaction.ensemble_mode
    rng = np.random.default_rng(sample_seed)
    quads, excluded = [], 0
    while len(quads) < pair_sample:
        j, k, l, m = (int(x) for x in rng.integers(0, dim, 4))
        if (j, k) == (l, m):
            continue
        if _phase_neutral(j, k, l, m, mode):
            excluded += 1
            continue
        quads.append((j, k, l, m))
    quads = np.array(quads)
    pairs = rng.integers(0, dim, (pair_sample, 2))

    acc = np.zeros(len(quads), dtype=np.complex128)
    lo = np.full(len(pairs), np.inf)
    hi = np.full(len(pairs), -np.inf)
    for r in range(n):
        U = exp.propagator((seed_base + r) % SEED_MOD, t, 0.0, reuse_spectrum)
        acc += np.conj(U[quads[:, 0], quads[:, 1]]) * U[quads[:, 2], quads[:, 3]]
        a2 = np.abs(U[pairs[:, 0], pairs[:, 1]]) ** 2
        lo = np.minimum(lo, a2)
        hi = np.maximum(hi, a2)
    moduli = np.abs(acc / n)
    threshold = 5.0 / math.sqrt(n)
    return OrthogonalityReport(
        n=n, t=float(t), threshold=threshold, quadruples=quads, mean_moduli=moduli,
        pass_fraction=float(np.mean(moduli <= threshold)), diagonal_pairs=pairs,
        diagonal_values=hi, diagonal_spread=float(np.max(hi - lo)), excluded_neutral=excluded)


@dataclass(frozen=True, eq=False)
class DecoherenceReport:
    n: int
    t: float
    threshold: float
    pairs: np.ndarray
    off_diagonal: np.ndarray
    diagonal: np.ndarray
    max_modulus: float

    @property
    def passed(self) -> bool:
        return self.max_modulus <= self.threshold


def check_coefficient_decoherence(exp: Experiment, n: int, t: float, *, pair_sample: int = 200,
                                  seed_base: int = 0, sample_seed: int = 0,
                                  reuse_spectrum: bool = True) -> DecoherenceReport:
    """Estimate <conj(c_j) c_k> at time t for sampled j != k, plus <|c_j|^2>."""
    if n < 100:
        raise ValueError("need n >= 100 realizations")
    dim = exp.dimension
    rng = np.random.default_rng(sample_seed)
    pairs = []
    while len(pairs) < pair_sample:
        j, k = (int(x) for x in rng.integers(0, dim, 2))
        if j != k:
            pairs.append((j, k))
    pairs = np.array(pairs)
    acc = np.zeros(len(pairs), dtype=np.complex128)
    diag = np.zeros(len(pairs))
    for r in range(n):
        cache = exp.cache((seed_base + r) % SEED_MOD, reuse_spectrum)
        c = evolve_grid(exp.initial, cache, [t])[0]
        acc += np.conj(c[pairs[:, 0]]) * c[pairs[:, 1]]
        diag += np.abs(c[pairs[:, 0]]) ** 2
    off = acc / n
    return DecoherenceReport(n=n, t=float(t), threshold=5.0 / math.sqrt(n), pairs=pairs,
                             off_diagonal=off, diagonal=diag / n,
                             max_modulus=float(np.max(np.abs(off))))


@dataclass(frozen=True, eq=False)
class FluctuationReport:
    bound: np.ndarray
    margin: np.ndarray
    passed: np.ndarray
    considered: np.ndarray
    worst_margin: float

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed[self.considered]))


def check_fluctuation_bound(stats: RealizationStats, mean_d0=None, min_d0: float | None = None) -> FluctuationReport:
    """var P_mu <= 2 d0^{-1/2} <P_mu> + 3 SE(var), per (t, mu).

    With ``min_d0`` only grid times where the mean effective dimension has
    reached it are counted toward the verdict.
    """
    if stats.n_realizations < 2:
        raise ValueError("variance undefined for fewer than two realizations")
    d0 = stats.mean_d0 if mean_d0 is None else np.asarray(mean_d0, dtype=float)
    bound = 2.0 / np.sqrt(d0)[:, None] * stats.mean_P + 3.0 * stats.var_se_P
    margin = bound - stats.var_P
    passed = margin >= 0
    considered = np.ones_like(passed)
    if min_d0 is not None:
        considered &= (d0 >= min_d0)[:, None]
    worst = float(np.min(margin[considered])) if considered.any() else math.inf
    return FluctuationReport(bound, margin, passed, considered, worst)
