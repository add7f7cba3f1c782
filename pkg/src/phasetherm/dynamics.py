"""Exact unitary evolution by full diagonalization, and trajectory observables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from phasetherm.errors import ConvergenceFailure


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    time: float = 0.0

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def basis_state(dimension: int, index: int, time: float = 0.0) -> StateVector:
    c = np.zeros(dimension, dtype=np.complex128)
    c[index] = 1.0
    return StateVector(c, time)


def uniform_state(dimension: int, indices, time: float = 0.0) -> StateVector:
    """Equal real amplitudes on the given basis indices."""
    idx = np.asarray(indices)
    c = np.zeros(dimension, dtype=np.complex128)
    c[idx] = 1.0 / math.sqrt(len(idx))
    return StateVector(c, time)


@dataclass(frozen=True, eq=False)
class PropagatorCache:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def twisted(self, factors: np.ndarray) -> "PropagatorCache":
        """Cache of D H D^dagger for D = diag(factors), unit-modulus entries."""
        return PropagatorCache(self.eigenvalues, factors[:, None] * self.eigenvectors)


def diagonalize(H: np.ndarray) -> PropagatorCache:
    try:
        w, v = scipy.linalg.eigh(H, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"eigensolver failed: {exc}") from exc
    return PropagatorCache(w, v)


def evolve(state: StateVector, cache: PropagatorCache, t_target: float) -> StateVector:
    """c(t') = V exp(-i Lambda (t' - t)) V^dagger c(t)."""
    if t_target == state.time:
        return StateVector(state.amplitudes.copy(), state.time)
    v = cache.eigenvectors
    a = v.conj().T @ state.amplitudes
    a = a * np.exp(-1j * cache.eigenvalues * (t_target - state.time))
    return StateVector(v @ a, float(t_target))


def evolve_grid(state: StateVector, cache: PropagatorCache, times) -> np.ndarray:
    """Amplitudes at each requested time, shape (len(times), dim)."""
    v = cache.eigenvectors
    a = v.conj().T @ state.amplitudes
    dt = np.asarray(times, dtype=float) - state.time
    phases = np.exp(-1j * np.outer(dt, cache.eigenvalues))
    # rows of (phases * a) @ V^T are (V (phase * a))^T
    return (phases * a) @ v.T


def propagator_matrix_elements(cache: PropagatorCache, h0, t: float, t0: float) -> np.ndarray:
    """Interaction-picture propagator exp(iH0 t) exp(-iH (t-t0)) exp(-iH0 t0)."""
    if t < t0:
        raise ValueError("need t >= t0")
    e0 = np.diag(h0) if np.ndim(h0) == 2 else np.asarray(h0, dtype=float)
    v = cache.eigenvectors
    u = (v * np.exp(-1j * cache.eigenvalues * (t - t0))) @ v.conj().T
    return np.exp(1j * e0 * t)[:, None] * u * np.exp(-1j * e0 * t0)[None, :]


@dataclass(frozen=True, eq=False)
class TwistedUnitary:
    """U = D U0 D^dagger kept in factored form.

    |U_jk| = |U0_jk| exactly, so magnitude-only quantities computed from this
    form are bit-identical across twists.
    """

    base: np.ndarray
    factors: np.ndarray

    def matrix(self) -> np.ndarray:
        return self.factors[:, None] * self.base * np.conj(self.factors)[None, :]

    def abs2(self) -> np.ndarray:
        return np.abs(self.base) ** 2


def populations(state: StateVector | np.ndarray) -> np.ndarray:
    c = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    return np.abs(c) ** 2


def subspace_populations(p: np.ndarray, levels) -> np.ndarray:
    """P_mu = sum of p_j over j in subspace mu; works on (..., dim) arrays."""
    mu = np.asarray(levels.mu if hasattr(levels, "mu") else [lvl.mu for lvl in levels])
    d_S = levels.d_S if hasattr(levels, "d_S") else int(mu.max()) + 1
    p = np.asarray(p, dtype=float)
    onehot = np.zeros((len(mu), d_S))
    onehot[np.arange(len(mu)), mu] = 1.0
    return p @ onehot


def effective_dimension(p: np.ndarray) -> np.ndarray | float:
    """d0 = 1 / sum p_j^2 along the last axis."""
    p = np.asarray(p, dtype=float)
    out = 1.0 / np.sum(p * p, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class PopulationDecomposition:
    p_d: np.ndarray
    p_f1: np.ndarray
    p_f2: np.ndarray
    time: float

    def total(self) -> np.ndarray:
        return self.p_d + 2.0 * self.p_f1.real + self.p_f2.real


def decompose_population(U_I, initial: StateVector, t: float) -> PopulationDecomposition:
    """Split p_j(t) into the phase-invariant part and the two fluctuation terms.

    p_d  = sum_k |U_jk|^2 |c_k|^2
    p_f1 = U_jj c_j sum_{k!=j} conj(U_jk c_k)
    p_f2 = sum_{k!=l, both !=j} U_jk c_k conj(U_jl c_l)
    """
    c0 = np.asarray(initial.amplitudes)
    if isinstance(U_I, TwistedUnitary):
        U, abs2 = U_I.matrix(), U_I.abs2()
    else:
        U = np.asarray(U_I)
        abs2 = np.abs(U) ** 2
    w0 = np.abs(c0) ** 2
    p_d = abs2 @ w0
    diag = np.diagonal(U) * c0
    off = U @ c0 - diag
    off_incoherent = p_d - np.diagonal(abs2) * w0
    p_f1 = diag * np.conj(off)
    p_f2 = (np.abs(off) ** 2 - off_incoherent).astype(np.complex128)
    return PopulationDecomposition(p_d, p_f1, p_f2, float(t))


@dataclass(frozen=True)
class TimescaleReport:
    mean_spacing: float
    tau_H: float
    tau_relax: float
    ratio: float
    ratio_threshold: float
    separated: bool
    horizon: float | None
    horizon_exceeds_tau_H: bool | None
    note: str = "tau_relax = 1 / min_mu(total outflow rate) is a proxy for the ergodic time"


def timescale_diagnostics(levels, rates, horizon: float | None = None,
                          ratio_threshold: float = 0.1) -> TimescaleReport:
    """Heisenberg time from the mean level spacing against the relaxation proxy.

    ``rates`` holds the total outflow rate of each subspace.
    """
    e = np.sort(np.asarray(levels.energies if hasattr(levels, "energies") else [l.E_j for l in levels]))
    spacing = float((e[-1] - e[0]) / (len(e) - 1)) if len(e) > 1 else math.inf
    tau_H = 1.0 / spacing if spacing > 0 else math.inf
    slowest = float(np.min(rates))
    tau_relax = 1.0 / slowest if slowest > 0 else math.inf
    ratio = tau_relax / tau_H if math.isfinite(tau_relax) else math.inf
    exceeds = None if horizon is None else bool(horizon > tau_H)
    return TimescaleReport(spacing, tau_H, tau_relax, ratio, ratio_threshold,
                           bool(ratio <= ratio_threshold), horizon, exceeds)
