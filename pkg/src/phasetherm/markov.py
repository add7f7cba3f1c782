"""Coarse-grained Markov chain over system subspaces.

Golden-rule rates W_{mu->nu} = 2 pi |<nu|H1|mu>|^2 between the representative
shell states (E_mu^S, E - E_mu^S), weighted by the bath level density of the
final subspace, give a column-stochastic transition matrix over one step dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from phasetherm.errors import NormDrift, Reducible, StepTooLarge
from phasetherm.model import BathSpec, InteractionSpec, Shell, SystemSpec

NORM_TOL = 1e-10


def golden_rule_rate(amplitude: float, density: float) -> float:
    """w = 2 pi |<f|H1|i>|^2 Gamma(E_f)."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    if not density > 0:
        raise ValueError("density must be positive")
    return 2.0 * math.pi * amplitude * amplitude * density


@dataclass(frozen=True, eq=False)
class RateTable:
    W: np.ndarray
    gamma_at: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.shape != (len(self.gamma_at),) * 2:
            raise ValueError("W must be d_S x d_S")
        if np.any(W < 0) or np.any(np.diag(W) != 0):
            raise ValueError("W must be nonnegative with zero diagonal")
        if not np.array_equal(W, W.T):
            raise ValueError("W must be symmetric")
        if np.any(np.asarray(self.gamma_at) <= 0):
            raise ValueError("gamma_at must be strictly positive")

    @property
    def d_S(self) -> int:
        return len(self.gamma_at)

    @property
    def flow(self) -> np.ndarray:
        """flow[nu, mu] = W_{mu->nu} Gamma_B(E - E_nu^S), the rate mu -> nu."""
        return self.W * np.asarray(self.gamma_at)[:, None]

    @property
    def outflow(self) -> np.ndarray:
        return self.flow.sum(axis=0)

    @property
    def max_dt(self) -> float:
        peak = float(self.outflow.max())
        return 1.0 / peak if peak > 0 else math.inf

    def default_dt(self) -> float:
        """0.1 / (largest total outflow); 1.0 when nothing flows."""
        peak = float(self.outflow.max())
        return 0.1 / peak if peak > 0 else 1.0


def build_rate_table(system: SystemSpec, bath: BathSpec, interaction: InteractionSpec,
                     E_shell: float, shell: Shell | None = None,
                     shell_averaged: bool = False) -> RateTable:
    e_s = system.energies
    gamma_at = np.asarray(bath.density(E_shell - e_s), dtype=float)
    d = system.d_S
    f2 = np.zeros((d, d))
    if shell_averaged:
        if shell is None:
            raise ValueError("shell-averaged rates need the shell")
        f2 = _shell_averaged_envelope(shell, interaction)
    else:
        # both representatives have total energy E_shell
        for mu in range(d):
            for nu in range(d):
                if mu != nu:
                    f2[mu, nu] = interaction.envelope_at(E_shell, E_shell) ** 2
    W = 2.0 * math.pi * interaction.coupling ** 2 * f2
    W = 0.5 * (W + W.T)
    return RateTable(W=W, gamma_at=gamma_at)


def _shell_averaged_envelope(shell: Shell, interaction: InteractionSpec) -> np.ndarray:
    """Mean f^2 over near-resonant pairs (|E_j - E_k| within one local spacing)."""
    d = shell.d_S
    out = np.zeros((d, d))
    e = shell.energies
    for mu in range(d):
        for nu in range(mu + 1, d):
            ej, ek = e[shell.indices(mu)], e[shell.indices(nu)]
            spacing = shell.width / max(len(ek), 1)
            delta = ej[:, None] - ek[None, :]
            near = np.abs(delta) <= spacing
            f = np.asarray(interaction.profile(delta), dtype=float)
            val = float(np.mean(f[near] ** 2)) if near.any() else interaction.envelope_at(0.0, 0.0) ** 2
            out[mu, nu] = out[nu, mu] = val
    return out


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    T: np.ndarray
    dt: float

    @property
    def d_S(self) -> int:
        return self.T.shape[0]


def build_transition_matrix(rates: RateTable, dt: float) -> TransitionMatrix:
    """T[nu, mu] = W_{mu->nu} Gamma(E - E_nu^S) dt off the diagonal, columns summing to one."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * float(rates.outflow.max()) >= 1.0:
        raise StepTooLarge(dt, rates.max_dt)
    T = rates.flow * dt
    np.fill_diagonal(T, 0.0)
    T[np.diag_indices_from(T)] = 1.0 - T.sum(axis=0)
    return TransitionMatrix(T, float(dt))


def evolve_markov(T: TransitionMatrix, P0, n_steps: int, tol: float = NORM_TOL) -> np.ndarray:
    """Rows P(0), T P(0), ..., T^n P(0)."""
    P = np.asarray(P0, dtype=float)
    if abs(P.sum() - 1.0) > 1e-12 or np.any(P < 0):
        raise ValueError("P0 must be a probability vector")
    out = np.empty((n_steps + 1, len(P)))
    out[0] = P
    M = T.T
    for k in range(1, n_steps + 1):
        P = M @ P
        drift = abs(P.sum() - 1.0)
        if drift > tol:
            raise NormDrift(f"population sum drifted by {drift:.3e} at step {k}")
        out[k] = P
    return out


def chain_classification(T: TransitionMatrix) -> dict[str, bool]:
    """Irreducible by strong connectivity; regular by a positive power of T."""
    M = T.T
    A = M > 0
    d = A.shape[0]
    n_comp, _ = connected_components(A.astype(np.int8), directed=True, connection="strong")
    irreducible = n_comp == 1
    regular = False
    if irreducible:
        # Wielandt: a primitive d x d matrix has A^k > 0 for k = (d-1)^2 + 1
        power = np.eye(d, dtype=bool)
        step = A.astype(np.int64)
        for _ in range(max((d - 1) ** 2 + 1, 1)):
            power = (power.astype(np.int64) @ step) > 0
            if power.all():
                regular = True
                break
    return {"irreducible": bool(irreducible), "regular": bool(regular)}


def steady_state(T: TransitionMatrix) -> np.ndarray:
    """The eigenvalue-1 eigenvector of T, normalized to sum one."""
    if not chain_classification(T)["irreducible"]:
        raise Reducible("transition graph is not strongly connected; steady state not unique")
    M = T.T
    w, v = np.linalg.eig(M)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    pi = pi / pi.sum()
    if np.max(np.abs(M @ pi - pi)) > 1e-12:
        # polish: solve (T - I) pi = 0 with the normalization row appended
        A = np.vstack([M - np.eye(T.d_S), np.ones(T.d_S)])
        b = np.zeros(T.d_S + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return pi


def closed_form_steady_state(rates: RateTable) -> np.ndarray:
    g = np.asarray(rates.gamma_at, dtype=float)
    return g / g.sum()


def canonical_distribution(system: SystemSpec, beta: float) -> np.ndarray:
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = -beta * (system.energies - system.energies.min())
    w = np.exp(x)
    return w / w.sum()
