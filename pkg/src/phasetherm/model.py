"""Energy shell, noninteracting spectrum and the random-phase interaction ensemble.

The composite basis |j> = |E_mu^S, E_b^B> is truncated to a shell of total
energy E_shell +- width/2.  Bath levels are placed deterministically by
inverting the cumulative level count of the bath density, optionally with a
seeded jitter.  The interaction couples different system subspaces only, with
amplitude lambda * f(E_j, E_k) and phases exp(i(phi_j - phi_k)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence, Union

import numpy as np

from phasetherm.errors import BathWindowError, EmptySubspace, ShellTooWide

EnsembleMode = Literal["complex-phase", "real-sign"]

DEFAULT_MAX_DIM = 4000


# ---------------------------------------------------------------------------
# system and bath
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    """Nondegenerate system spectrum E_mu^S in ascending order."""

    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(e) for e in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 1:
            raise ValueError("system needs at least one level")
        if not all(math.isfinite(e) for e in levels):
            raise ValueError("system levels must be finite")
        gaps = np.diff(levels)
        if np.any(gaps < 0):
            raise ValueError("system levels must be sorted ascending")
        if np.any(gaps <= 1e-12):
            raise ValueError("degenerate system levels (spacing <= 1e-12) are not supported")

    @property
    def d_S(self) -> int:
        return len(self.levels)

    @property
    def energies(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=float)


@dataclass(frozen=True)
class ExponentialDensity:
    """Gamma_B(E) = gamma0 * exp(beta * E)."""

    gamma0: float
    beta: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def __call__(self, energy):
        return self.gamma0 * np.exp(self.beta * np.asarray(energy, dtype=float))

    def count(self, lo: float, energy):
        """Number of levels between lo and energy."""
        e = np.asarray(energy, dtype=float)
        return self.gamma0 / self.beta * np.exp(self.beta * lo) * np.expm1(self.beta * (e - lo))

    def inverse_count(self, lo: float, n):
        n = np.asarray(n, dtype=float)
        return lo + np.log1p(n * self.beta / (self.gamma0 * np.exp(self.beta * lo))) / self.beta


@dataclass(frozen=True)
class TabulatedDensity:
    """Piecewise-linear density through (energies[i], values[i])."""

    energies: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        e = tuple(float(x) for x in self.energies)
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "values", v)
        if len(e) < 2 or len(e) != len(v):
            raise ValueError("tabulated density needs >= 2 points and matching lengths")
        if np.any(np.diff(e) <= 0):
            raise ValueError("tabulated energies must be strictly increasing")
        if min(v) <= 0:
            raise ValueError("tabulated density must be positive")

    @property
    def _knots(self):
        e = np.asarray(self.energies)
        v = np.asarray(self.values)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(e))])
        return e, v, cum

    def _check(self, energy):
        e = np.asarray(energy, dtype=float)
        if np.any(e < self.energies[0] - 1e-12) or np.any(e > self.energies[-1] + 1e-12):
            raise BathWindowError("energy outside the tabulated density range")
        return e

    def __call__(self, energy):
        e = self._check(energy)
        return np.interp(e, self.energies, self.values)

    def _cumulative(self, energy):
        e = np.clip(self._check(energy), self.energies[0], self.energies[-1])
        knots, v, cum = self._knots
        i = np.clip(np.searchsorted(knots, e, side="right") - 1, 0, len(knots) - 2)
        h = e - knots[i]
        slope = (v[i + 1] - v[i]) / (knots[i + 1] - knots[i])
        return cum[i] + v[i] * h + 0.5 * slope * h * h

    def count(self, lo: float, energy):
        return self._cumulative(energy) - self._cumulative(lo)

    def inverse_count(self, lo: float, n):
        knots, v, cum = self._knots
        target = np.asarray(n, dtype=float) + self._cumulative(lo)
        i = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(knots) - 2)
        rest = target - cum[i]
        slope = (v[i + 1] - v[i]) / (knots[i + 1] - knots[i])
        # stable root of v*h + slope*h^2/2 = rest
        disc = np.maximum(v[i] ** 2 + 2.0 * slope * rest, 0.0)
        return knots[i] + 2.0 * rest / (v[i] + np.sqrt(disc))


BathDensity = Union[ExponentialDensity, TabulatedDensity]


@dataclass(frozen=True)
class BathSpec:
    density: BathDensity
    window: tuple[float, float]
    jitter_seed: int | None = None
    jitter_fraction: float = 0.4

    def __post_init__(self):
        lo, hi = (float(w) for w in self.window)
        object.__setattr__(self, "window", (lo, hi))
        if not hi > lo:
            raise ValueError("bath window must have hi > lo")
        if not 0.0 <= self.jitter_fraction < 0.5:
            raise ValueError("jitter_fraction must lie in [0, 0.5)")
        if np.any(np.asarray(self.density(np.linspace(lo, hi, 65))) <= 0):
            raise ValueError("bath density must be positive on the window")

    def levels_between(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Bath level indices and energies that fall in [a, b].

        Level n sits where the cumulative count from the window's lower edge
        equals n + 1/2, shifted by at most jitter_fraction of the local spacing.
        """
        lo, hi = self.window
        a, b = max(a, lo), min(b, hi)
        if b < a:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        total = float(self.density.count(lo, hi))
        n_first = max(int(math.floor(float(self.density.count(lo, a)) - 0.5)) - 1, 0)
        n_last = min(int(math.ceil(float(self.density.count(lo, b)) - 0.5)) + 1, int(math.floor(total - 0.5)))
        if n_last < n_first:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        n = np.arange(n_first, n_last + 1, dtype=np.int64)
        energies = self.density.inverse_count(lo, n + 0.5)
        if self.jitter_seed is not None and self.jitter_fraction > 0:
            # one stream over levels 0..n_last so a level's shift does not depend on the query range
            u = np.random.default_rng(self.jitter_seed).uniform(-1.0, 1.0, n_last + 1)[n_first:]
            energies = energies + self.jitter_fraction * u / self.density(energies)
        keep = (energies >= a) & (energies <= b)
        return n[keep], energies[keep]


# ---------------------------------------------------------------------------
# the shell
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositeLevel:
    j: int
    mu: int
    b: int
    E_j: float


@dataclass(frozen=True, eq=False)
class Shell:
    """Retained composite levels, ordered by subspace then bath energy."""

    system: SystemSpec
    center: float
    width: float
    mu: np.ndarray
    bath_index: np.ndarray
    bath_energies: np.ndarray
    energies: np.ndarray

    def __len__(self) -> int:
        return len(self.energies)

    def __getitem__(self, j: int) -> CompositeLevel:
        j = range(len(self))[j]
        return CompositeLevel(j, int(self.mu[j]), int(self.bath_index[j]), float(self.energies[j]))

    def __iter__(self) -> Iterator[CompositeLevel]:
        return (self[j] for j in range(len(self)))

    @property
    def d_S(self) -> int:
        return self.system.d_S

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.mu, minlength=self.d_S)

    def indices(self, mu: int) -> np.ndarray:
        return np.flatnonzero(self.mu == mu)


def build_shell(system: SystemSpec, bath: BathSpec, E_shell: float, width: float,
                max_dim: int = DEFAULT_MAX_DIM) -> Shell:
    """All composite levels with |E_mu^S + E_b^B - E_shell| <= width/2."""
    if not width > 0:
        raise ValueError("shell width must be positive")
    lo, hi = bath.window
    mus, bidx, benergy = [], [], []
    for mu, e_s in enumerate(system.levels):
        a, b = E_shell - e_s - width / 2, E_shell - e_s + width / 2
        n, eb = bath.levels_between(a, b)
        eb_total = e_s + eb
        keep = np.abs(eb_total - E_shell) <= width / 2
        n, eb = n[keep], eb[keep]
        if len(n) == 0:
            raise EmptySubspace(f"subspace {mu} (E_S={e_s!r}) has no bath levels in the shell")
        if a < lo or b > hi:
            raise BathWindowError(
                f"bath window {bath.window} does not cover [{a!r}, {b!r}] needed by subspace {mu}")
        mus.append(np.full(len(n), mu, dtype=np.int64))
        bidx.append(n)
        benergy.append(eb)
    mu_arr = np.concatenate(mus)
    if len(mu_arr) > max_dim:
        raise ShellTooWide(len(mu_arr), max_dim)
    bath_e = np.concatenate(benergy)
    return Shell(system=system, center=float(E_shell), width=float(width), mu=mu_arr,
                 bath_index=np.concatenate(bidx), bath_energies=bath_e,
                 energies=system.energies[mu_arr] + bath_e)


def estimate_shell_dimension(system: SystemSpec, bath: BathSpec, E_shell: float, width: float) -> float:
    """Integral of Gamma_B over each subspace's window, summed; no levels placed."""
    lo, hi = bath.window
    total = 0.0
    for e_s in system.levels:
        a = min(max(E_shell - e_s - width / 2, lo), hi)
        b = min(max(E_shell - e_s + width / 2, lo), hi)
        total += float(bath.density.count(a, b))
    return total


def build_h0(levels: Shell | Sequence[CompositeLevel]) -> np.ndarray:
    energies = _energies(levels)
    if len(energies) == 0:
        raise ValueError("no levels")
    return np.diag(energies)


def _energies(levels) -> np.ndarray:
    if isinstance(levels, Shell):
        return levels.energies
    return np.array([lvl.E_j for lvl in levels], dtype=float)


def _subspaces(levels) -> np.ndarray:
    if isinstance(levels, Shell):
        return levels.mu
    return np.array([lvl.mu for lvl in levels], dtype=np.int64)


# ---------------------------------------------------------------------------
# interaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianProfile:
    sigma_band: float

    def __call__(self, delta):
        return np.exp(-np.square(delta) / (2.0 * self.sigma_band ** 2))


@dataclass(frozen=True)
class ConstantProfile:
    def __call__(self, delta):
        return np.ones_like(np.asarray(delta, dtype=float))


@dataclass(frozen=True)
class TabulatedProfile:
    """Envelope of |E_j - E_k|, linearly interpolated, zero beyond the table."""

    delta: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, delta):
        return np.interp(np.abs(delta), self.delta, self.values, right=0.0)


Profile = Union[GaussianProfile, ConstantProfile, TabulatedProfile]


@dataclass(frozen=True)
class InteractionSpec:
    coupling: float
    profile: Profile = field(default_factory=lambda: GaussianProfile(0.1))
    ensemble_mode: EnsembleMode = "complex-phase"
    base_phase_seed: int | None = None

    def __post_init__(self):
        if self.coupling < 0:
            raise ValueError("coupling must be nonnegative")
        if self.ensemble_mode not in ("complex-phase", "real-sign"):
            raise ValueError(f"unknown ensemble mode {self.ensemble_mode!r}")

    @property
    def dtype(self):
        return np.complex128 if self.ensemble_mode == "complex-phase" else np.float64

    def envelope(self, levels) -> np.ndarray:
        """f(E_j, E_k) with zeros inside each subspace block."""
        e = _energies(levels)
        mu = _subspaces(levels)
        f = np.asarray(self.profile(e[:, None] - e[None, :]), dtype=float)
        f[mu[:, None] == mu[None, :]] = 0.0
        return f

    def envelope_at(self, e_j: float, e_k: float) -> float:
        return float(self.profile(np.float64(e_j) - np.float64(e_k)))


@dataclass(frozen=True)
class PhaseRealization:
    """Per-level twist: angles phi_j, or signs s_j in real-sign mode."""

    values: np.ndarray
    seed: int
    mode: EnsembleMode = "complex-phase"

    def __len__(self) -> int:
        return len(self.values)

    @property
    def factors(self) -> np.ndarray:
        """exp(i phi_j), or the signs themselves."""
        if self.mode == "real-sign":
            return np.asarray(self.values, dtype=float)
        return np.exp(1j * np.asarray(self.values))


def draw_phases(dimension: int, seed: int, mode: EnsembleMode = "complex-phase") -> PhaseRealization:
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    if mode == "complex-phase":
        values = rng.uniform(0.0, 2.0 * np.pi, dimension)
    elif mode == "real-sign":
        values = rng.choice(np.array([-1.0, 1.0]), size=dimension)
    else:
        raise ValueError(f"unknown ensemble mode {mode!r}")
    return PhaseRealization(values=values, seed=seed, mode=mode)


def zero_phases(dimension: int, mode: EnsembleMode = "complex-phase") -> PhaseRealization:
    values = np.zeros(dimension) if mode == "complex-phase" else np.ones(dimension)
    return PhaseRealization(values=values, seed=-1, mode=mode)


def base_phases(dimension: int, spec: InteractionSpec) -> np.ndarray:
    """Absorbed pair phases exp(i theta'_jk); all ones unless base_phase_seed is set.

    Hermitian (symmetric in real-sign mode); pairs touching level 0 keep phase 1.
    """
    if spec.base_phase_seed is None:
        return np.ones((dimension, dimension), dtype=spec.dtype)
    rng = np.random.default_rng(spec.base_phase_seed)
    iu = np.triu_indices(dimension, k=1)
    if spec.ensemble_mode == "complex-phase":
        upper = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, len(iu[0])))
    else:
        upper = rng.choice(np.array([-1.0, 1.0]), size=len(iu[0]))
    out = np.zeros((dimension, dimension), dtype=spec.dtype)
    out[iu] = upper
    out[0, :] = 1.0
    out = out + out.conj().T
    np.fill_diagonal(out, 1.0)
    return out


def build_interaction(levels, spec: InteractionSpec, phases: PhaseRealization,
                      base: np.ndarray | None = None) -> np.ndarray:
    """H1_jk = lambda f(E_j,E_k) exp(i(phi_j - phi_k)) base_jk, zero diagonal."""
    n = len(levels)
    if len(phases) != n:
        raise ValueError(f"phase realization has length {len(phases)}, shell has {n}")
    if phases.mode != spec.ensemble_mode:
        raise ValueError("phase realization mode differs from interaction ensemble mode")
    if base is None:
        base = base_phases(n, spec)
    amp = spec.coupling * spec.envelope(levels)
    d = phases.factors
    h = amp * base * d[:, None] * np.conj(d)[None, :]
    # mirror the strict upper triangle so the result is exactly Hermitian
    upper = np.triu(h, k=1)
    return (upper + upper.conj().T).astype(spec.dtype, copy=False)


@dataclass(frozen=True, eq=False)
class HamiltonianPair:
    """H0 as its diagonal, H1 as a dense Hermitian matrix."""

    h0_diagonal: np.ndarray
    h1: np.ndarray

    @property
    def h0(self) -> np.ndarray:
        return np.diag(self.h0_diagonal)

    def total(self) -> np.ndarray:
        h = self.h1.copy()
        h[np.diag_indices_from(h)] += self.h0_diagonal
        return h


def build_hamiltonian(shell: Shell, spec: InteractionSpec, phases: PhaseRealization,
                      base: np.ndarray | None = None) -> HamiltonianPair:
    return HamiltonianPair(shell.energies.copy(), build_interaction(shell, spec, phases, base))
