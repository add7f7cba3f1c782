"""Thermalization of a subsystem under a random-phase weak interaction.

Exact unitary simulation of a system+bath energy shell, Monte Carlo over
phase realizations, and the coarse-grained Markov chain over system levels.
"""

from phasetherm.errors import (
    BathWindowError,
    ConfigError,
    ConvergenceFailure,
    EmptySubspace,
    LengthMismatch,
    NormDrift,
    PhasethermError,
    Reducible,
    ShellTooWide,
    StepTooLarge,
)

__version__ = "0.1.0"

__all__ = [
    "BathWindowError",
    "ConfigError",
    "ConvergenceFailure",
    "EmptySubspace",
    "LengthMismatch",
    "NormDrift",
    "PhasethermError",
    "Reducible",
    "ShellTooWide",
    "StepTooLarge",
    "__version__",
]
