"""Exception hierarchy shared by all modules."""


class PhasethermError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PhasethermError, ValueError):
    pass


class EmptySubspace(PhasethermError, ValueError):
    """A system level has no bath partner inside the energy shell."""


class BathWindowError(PhasethermError, ValueError):
    """The bath window does not cover the shell for some subspace."""


class ShellTooWide(PhasethermError, ValueError):
    def __init__(self, dimension: int, cap: int):
        super().__init__(f"shell dimension {dimension} exceeds cap {cap}")
        self.dimension = dimension
        self.cap = cap


class ConvergenceFailure(PhasethermError, RuntimeError):
    pass


class StepTooLarge(PhasethermError, ValueError):
    def __init__(self, dt: float, max_dt: float):
        super().__init__(f"dt={dt!r} leaves a non-positive diagonal in T; need dt < {max_dt!r}")
        self.dt = dt
        self.max_dt = max_dt


class NormDrift(PhasethermError, RuntimeError):
    pass


class Reducible(PhasethermError, ValueError):
    """The Markov chain has more than one closed class."""


class LengthMismatch(PhasethermError, ValueError):
    pass
