"""Run configuration: strict YAML schema and conversion to model objects.

Layout (all keys lower-case; unknown keys are rejected)::

    model:
      system:      {levels: [0.0, 0.3]}
      bath:
        density:   {model: exponential, gamma0: 100.0, beta: 1.0}
                   # or {model: tabulated, energies: [...], values: [...]}
        window:    [2.0, 2.8]
        jitter_seed: null          # optional u64
        jitter_fraction: 0.4
      shell:       {center: 2.5, width: 0.5, max_dim: 4000}
      interaction:
        coupling:  0.001
        profile:   {kind: gaussian, sigma_band: 1.0}
                   # or {kind: constant} / {kind: tabulated, delta: [...], values: [...]}
        ensemble_mode: complex-phase   # or real-sign
        base_phase_seed: 17            # null keeps all absorbed phases at 1
    dynamics:
      t_final: 600.0
      dt_output: 3.0
      initial:     {kind: subspace, subspace: 1}   # or {kind: basis, index: 0}
    ensemble:      {n: 200, seed_base: 1000, workers: 1, reuse_spectrum: true}
    markov:        {dt: null, rates: representative}
    analysis:      {...tolerances, see AnalysisConfig...}
    output:        {directory: out, formats: [csv]}

Subspace indices are 0-based, in ascending order of system energy.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from phasetherm.errors import ConfigError
from phasetherm.model import (
    BathSpec,
    ConstantProfile,
    ExponentialDensity,
    GaussianProfile,
    InteractionSpec,
    SystemSpec,
    TabulatedDensity,
    TabulatedProfile,
)

Seed = Annotated[int, Field(ge=0, lt=2**64)]
Positive = Annotated[float, Field(gt=0, allow_inf_nan=False)]
Finite = Annotated[float, Field(allow_inf_nan=False)]

CHECK_NAMES = ("markov_agreement", "fluctuation_bound", "typicality", "conditions",
               "irreducible", "rate_recovery", "conservation")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemConfig(_Strict):
    levels: list[Finite]

    @field_validator("levels")
    @classmethod
    def _levels(cls, v):
        if len(v) < 2:
            raise ValueError("need at least two system levels (d_S >= 2)")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("levels must be sorted ascending")
        if any(b - a <= 1e-12 for a, b in zip(v, v[1:])):
            raise ValueError("degenerate levels (spacing <= 1e-12)")
        return v


class ExponentialDensityConfig(_Strict):
    model: Literal["exponential"]
    gamma0: Positive
    beta: Positive


class TabulatedDensityConfig(_Strict):
    model: Literal["tabulated"]
    energies: list[Finite]
    values: list[Positive]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.energies) < 2 or len(self.energies) != len(self.values):
            raise ValueError("need >= 2 points and equal-length energies/values")
        if any(b <= a for a, b in zip(self.energies, self.energies[1:])):
            raise ValueError("energies must be strictly increasing")
        return self


class BathConfig(_Strict):
    density: Annotated[Union[ExponentialDensityConfig, TabulatedDensityConfig], Field(discriminator="model")]
    window: tuple[Finite, Finite]
    jitter_seed: Optional[Seed] = None
    jitter_fraction: Annotated[float, Field(ge=0, lt=0.5)] = 0.4

    @field_validator("window")
    @classmethod
    def _window(cls, v):
        if not v[1] > v[0]:
            raise ValueError("window must be [lo, hi] with hi > lo")
        return v


class ShellConfig(_Strict):
    center: Finite
    width: Positive
    max_dim: Annotated[int, Field(gt=0)] = 4000


class GaussianProfileConfig(_Strict):
    kind: Literal["gaussian"]
    sigma_band: Positive


class ConstantProfileConfig(_Strict):
    kind: Literal["constant"]


class TabulatedProfileConfig(_Strict):
    kind: Literal["tabulated"]
    delta: list[Annotated[float, Field(ge=0, allow_inf_nan=False)]]
    values: list[Annotated[float, Field(ge=0, allow_inf_nan=False)]]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.delta) < 2 or len(self.delta) != len(self.values):
            raise ValueError("need >= 2 points and equal-length delta/values")
        if any(b <= a for a, b in zip(self.delta, self.delta[1:])):
            raise ValueError("delta must be strictly increasing")
        return self


class InteractionConfig(_Strict):
    coupling: Annotated[float, Field(ge=0, allow_inf_nan=False)]
    profile: Annotated[Union[GaussianProfileConfig, ConstantProfileConfig, TabulatedProfileConfig],
                       Field(discriminator="kind")] = GaussianProfileConfig(kind="gaussian", sigma_band=0.1)
    ensemble_mode: Literal["complex-phase", "real-sign"] = "complex-phase"
    base_phase_seed: Optional[Seed] = None


class ModelConfig(_Strict):
    system: SystemConfig
    bath: BathConfig
    shell: ShellConfig
    interaction: InteractionConfig


class InitialStateConfig(_Strict):
    kind: Literal["subspace", "basis"]
    subspace: Optional[Annotated[int, Field(ge=0)]] = None
    index: Optional[Annotated[int, Field(ge=0)]] = None

    @model_validator(mode="after")
    def _fields(self):
        if self.kind == "subspace" and self.subspace is None:
            raise ValueError("kind 'subspace' needs 'subspace'")
        if self.kind == "basis" and self.index is None:
            raise ValueError("kind 'basis' needs 'index'")
        return self


class DynamicsConfig(_Strict):
    t_final: Positive
    dt_output: Positive
    initial: InitialStateConfig

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_final / self.dt_output - 1e-9))


class EnsembleConfig(_Strict):
    n: Annotated[int, Field(ge=2)]
    seed_base: Seed
    workers: Annotated[int, Field(ge=1)] = 1
    reuse_spectrum: bool = True


class MarkovConfig(_Strict):
    dt: Optional[Positive] = None
    rates: Literal["representative", "shell_averaged"] = "representative"


class AnalysisConfig(_Strict):
    tv_tolerance: Positive = 0.05
    gibbs_tolerance: Positive = 0.1
    typicality_fraction: Annotated[float, Field(gt=0, le=1)] = 0.95
    equilibration_tol: Positive = 0.05
    d0_ratio_min: Positive = 10.0
    tau_ratio_max: Positive = 0.1
    weak_ratio_max: Positive = 0.1
    fluctuation_min_d0: Annotated[float, Field(ge=0)] = 10.0
    rate_tolerance: Positive = 0.15
    mandatory: list[Literal[CHECK_NAMES]] = list(CHECK_NAMES)  # type: ignore[valid-type]


class OutputConfig(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "npz"]] = ["csv"]


class RunConfig(_Strict):
    model: ModelConfig
    dynamics: DynamicsConfig
    ensemble: EnsembleConfig
    markov: MarkovConfig = MarkovConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _cross(self):
        d_S = len(self.model.system.levels)
        init = self.dynamics.initial
        if init.kind == "subspace" and init.subspace >= d_S:
            raise ValueError(f"dynamics.initial.subspace {init.subspace} out of range for d_S={d_S}")
        return self

    # --- conversion to model objects ---

    def system_spec(self) -> SystemSpec:
        return SystemSpec(tuple(self.model.system.levels))

    def bath_spec(self) -> BathSpec:
        b = self.model.bath
        if b.density.model == "exponential":
            density = ExponentialDensity(b.density.gamma0, b.density.beta)
        else:
            density = TabulatedDensity(tuple(b.density.energies), tuple(b.density.values))
        return BathSpec(density, tuple(b.window), b.jitter_seed, b.jitter_fraction)

    def interaction_spec(self) -> InteractionSpec:
        i = self.model.interaction
        p = i.profile
        if p.kind == "gaussian":
            profile = GaussianProfile(p.sigma_band)
        elif p.kind == "constant":
            profile = ConstantProfile()
        else:
            profile = TabulatedProfile(tuple(p.delta), tuple(p.values))
        return InteractionSpec(i.coupling, profile, i.ensemble_mode, i.base_phase_seed)

    @property
    def beta(self) -> float | None:
        d = self.model.bath.density
        return d.beta if d.model == "exponential" else None

    def canonical_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True, default_flow_style=None)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)
