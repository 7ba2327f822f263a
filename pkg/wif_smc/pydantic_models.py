"""Pydantic models for run configurations and serialisable results."""
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from wif_smc.fkengine import (
    BoxPotential,
    ConstantPotential,
    FKModel,
    InverseQuadraticPotential,
    StateMesh,
    TransitionKind,
    ou_model,
)
from wif_smc.resampling import SchemeId

SCHEMA_VERSION = "1.0"


class StrictModel(BaseModel):
    """Base model rejecting unknown keys."""

    model_config = ConfigDict(extra="forbid")


def _check_scheme(name: str) -> str:
    return SchemeId.parse(name).name


class PotentialConfig(StrictModel):
    """Potential function of an Ornstein-Uhlenbeck model."""

    kind: Literal["box", "constant", "inverse-quadratic"] = Field(
        "box", description="Shape of the potential"
    )
    height: float = Field(6.0, ge=0, description="Value of the box potential outside its window")
    center: float = Field(0.5, description="Centre of the box window")
    width: float = Field(0.1, gt=0, description="Half width of the box window")
    value: float = Field(0.0, ge=0, description="Value of the constant potential")
    scale: float = Field(1.0, ge=0, description="Scale of the inverse quadratic potential")

    def build(self):
        """Potential callable V(t, x)."""
        if self.kind == "box":
            return BoxPotential(self.height, self.center, self.width)
        if self.kind == "constant":
            return ConstantPotential(self.value)
        return InverseQuadraticPotential(self.scale)


class ModelConfig(StrictModel):
    """One-dimensional Ornstein-Uhlenbeck model with a potential."""

    theta: float = Field(0.1, gt=0, description="Mean-reversion rate")
    sigma: float = Field(1.0, gt=0, description="Diffusion coefficient")
    mean: float = Field(0.0, description="Long-run mean")
    horizon: float = Field(10.0, gt=0, description="Final time")
    delta_log2: int = Field(-6, le=0, description="Grid step is 2 ** delta_log2")
    transition: TransitionKind = Field(TransitionKind.exact_ou, description="Transition kernel")
    drift_clip: Optional[float] = Field(None, gt=0, description="Clip |drift| at this value")
    potential: PotentialConfig = Field(default_factory=PotentialConfig)

    @property
    def stationary_sd(self) -> float:
        """Standard deviation of the stationary law."""
        return self.sigma / float(np.sqrt(2.0 * self.theta))

    def build(self, delta_log2: Optional[int] = None) -> FKModel:
        """Model on the grid of step ``2 ** delta_log2``."""
        step = 2.0 ** (self.delta_log2 if delta_log2 is None else delta_log2)
        return ou_model(
            theta=self.theta,
            sigma=self.sigma,
            potential=self.potential.build(),
            horizon=self.horizon,
            delta=step,
            transition=self.transition,
            drift_clip=self.drift_clip,
            mean=self.mean,
        )


class MeshConfig(StrictModel):
    """State mesh of the quadrature reference, in stationary standard deviations."""

    half_width: float = Field(6.0, gt=0, description="Mesh covers mean +- half_width * sd")
    points: int = Field(2001, ge=3, description="Number of mesh points")

    def build(self, model: ModelConfig) -> StateMesh:
        """Mesh for the given model."""
        span = self.half_width * model.stationary_sd
        return StateMesh(model.mean - span, model.mean + span, self.points)


class PfRunConfig(StrictModel):
    """A single particle filter run."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    scheme: str = Field("systematic-partition", description="Resampling scheme")
    n_particles: int = Field(512, ge=1, description="Number of particles")

    @field_validator("scheme")
    @classmethod
    def check_scheme(cls, value: str) -> str:
        """Canonicalise the scheme name."""
        return _check_scheme(value)


class ReferenceConfig(StrictModel):
    """Quadrature reference of a model."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)


class LimitSimConfig(StrictModel):
    """Ensemble of limit-process paths."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    scheme: str = Field("systematic-partition", description="Resampling scheme")
    n_particles: int = Field(8, ge=1, description="Number of particles")
    replicates: int = Field(1, ge=1, description="Number of paths")
    fine_step: Optional[float] = Field(None, gt=0, description="Euler sub-step")
    majorant: Optional[float] = Field(None, ge=0, description="Thinning rate")
    skeleton_csv: Optional[str] = Field(None, description="Write the first path's skeleton here")

    @field_validator("scheme")
    @classmethod
    def check_scheme(cls, value: str) -> str:
        """Canonicalise the scheme name."""
        return _check_scheme(value)


class FkCheckConfig(StrictModel):
    """Comparison of the discrete, limit and single-diffusion Feynman-Kac functionals."""

    model: ModelConfig = Field(
        default_factory=lambda: ModelConfig(
            horizon=1.0,
            delta_log2=-10,
            transition=TransitionKind.euler,
            drift_clip=10.0,
            potential=PotentialConfig(kind="inverse-quadratic"),
        )
    )
    schemes: List[str] = Field(
        default_factory=lambda: ["killing", "systematic-partition", "ssp-partition"],
        description="Schemes to check",
    )
    n_particles: int = Field(8, ge=1, description="Number of particles")
    replicates: int = Field(400, ge=2, description="Paths per estimator")
    rhs_replicates: int = Field(20000, ge=2, description="Single diffusions for the right side")
    fine_step: Optional[float] = Field(None, gt=0, description="Euler sub-step")
    test_function: Literal["one", "x", "x2"] = Field("x2", description="Test function f")

    @field_validator("schemes")
    @classmethod
    def check_schemes(cls, value: List[str]) -> List[str]:
        """Canonicalise the scheme names."""
        return [_check_scheme(name) for name in value]


class SweepConfig(StrictModel):
    """Grid of particle filter runs on the Ornstein-Uhlenbeck model."""

    schemes: List[str] = Field(
        default_factory=lambda: ["killing", "systematic-partition", "ssp-partition"],
        description="Resampling schemes",
    )
    n_particles: List[int] = Field(default_factory=lambda: [64], description="Particle counts")
    delta_log2: List[int] = Field(default_factory=lambda: [-6], description="log2 of grid steps")
    repetitions: int = Field(10, ge=2, description="Runs per (scheme, N, delta)")
    model: ModelConfig = Field(default_factory=ModelConfig)
    base_seed: int = Field(0, ge=0, description="Seed from which every row seed is derived")
    output: Optional[str] = Field(None, description="CSV output path")
    run_label: str = Field("ou-sweep", description="Label of the run in the results store")

    @field_validator("schemes")
    @classmethod
    def check_schemes(cls, value: List[str]) -> List[str]:
        """Canonicalise the scheme names."""
        return [_check_scheme(name) for name in value]

    @field_validator("n_particles")
    @classmethod
    def check_counts(cls, value: List[int]) -> List[int]:
        """Reject empty particle clouds."""
        if any(n < 1 for n in value):
            raise ValueError("particle counts must be positive")
        return value

    @model_validator(mode="after")
    def check_grid(self):
        """Check that every grid step divides the horizon."""
        for d in self.delta_log2:
            steps = self.model.horizon / 2.0**d
            if d > 0 or abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"delta_log2={d} does not divide the horizon {self.model.horizon}")
        return self


class CoxParams(StrictModel):
    """Cox process driven by a reflected random walk."""

    sigma: float = Field(0.3, gt=0, description="Random walk scale per unit time")
    alpha: float = Field(1.0, ge=0, description="Intensity decay rate")
    beta: float = Field(0.5, ge=0, description="Intensity scale")
    horizon: float = Field(200.0, gt=0, description="Observation window length")
    delta: float = Field(0.01, gt=0, description="Grid step")
    lower: float = Field(-2.0, description="Lower reflection boundary")
    upper: float = Field(2.0, description="Upper reflection boundary")

    @model_validator(mode="after")
    def check_bounds(self):
        """Check the reflection interval."""
        if self.lower >= self.upper:
            raise ValueError("lower reflection boundary must be below the upper one")
        return self


class PmmhConfig(StrictModel):
    """Particle marginal Metropolis-Hastings on the Cox model."""

    params: CoxParams = Field(default_factory=CoxParams)
    events: Optional[List[float]] = Field(None, description="Event times, simulated if absent")
    data_seed: int = Field(0, ge=0, description="Seed of the simulated data set")
    iterations: int = Field(50000, ge=2, description="Chain length")
    burn_in: int = Field(5000, ge=1, description="Discarded initial iterations")
    n_particles: int = Field(32, ge=1, description="Number of particles")
    scheme: str = Field("ssp-partition", description="Resampling scheme")
    prior_variance: float = Field(2.5, gt=0, description="Prior variance of each log-parameter")
    initial_theta: Optional[List[float]] = Field(
        None, description="Initial (log sigma, log alpha, log beta), generator values if absent"
    )
    initial_scale: float = Field(0.1, gt=0, description="Proposal scale before adaptation")
    adapt_start: int = Field(200, ge=2, description="Iteration at which adaptation starts")
    jitter: float = Field(1e-6, gt=0, description="Added to the adapted covariance diagonal")
    unit_potentials: bool = Field(False, description="Force G = 1, the chain targets the prior")

    @field_validator("scheme")
    @classmethod
    def check_scheme(cls, value: str) -> str:
        """Canonicalise the scheme name."""
        return _check_scheme(value)

    @model_validator(mode="after")
    def check_chain(self):
        """Check burn-in, event times and the initial point."""
        if not 0 < self.burn_in < self.iterations:
            raise ValueError("burn_in must lie strictly between 0 and iterations")
        if self.events is not None and any(
            t < 0 or t >= self.params.horizon for t in self.events
        ):
            raise ValueError("event times must lie in [0, horizon)")
        if self.initial_theta is not None and len(self.initial_theta) != 3:
            raise ValueError("initial_theta needs three values")
        return self


class ChainDiagnostics(BaseModel):
    """Summary of an MCMC chain after burn-in."""

    acceptance_rate: float = Field(..., ge=0, le=1, description="Fraction of accepted proposals")
    parameters: List[str] = Field(..., description="Parameter names")
    asymptotic_variance: List[float] = Field(
        ..., description="Batch-means asymptotic variance of each standardised coordinate"
    )
    ire: List[float] = Field(..., description="Asymptotic variance times the particle count")
    acf_lags: List[int] = Field(..., description="Lags of the autocorrelations")
    acf: Dict[str, List[float]] = Field(..., description="Autocorrelations per parameter")
    quantiles: Dict[str, List[float]] = Field(
        ..., description="5%, 50% and 95% quantiles per parameter"
    )


class RunEnvelope(BaseModel):
    """Every artifact written by the command line interface."""

    schema_version: str = Field(SCHEMA_VERSION, description="Artifact schema version")
    command: str = Field(..., description="Subcommand that produced the artifact")
    seed: Optional[int] = Field(None, description="Seed of the run")
    config: dict = Field(..., description="Echo of the configuration")
    result: dict = Field(..., description="Subcommand result")
