"""Cox process with intensity ``beta * exp(-alpha * Z_t)`` for a reflected random walk Z."""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from wif_smc.exceptions import ModelError
from wif_smc.fkengine import (
    ConstantPotential,
    FKModel,
    TransitionKind,
    constant_diffusion,
    reflect,
    uniform_grid,
)
from wif_smc.pydantic_models import CoxParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoxIntensity:
    """``beta * exp(-alpha * x)``, bounded on the reflection interval."""

    alpha: float
    beta: float
    lower: float
    upper: float

    @property
    def bound(self) -> float:
        """Largest intensity on ``[lower, upper]``."""
        return self.beta * max(np.exp(-self.alpha * self.lower), np.exp(-self.alpha * self.upper))

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Evaluate on the first coordinate."""
        return self.beta * np.exp(-self.alpha * x[:, 0])


@dataclass(frozen=True)
class CoxData:
    """Simulated event times with the latent path on its grid."""

    events: np.ndarray
    grid: np.ndarray
    latent: np.ndarray


def _reflect_params(params: CoxParams):
    return params.lower, params.upper


def cox_simulate(params: CoxParams, seed: int) -> CoxData:
    """Simulate the latent reflected random walk and the events it drives.

    The walk starts from a reflected standard normal and takes Gaussian steps of variance
    ``sigma**2 * delta``. Events are drawn by thinning a homogeneous Poisson stream whose rate
    bounds the intensity on the reflection interval; the intensity is held constant between
    grid points.

    :param params: model parameters
    :param seed: seed of the random generator
    """
    rng = np.random.default_rng(seed)
    grid = uniform_grid(params.horizon, params.delta)
    steps = rng.standard_normal(grid.size - 1) * params.sigma * np.sqrt(params.delta)
    latent = np.empty(grid.size)
    latent[0] = reflect(rng.standard_normal(), *_reflect_params(params))
    for k, step in enumerate(steps):
        latent[k + 1] = reflect(latent[k] + step, *_reflect_params(params))

    intensity = CoxIntensity(params.alpha, params.beta, params.lower, params.upper)
    majorant = intensity.bound
    count = rng.poisson(majorant * params.horizon)
    candidates = np.sort(rng.uniform(0.0, params.horizon, count))
    cells = np.minimum(np.searchsorted(grid, candidates, side="right") - 1, grid.size - 1)
    rates = params.beta * np.exp(-params.alpha * latent[cells])
    keep = rng.random(count) * majorant < rates
    events = candidates[keep]
    logger.debug(f"cox_simulate: {count} candidates, {events.size} events")
    return CoxData(events=events, grid=grid, latent=latent)


def cox_model(params: CoxParams, events: Sequence[float], unit_potentials: bool = False):
    """Feynman-Kac model whose normalising constant is the Cox likelihood.

    The grid is the uniform grid with the event times inserted. At grid point ``t_k`` the
    log-potential is ``-(t_{k+1} - t_k) beta exp(-alpha x)``, plus ``log beta - alpha x`` when
    an event happened at ``t_k``.

    :param params: model parameters
    :param events: event times in ``[0, horizon)``
    :param unit_potentials: use G = 1, so the normalising constant is one
    """
    events = np.sort(np.asarray(events, dtype=float))
    if events.size and (events[0] < 0 or events[-1] >= params.horizon):
        raise ModelError("event times must lie in [0, horizon)")
    grid = np.union1d(uniform_grid(params.horizon, params.delta), events)
    lower, upper = _reflect_params(params)

    def initial(n, rng):
        return rng.standard_normal((n, 1))

    def initial_density(z):
        return norm.pdf(z)

    def drift(x):
        return np.zeros_like(x)

    if unit_potentials:
        return FKModel(
            dim=1,
            initial=initial,
            drift=drift,
            diffusion=constant_diffusion(params.sigma),
            potential=ConstantPotential(0.0),
            grid=grid,
            transition=TransitionKind.reflected_gaussian,
            initial_density=initial_density,
            reflect_bounds=(lower, upper),
        )

    log_beta = np.log(params.beta) if params.beta > 0 else -np.inf

    def mark(k, x):
        return log_beta - params.alpha * x[:, 0]

    return FKModel(
        dim=1,
        initial=initial,
        drift=drift,
        diffusion=constant_diffusion(params.sigma),
        potential=CoxIntensity(params.alpha, params.beta, lower, upper),
        grid=grid,
        transition=TransitionKind.reflected_gaussian,
        initial_density=initial_density,
        reflect_bounds=(lower, upper),
        mark_log_potential=mark,
        marked_steps=frozenset(np.searchsorted(grid, events).tolist()),
    )
