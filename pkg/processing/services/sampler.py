"""Heun probability-flow sampling of the residual, then fusion y_hat = x + z_0."""
import logging
from dataclasses import dataclass

import numpy as np

from ..exceptions import SamplerError
from .grid import as_grid
from .schedule import build_schedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    schedule: object
    seed: int = 0
    record_trajectory: bool = False
    terminal_step: bool = False


@dataclass
class SampleResult:
    enhanced: np.ndarray
    z0: np.ndarray
    trajectory: list = None


def _check(z, step):
    if not np.all(np.isfinite(z)):
        raise SamplerError("non-finite sampler state", step=step)


def initial_state(shape, cfg):
    """z_T ~ N(0, sigma_max^2 I), seeded."""
    rng = np.random.default_rng(cfg.seed)
    return rng.standard_normal(shape) * cfg.schedule.sigmas[0]


def heun_sample(f, x, cfg, z_init=None, fuse=True):
    """Integrate dz/dsigma = (z - f(z, x, sigma)) / sigma down the schedule.

    ``f(z, x, sigma)`` returns the residual estimate. With ``fuse`` the result is
    x + z_0 (residual models); without it z_0 itself (direct models).
    """
    x = as_grid(x, 'radar')
    sigmas = cfg.schedule.sigmas
    z = initial_state(x.shape, cfg) if z_init is None else np.array(z_init, dtype=np.float64)
    trajectory = [(0, float(sigmas[0]), z.copy())] if cfg.record_trajectory else None

    for i in range(len(sigmas) - 1):
        sigma, sigma_next = sigmas[i], sigmas[i + 1]
        d = (z - f(z, x, sigma)) / sigma
        z_pred = z + (sigma_next - sigma) * d
        _check(z_pred, i)
        d_next = (z_pred - f(z_pred, x, sigma_next)) / sigma_next
        z = z + 0.5 * (sigma_next - sigma) * (d + d_next)
        _check(z, i)
        if trajectory is not None:
            trajectory.append((i + 1, float(sigma_next), z.copy()))

    if cfg.terminal_step:
        # Euler step from sigma_min to 0 lands on the denoiser output
        z = np.array(f(z, x, sigmas[-1]), dtype=np.float64)
        _check(z, len(sigmas) - 1)
        if trajectory is not None:
            trajectory.append((len(sigmas), 0.0, z.copy()))

    enhanced = x + z if fuse else z
    return SampleResult(enhanced, z, trajectory)


def reference_integrate(f, x, z_init, rho, sigma_min, sigma_max, n_steps=10_000):
    """Dense Euler integration of the same ODE on an ``n_steps`` rho-schedule."""
    sigmas = build_schedule(rho, sigma_min, sigma_max, n_steps).sigmas
    x = np.asarray(x, dtype=np.float64)
    z = np.array(z_init, dtype=np.float64)
    for i in range(n_steps - 1):
        z = z + (sigmas[i + 1] - sigmas[i]) * (z - f(z, x, sigmas[i])) / sigmas[i]
    return z
