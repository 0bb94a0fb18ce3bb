"""Exponential (rho) noise schedule and noise-level weighting."""
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ParameterError


@dataclass(frozen=True)
class NoiseSchedule:
    rho: float
    sigma_min: float
    sigma_max: float
    num_steps: int
    sigmas: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return self.num_steps

    def __getitem__(self, t):
        return float(self.sigmas[t])


def build_schedule(rho=7.0, sigma_min=0.002, sigma_max=80.0, num_steps=18):
    """sigma_t = (smax^(1/rho) + t/(T-1) (smin^(1/rho) - smax^(1/rho)))^rho, t = 0..T-1."""
    if int(num_steps) != num_steps or num_steps < 2:
        raise ParameterError(f"schedule needs at least 2 steps, got {num_steps}")
    if not (0 < sigma_min < sigma_max):
        raise ParameterError(
            f"need 0 < sigma_min < sigma_max, got sigma_min={sigma_min}, sigma_max={sigma_max}")
    if rho <= 0:
        raise ParameterError(f"rho must be positive, got {rho}")

    num_steps = int(num_steps)
    ramp = np.arange(num_steps, dtype=np.float64) / (num_steps - 1)
    lo = sigma_min ** (1.0 / rho)
    hi = sigma_max ** (1.0 / rho)
    sigmas = (hi + ramp * (lo - hi)) ** rho
    # endpoints exactly, independent of pow round-off
    sigmas[0] = sigma_max
    sigmas[-1] = sigma_min
    sigmas.setflags(write=False)

    if not np.all(np.diff(sigmas) < 0):
        raise ParameterError(
            f"schedule is not strictly decreasing for rho={rho}, T={num_steps}")
    return NoiseSchedule(float(rho), float(sigma_min), float(sigma_max), num_steps, sigmas)


def karras_weight(sigma):
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return 1.0 / (sigma * sigma)


def draw_timestep(rng, schedule):
    t = int(rng.integers(0, schedule.num_steps))
    return t, schedule[t]
