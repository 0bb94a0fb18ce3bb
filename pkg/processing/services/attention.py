"""Radar-derived attention maps and the sigma-adaptive regional weight map.

Everything here is computed from the radar image alone; no learned features.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..exceptions import ParameterError
from .grid import as_grid, min_max_normalize, same_shape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GuidanceConfig:
    lambda_s: float = 0.5
    lambda_c: float = 0.5
    alpha_low: float = 2.0
    beta_low: float = 1.0
    sigma_threshold: float = 1.0
    mask_steepness: float = 10.0
    mask_center: float = 0.5

    def validate(self, sigma_min=None, sigma_max=None):
        if self.lambda_s < 0 or self.lambda_c < 0 or self.lambda_s + self.lambda_c <= 0:
            raise ParameterError(
                f"need lambda_s, lambda_c >= 0 with positive sum, got {self.lambda_s}, {self.lambda_c}")
        if not (self.alpha_low >= self.beta_low > 0):
            raise ParameterError(
                f"need alpha_low >= beta_low > 0, got {self.alpha_low}, {self.beta_low}")
        if sigma_min is not None and not (sigma_min < self.sigma_threshold < sigma_max):
            raise ParameterError(
                f"sigma_threshold {self.sigma_threshold} outside ({sigma_min}, {sigma_max})")
        return self


@dataclass(frozen=True)
class GuidanceMaps:
    signal: np.ndarray
    variance: np.ndarray
    consistency: np.ndarray
    attention: np.ndarray
    mask: np.ndarray
    weights: np.ndarray


def signal_strength_attention(intensity):
    """A1 = (I - min I) / (max I - min I); a flat image gives all zeros."""
    return min_max_normalize(as_grid(intensity, 'intensity'), degenerate=0.0)


def local_variance(intensity):
    """Population variance of every 3x3 neighbourhood, replicate-padded borders."""
    grid = as_grid(intensity, 'intensity', min_size=3)
    padded = np.pad(grid, 1, mode='edge')
    windows = sliding_window_view(padded, (3, 3)).reshape(grid.shape + (9,))
    local_mean = windows.mean(axis=-1, keepdims=True)
    return ((windows - local_mean) ** 2).mean(axis=-1)


def consistency_attention(variance):
    """A2 = 1 - normalized variance; uniform variance means uniformly consistent."""
    variance = as_grid(variance, 'variance')
    if variance.min() < 0:
        raise ParameterError("variance map must be nonnegative")
    if variance.max() == variance.min():
        return np.ones(variance.shape, dtype=np.float64)
    return 1.0 - min_max_normalize(variance)


def combine_attention(a1, a2, cfg):
    same_shape(a1, a2, ('a1', 'a2'))
    return cfg.lambda_s * np.asarray(a1, dtype=np.float64) + cfg.lambda_c * np.asarray(a2, dtype=np.float64)


def soft_mask(attention, cfg):
    """Logistic thresholding M = 1 / (1 + exp(-k (A - tau)))."""
    attention = np.asarray(attention, dtype=np.float64)
    return expit(cfg.mask_steepness * (attention - cfg.mask_center))


def adaptive_weights(mask, cfg):
    """W = M alpha + (1 - M) beta, written as beta + M (alpha - beta)."""
    mask = np.asarray(mask, dtype=np.float64)
    return cfg.beta_low + mask * (cfg.alpha_low - cfg.beta_low)


def guidance_maps(radar, cfg):
    """Run the full intensity -> W_adapt chain for one radar image."""
    a1 = signal_strength_attention(radar)
    variance = local_variance(radar)
    a2 = consistency_attention(variance)
    attention = combine_attention(a1, a2, cfg)
    mask = soft_mask(attention, cfg)
    weights = adaptive_weights(mask, cfg)
    return GuidanceMaps(a1, variance, a2, attention, mask, weights)


def weight_map(radar, cfg):
    return guidance_maps(radar, cfg).weights
