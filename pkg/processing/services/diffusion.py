"""Residual construction, forward noising, training objectives and the training loop."""
import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import ParameterError, TrainingError
from .attention import GuidanceConfig, weight_map
from .denoiser import DenoiserArch, TrainingBatch, UNetDenoiser, backprop, init_params
from .grid import as_grid, same_shape
from .schedule import build_schedule, draw_timestep, karras_weight

logger = logging.getLogger(__name__)

MODES = ('direct', 'residual', 'r3d')
LOG_FIELDS = ('step', 't', 'sigma', 'loss', 'weighted_loss', 'mode', 'guided')


@dataclass(frozen=True)
class PairedSample:
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    frame_id: str = ''

    @classmethod
    def from_pair(cls, x, y, frame_id=''):
        x = as_grid(x, 'radar')
        y = as_grid(y, 'lidar')
        return cls(x, y, compute_residual(y, x), frame_id)


@dataclass(frozen=True)
class TrainConfig:
    rho: float = 7.0
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    num_steps: int = 18
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    arch: DenoiserArch = field(default_factory=DenoiserArch)
    batch_size: int = 4
    train_steps: int = 2000
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    w_max: float = 1e6
    grad_clip: float = 1.0
    log_every: int = 50

    def validate(self):
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.train_steps < 1:
            raise ParameterError(f"train_steps must be >= 1, got {self.train_steps}")
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        self.guidance.validate(self.sigma_min, self.sigma_max)
        self.arch.validate()
        return self

    def schedule(self):
        return build_schedule(self.rho, self.sigma_min, self.sigma_max, self.num_steps)


@dataclass(frozen=True)
class TrainLogRow:
    step: int
    t: int
    sigma: float
    loss: float
    weighted_loss: float
    mode: str
    guided: bool


def compute_residual(y, x):
    same_shape(y, x, ('lidar', 'radar'))
    return np.asarray(y, dtype=np.float64) - np.asarray(x, dtype=np.float64)


def forward_noise(r, sigma, eps):
    """z = r + sigma * eps."""
    same_shape(r, eps, ('residual', 'eps'))
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    return np.asarray(r, dtype=np.float64) + sigma * np.asarray(eps, dtype=np.float64)


def _loss_weight(sigma, w_max=None):
    weight = karras_weight(sigma)
    return weight if w_max is None else min(weight, w_max)


def residual_loss(r_hat, r, sigma, w_max=None):
    """w(sigma) * mean((r - r_hat)^2)."""
    return residual_loss_and_grad(r_hat, r, sigma, w_max)[0]


def residual_loss_and_grad(r_hat, r, sigma, w_max=None):
    same_shape(r_hat, r, ('r_hat', 'r'))
    weight = _loss_weight(sigma, w_max)
    diff = np.asarray(r_hat, dtype=np.float64) - np.asarray(r, dtype=np.float64)
    value = weight * np.mean(diff * diff)
    grad = 2.0 * weight / diff.size * diff
    return value, grad


def r3d_loss(r_hat, r, sigma, w_adapt, cfg, w_max=None):
    """Plain weighted loss above sigma_threshold; W_adapt-weighted at or below it."""
    return r3d_loss_and_grad(r_hat, r, sigma, w_adapt, cfg, w_max)[0]


def r3d_loss_and_grad(r_hat, r, sigma, w_adapt, cfg, w_max=None):
    if sigma > cfg.sigma_threshold:
        return residual_loss_and_grad(r_hat, r, sigma, w_max)
    same_shape(r_hat, r, ('r_hat', 'r'))
    weight = _loss_weight(sigma, w_max)
    diff = np.asarray(r_hat, dtype=np.float64) - np.asarray(r, dtype=np.float64)
    w_adapt = np.broadcast_to(np.asarray(w_adapt, dtype=np.float64), diff.shape)
    weighted = w_adapt * diff
    value = weight * np.mean(weighted * weighted)
    grad = 2.0 * weight / diff.size * (w_adapt * weighted)
    return value, grad


def _stack(dataset, mode, guidance):
    radar = np.stack([sample.x for sample in dataset])
    targets = np.stack([sample.y if mode == 'direct' else sample.r for sample in dataset])
    weights = None
    if mode == 'r3d':
        # W_adapt depends on the radar image only; computed once per sample
        weights = np.stack([weight_map(sample.x, guidance) for sample in dataset])
    return radar, targets, weights


class BatchLoss:
    """Loss callable for ``backprop``; remembers the unweighted MSE of its last call."""

    def __init__(self, mode, targets, weights, sigma, cfg):
        self.mode = mode
        self.targets = targets
        self.weights = weights
        self.sigma = sigma
        self.cfg = cfg
        self.guided = mode == 'r3d' and sigma <= cfg.guidance.sigma_threshold
        self.raw_loss = float('nan')

    def __call__(self, r_hat):
        diff = r_hat - self.targets
        self.raw_loss = float(np.mean(diff * diff))
        if self.mode == 'r3d':
            return r3d_loss_and_grad(r_hat, self.targets, self.sigma, self.weights,
                                     self.cfg.guidance, self.cfg.w_max)
        return residual_loss_and_grad(r_hat, self.targets, self.sigma, self.cfg.w_max)


def train(dataset, cfg, mode='residual', progress=None):
    """Momentum gradient descent on the chosen objective.

    mode: 'direct' regresses the LiDAR image y, 'residual' the residual r with the
    plain weighted loss, 'r3d' the residual with sigma-adaptive regional weighting.
    Returns (DenoiserParams, list of TrainLogRow).
    """
    if mode not in MODES:
        raise ParameterError(f"unknown training mode {mode!r}, expected one of {MODES}")
    if not dataset:
        raise ParameterError("training dataset is empty")
    cfg.validate()
    schedule = cfg.schedule()
    radar, targets, weights = _stack(dataset, mode, cfg.guidance)
    logger.info(f"Training {mode} denoiser on {len(dataset)} samples "
                f"({radar.shape[1]}x{radar.shape[2]}), {cfg.train_steps} steps, batch {cfg.batch_size}")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.arch, seed=cfg.seed)
    velocity = np.zeros_like(params.flat)
    log = []
    start = time.time()

    for step in range(cfg.train_steps):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        t, sigma = draw_timestep(rng, schedule)
        batch_targets = targets[idx]
        eps = rng.standard_normal(batch_targets.shape)
        z = forward_noise(batch_targets, sigma, eps)
        loss = BatchLoss(mode, batch_targets, None if weights is None else weights[idx], sigma, cfg)
        batch = TrainingBatch(z, radar[idx], np.full(cfg.batch_size, sigma), batch_id=step)
        weighted_loss, grads = backprop(params, batch, loss)

        grad = grads.flat
        if cfg.grad_clip > 0:
            norm = float(np.linalg.norm(grad))
            if norm > cfg.grad_clip:
                grad = grad * (cfg.grad_clip / norm)
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad
        params.flat += velocity
        if not params.is_finite():
            raise TrainingError("parameters became non-finite", sigma=sigma, batch_id=step)

        row = TrainLogRow(step, t, float(sigma), loss.raw_loss, float(weighted_loss), mode, loss.guided)
        log.append(row)
        if progress is not None:
            progress(step, row)
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.train_steps - 1):
            logger.info(f"step {step}/{cfg.train_steps} sigma={sigma:.4g} weighted_loss={weighted_loss:.6g}")

    logger.info(f"Training finished in {time.time() - start:.1f}s")
    return params, log


def evaluate_objective(params, dataset, cfg, mode='residual', seed=0):
    """Mean training objective over every schedule level with fixed noise draws."""
    schedule = cfg.schedule()
    radar, targets, weights = _stack(dataset, mode, cfg.guidance)
    net = UNetDenoiser(params.arch)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((schedule.num_steps,) + targets.shape)
    total = 0.0
    for t in range(schedule.num_steps):
        sigma = schedule[t]
        r_hat, _ = net.forward(params, forward_noise(targets, sigma, eps[t]), radar,
                               np.full(len(dataset), sigma))
        value, _ = BatchLoss(mode, targets, weights, sigma, cfg)(r_hat)
        total += value
    return total / schedule.num_steps


def write_training_log(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for row in rows:
            writer.writerow([row.step, row.t, repr(row.sigma), repr(row.loss),
                             repr(row.weighted_loss), row.mode, int(row.guided)])
    return path
