"""Analytic-oracle checks run by the ``selftest`` command and the test suite.

Each check returns a CheckResult; none of them raises on a failed comparison.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np

from .attention import GuidanceConfig
from .denoiser import DenoiserArch, TrainingBatch, UNetDenoiser, backprop, init_params, oracle_denoiser
from .diffusion import r3d_loss, residual_loss
from .metrics import chamfer, evaluate_points, hausdorff
from .radar import os_cfar_threshold, os_cfar_threshold_brute
from .sampler import SamplerConfig, heun_sample, reference_integrate
from .schedule import build_schedule

logger = logging.getLogger(__name__)

TEST_ARCH = DenoiserArch(depth=1, widths=(4, 8), embed_dim=8)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name, fn):
    start = time.time()
    passed, detail = fn()
    result = CheckResult(name, bool(passed), detail, time.time() - start)
    logger.debug(f"{name}: {'PASS' if result.passed else 'FAIL'} {detail}")
    return result


# ---------------------------
# schedule
# ---------------------------
def schedule_endpoints(steps=(2, 18, 1000), rhos=(1.0, 3.0, 7.0, 12.0)):
    worst = 0.0
    monotone = True
    for t in steps:
        sigmas = build_schedule(7.0, 0.002, 80.0, t).sigmas
        worst = max(worst, abs(sigmas[0] - 80.0) / 80.0, abs(sigmas[-1] - 0.002) / 0.002)
    for rho in rhos:
        for t in (2, 5, 18, 100, 1000):
            monotone &= bool(np.all(np.diff(build_schedule(rho, 0.002, 80.0, t).sigmas) < 0))
    return worst <= 1e-12 and monotone, f"endpoint rel err {worst:.3g}, monotone={monotone}"


# ---------------------------
# sampler
# ---------------------------
def constant_oracle(r_star):
    r_star = np.asarray(r_star, dtype=np.float64)

    def fn(z, x, sigma):
        return r_star
    return fn


def sampler_exactness(seeds=100, size=64):
    """A denoiser that always answers r* drives the sampler to x + r* exactly."""
    schedule = build_schedule()
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(10_000 + seed)
        x = rng.random((size, size))
        r_star = rng.standard_normal((size, size)) * 0.1
        result = heun_sample(constant_oracle(r_star), x, SamplerConfig(schedule, seed, terminal_step=True))
        worst = max(worst, float(np.max(np.abs(result.enhanced - (x + r_star)))))
    return worst < 1e-9, f"max |y_hat - (x + r*)| = {worst:.3g} over {seeds} seeds"


def gaussian_solution(z_init, mu, s, sigma_from, sigma_to):
    """Exact probability-flow solution for the prior N(mu, s^2)."""
    scale = np.sqrt((s * s + sigma_to ** 2) / (s * s + sigma_from ** 2))
    return mu + (np.asarray(z_init) - mu) * scale


def heun_error(steps, z_init, mu, s=1.0, rho=7.0, sigma_min=0.002, sigma_max=80.0):
    schedule = build_schedule(rho, sigma_min, sigma_max, steps)
    x = np.zeros_like(z_init)
    z = heun_sample(oracle_denoiser(mu, s), x, SamplerConfig(schedule), z_init=z_init, fuse=False).z0
    exact = gaussian_solution(z_init, mu, s, sigma_max, sigma_min)
    return float(np.max(np.abs(z - exact)))


def sampler_order(size=16, seed=3):
    """Halving the step size cuts the Heun error by about 2^2."""
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal((size, size)) * 0.5
    z_init = rng.standard_normal((size, size)) * 80.0
    coarse = heun_error(18, z_init, mu)
    fine = heun_error(36, z_init, mu)
    ratio = coarse / fine if fine > 0 else float('inf')
    return 3.0 <= ratio <= 5.0, f"error T=18 {coarse:.3g}, T=36 {fine:.3g}, ratio {ratio:.2f}"


def reference_agreement(size=8, seed=4, n_steps=10_000):
    """The dense Euler reference lands near the exact solution."""
    rng = np.random.default_rng(seed)
    mu = rng.standard_normal((size, size)) * 0.5
    z_init = rng.standard_normal((size, size)) * 80.0
    z = reference_integrate(oracle_denoiser(mu, 1.0), np.zeros_like(mu), z_init, 7.0, 0.002, 80.0, n_steps)
    err = float(np.max(np.abs(z - gaussian_solution(z_init, mu, 1.0, 80.0, 0.002))))
    return err < 1e-2, f"Euler reference error {err:.3g}"


# ---------------------------
# denoiser gradients
# ---------------------------
def gradient_check(arch=TEST_ARCH, size=16, batch=2, eps=1e-6, floor=1e-6, tol=1e-4, seed=0):
    """Every analytic gradient against central finite differences.

    Relative error is |a - n| / max(|a|, |n|, floor).
    Returns (worst relative error, parameter name where it occurs).
    """
    rng = np.random.default_rng(seed)
    params = init_params(arch, seed=seed, zero_head=False)
    z = rng.standard_normal((batch, size, size))
    x = rng.random((batch, size, size))
    sigmas = np.array([0.5, 3.0][:batch] + [1.0] * max(0, batch - 2))
    direction = rng.standard_normal((batch, size, size))
    net = UNetDenoiser(arch)

    def objective(r_hat):
        return float(np.mean(r_hat * direction)), direction / direction.size

    _, grads = backprop(params, TrainingBatch(z, x, sigmas), objective)
    worst, worst_at = 0.0, ''
    for i in range(len(params)):
        saved = params.flat[i]
        params.flat[i] = saved + eps
        up = objective(net.forward(params, z, x, sigmas)[0])[0]
        params.flat[i] = saved - eps
        down = objective(net.forward(params, z, x, sigmas)[0])[0]
        params.flat[i] = saved
        numeric = (up - down) / (2 * eps)
        analytic = grads.flat[i]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        if rel > worst:
            worst, worst_at = rel, params.index_of(i)
    return worst, worst_at


def gradients():
    worst, where = gradient_check()
    return worst < 1e-4, f"worst relative error {worst:.3g} at {where} over {len(init_params(TEST_ARCH))} parameters"


# ---------------------------
# losses
# ---------------------------
def loss_identities(seed=0, size=16):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((size, size))
    r_hat = rng.standard_normal((size, size))
    cfg = GuidanceConfig()
    ones = np.ones_like(r)
    twos = np.full_like(r, 2.0)
    checks = {
        'above threshold': r3d_loss(r_hat, r, 5.0, rng.random(r.shape) + 1, cfg) == residual_loss(r_hat, r, 5.0),
        'unit weights': r3d_loss(r_hat, r, 0.1, ones, cfg) == residual_loss(r_hat, r, 0.1),
        'weights of two': r3d_loss(r_hat, r, 0.1, twos, cfg) == 4.0 * residual_loss(r_hat, r, 0.1),
    }
    failed = [name for name, ok in checks.items() if not ok]
    return not failed, 'bit-exact' if not failed else f"failed: {', '.join(failed)}"


# ---------------------------
# metrics and CFAR
# ---------------------------
def random_point_sets(rng, max_points=512, extent=64):
    n_p, n_q = rng.integers(1, max_points + 1, size=2)
    return (rng.integers(0, extent, size=(n_p, 2)).astype(np.float64),
            rng.integers(0, extent, size=(n_q, 2)).astype(np.float64))


def metric_equivalence(instances=1000, seed=0):
    """KD-tree metrics equal the O(n^2) versions exactly."""
    rng = np.random.default_rng(seed)
    for i in range(instances):
        p, q = random_point_sets(rng)
        fast = evaluate_points(p, q)
        slow = evaluate_points(p, q, brute=True)
        if fast != slow:
            return False, f"instance {i} differs: {fast} vs {slow}"
    a, b = np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])
    if not (chamfer(a, b) == hausdorff(a, b) == 5.0):
        return False, "singleton distance is not Euclidean"
    return True, f"{instances} instances identical"


def cfar_equivalence(size=64, seed=0, guard=2, train=4):
    rng = np.random.default_rng(seed)
    power = rng.exponential(size=(size, size))
    k = -(-3 * ((2 * (guard + train) + 1) ** 2 - (2 * guard + 1) ** 2) // 4)
    fast = os_cfar_threshold(power, guard, train, k)
    slow = os_cfar_threshold_brute(power, guard, train, k)
    same = np.array_equal(fast, slow)
    return same, f"{size}x{size} order statistics {'identical' if same else 'differ'}"


SUITES = (
    ('schedule', schedule_endpoints),
    ('sampler exactness', sampler_exactness),
    ('sampler order', sampler_order),
    ('euler reference', reference_agreement),
    ('gradient check', gradients),
    ('loss identities', loss_identities),
    ('metric equivalence', metric_equivalence),
    ('cfar equivalence', cfar_equivalence),
)


def run_suites(names=None):
    selected = [(name, fn) for name, fn in SUITES if names is None or name in names]
    return [_timed(name, fn) for name, fn in selected]
