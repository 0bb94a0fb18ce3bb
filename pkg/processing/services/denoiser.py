"""Conditional residual denoiser f_theta([z, x], sigma).

A small encoder-decoder: 3x3 convolutions, average-pool downsampling,
nearest upsampling with additive skips, and residual blocks whose group
normalization is modulated by a sinusoidal embedding of log(sigma) (AdaGN).
Gradients are derived by hand; parameters live in one flat float64 vector so
they can be checked against finite differences and saved as-is.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..exceptions import ParameterError, TrainingError
from . import nn
from .grid import as_grid, same_shape

logger = logging.getLogger(__name__)

IN_CHANNELS = 2


@dataclass(frozen=True)
class DenoiserArch:
    depth: int = 2
    widths: tuple = (16, 32, 64)
    embed_dim: int = 32

    def validate(self):
        if self.depth < 0:
            raise ParameterError(f"depth must be >= 0, got {self.depth}")
        if len(self.widths) != self.depth + 1:
            raise ParameterError(
                f"need depth + 1 = {self.depth + 1} widths, got {len(self.widths)}")
        for width in self.widths:
            if width < 1 or width % group_count(width):
                raise ParameterError(f"width {width} is not divisible into AdaGN groups")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ParameterError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        return self

    @property
    def factor(self):
        return 2 ** self.depth


def group_count(channels):
    return min(8, channels)


def _norm_shapes(prefix, channels, dim):
    return [(f"{prefix}.wg", (channels, dim)), (f"{prefix}.bg", (channels,)),
            (f"{prefix}.wb", (channels, dim)), (f"{prefix}.bb", (channels,))]


def _conv_shapes(prefix, out_ch, in_ch):
    return [(f"{prefix}.k", (out_ch, in_ch, 3, 3)), (f"{prefix}.b", (out_ch,))]


def parameter_layout(arch):
    """Ordered (name, shape) list; this order defines the flat view."""
    w, d = arch.widths, arch.embed_dim
    shapes = _conv_shapes('conv_in', w[0], IN_CHANNELS)
    for level in range(arch.depth):
        shapes += _norm_shapes(f'down{level}.norm', w[level], d)
        shapes += _conv_shapes(f'down{level}.conv', w[level], w[level])
        shapes += _conv_shapes(f'down{level}.proj', w[level + 1], w[level])
    shapes += _norm_shapes('mid.norm', w[-1], d)
    shapes += _conv_shapes('mid.conv', w[-1], w[-1])
    for level in reversed(range(arch.depth)):
        shapes += _conv_shapes(f'up{level}.proj', w[level], w[level + 1])
        shapes += _norm_shapes(f'up{level}.norm', w[level], d)
        shapes += _conv_shapes(f'up{level}.conv', w[level], w[level])
    shapes += _norm_shapes('out.norm', w[0], d)
    shapes += _conv_shapes('out.conv', 1, w[0])
    return shapes


class DenoiserParams:
    """Named tensors that are views into one flat vector."""

    def __init__(self, arch, flat=None):
        self.arch = arch
        self.layout = OrderedDict()
        offset = 0
        for name, shape in parameter_layout(arch):
            size = int(np.prod(shape))
            self.layout[name] = (offset, shape)
            offset += size
        if flat is None:
            flat = np.zeros(offset, dtype=np.float64)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (offset,):
            raise ParameterError(f"expected {offset} parameters, got {flat.shape}")
        self.flat = flat

    def __getitem__(self, name):
        offset, shape = self.layout[name]
        return self.flat[offset:offset + int(np.prod(shape))].reshape(shape)

    def __len__(self):
        return self.flat.size

    def names(self):
        return list(self.layout)

    def index_of(self, position):
        """Map a flat position back to (tensor name, index within tensor)."""
        for name, (offset, shape) in self.layout.items():
            size = int(np.prod(shape))
            if offset <= position < offset + size:
                return name, np.unravel_index(position - offset, shape)
        raise IndexError(position)

    def zeros_like(self):
        return DenoiserParams(self.arch)

    def copy(self):
        return DenoiserParams(self.arch, self.flat.copy())

    def is_finite(self):
        return bool(np.all(np.isfinite(self.flat)))


def init_params(arch, seed=0, zero_head=True):
    """Fan-in uniform init; AdaGN starts at gamma ~ 1, beta ~ 0.

    With ``zero_head`` the output convolution starts at zero so the network
    initially predicts a zero residual.
    """
    arch.validate()
    rng = np.random.default_rng(seed)
    params = DenoiserParams(arch)
    for name, (_, shape) in params.layout.items():
        tensor = params[name]
        kind = name.rsplit('.', 1)[1]
        if kind == 'k':
            bound = 1.0 / np.sqrt(shape[1] * 9)
            tensor[...] = rng.uniform(-bound, bound, size=shape)
        elif kind in ('wg', 'wb'):
            bound = 0.5 / np.sqrt(shape[1])
            tensor[...] = rng.uniform(-bound, bound, size=shape)
        elif kind == 'bg':
            tensor[...] = 1.0
    if zero_head:
        params['out.conv.k'][...] = 0.0
        params['out.conv.b'][...] = 0.0
    return params


def embed_noise_level(sigma, dim):
    if dim < 2 or dim % 2:
        raise ParameterError(f"embedding dimension must be even, got {dim}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return nn.sinusoidal_embedding([sigma], dim)[0]


def adagn(h, emb, params, prefix):
    """AdaGN of a (N, C, H, W) feature map with the ``prefix`` gamma/beta heads."""
    out, _ = nn.adagn_forward(
        np.asarray(h, dtype=np.float64), np.atleast_2d(emb),
        params[f'{prefix}.wg'], params[f'{prefix}.bg'],
        params[f'{prefix}.wb'], params[f'{prefix}.bb'],
        group_count(h.shape[1]))
    return out


class UNetDenoiser:

    def __init__(self, arch):
        self.arch = arch.validate()

    # ---------------------------
    # residual block: h + conv(silu(adagn(h, e)))
    # ---------------------------
    def _block(self, params, prefix, h, emb, caches):
        normed, c_norm = nn.adagn_forward(
            h, emb, params[f'{prefix}.norm.wg'], params[f'{prefix}.norm.bg'],
            params[f'{prefix}.norm.wb'], params[f'{prefix}.norm.bb'],
            group_count(h.shape[1]))
        act, c_act = nn.silu_forward(normed)
        conv, c_conv = nn.conv3x3_forward(act, params[f'{prefix}.conv.k'], params[f'{prefix}.conv.b'])
        caches[prefix] = (c_norm, c_act, c_conv)
        return h + conv

    def _block_backward(self, params, prefix, dout, caches, grads):
        c_norm, c_act, c_conv = caches[prefix]
        dact, grads[f'{prefix}.conv.k'][...], grads[f'{prefix}.conv.b'][...] = \
            nn.conv3x3_backward(dout, c_conv, params[f'{prefix}.conv.k'])
        dnormed = nn.silu_backward(dact, c_act)
        dh, *head = nn.adagn_backward(dnormed, c_norm)
        for suffix, value in zip(('wg', 'bg', 'wb', 'bb'), head):
            grads[f'{prefix}.norm.{suffix}'][...] = value
        return dout + dh

    def _conv(self, params, prefix, h, caches):
        out, caches[prefix] = nn.conv3x3_forward(h, params[f'{prefix}.k'], params[f'{prefix}.b'])
        return out

    def _conv_backward(self, params, prefix, dout, caches, grads):
        dh, grads[f'{prefix}.k'][...], grads[f'{prefix}.b'][...] = \
            nn.conv3x3_backward(dout, caches[prefix], params[f'{prefix}.k'])
        return dh

    # ---------------------------
    # forward / backward over a batch
    # ---------------------------
    def forward(self, params, z, x, sigmas):
        """z, x: (N, H, W); sigmas: (N,). Returns (r_hat (N, H, W), cache)."""
        z = np.asarray(z, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        n, height, width = z.shape
        if height % self.arch.factor or width % self.arch.factor:
            raise ParameterError(
                f"grid {height}x{width} not divisible by 2^{self.arch.depth}")
        emb = np.stack([embed_noise_level(s, self.arch.embed_dim) for s in np.broadcast_to(sigmas, (n,))])
        caches = {}
        h = self._conv(params, 'conv_in', np.stack([z, x], axis=1), caches)
        skips = []
        for level in range(self.arch.depth):
            h = self._block(params, f'down{level}', h, emb, caches)
            skips.append(h)
            h = self._conv(params, f'down{level}.proj', nn.avg_pool2_forward(h), caches)
        h = self._block(params, 'mid', h, emb, caches)
        for level in reversed(range(self.arch.depth)):
            h = self._conv(params, f'up{level}.proj', nn.upsample2_forward(h), caches)
            h = self._block(params, f'up{level}', h + skips[level], emb, caches)
        normed, c_norm = nn.adagn_forward(
            h, emb, params['out.norm.wg'], params['out.norm.bg'],
            params['out.norm.wb'], params['out.norm.bb'], group_count(h.shape[1]))
        act, c_act = nn.silu_forward(normed)
        caches['out.norm'] = (c_norm, c_act)
        out = self._conv(params, 'out.conv', act, caches)
        return out[:, 0], caches

    def backward(self, params, caches, dout):
        """Gradient of sum(dout * r_hat) with respect to every parameter."""
        grads = params.zeros_like()
        d = self._conv_backward(params, 'out.conv', dout[:, None], caches, grads)
        c_norm, c_act = caches['out.norm']
        d, *head = nn.adagn_backward(nn.silu_backward(d, c_act), c_norm)
        for suffix, value in zip(('wg', 'bg', 'wb', 'bb'), head):
            grads[f'out.norm.{suffix}'][...] = value
        dskips = {}
        for level in range(self.arch.depth):
            d = self._block_backward(params, f'up{level}', d, caches, grads)
            dskips[level] = d
            d = nn.upsample2_backward(
                self._conv_backward(params, f'up{level}.proj', d, caches, grads))
        d = self._block_backward(params, 'mid', d, caches, grads)
        for level in reversed(range(self.arch.depth)):
            d = nn.avg_pool2_backward(
                self._conv_backward(params, f'down{level}.proj', d, caches, grads))
            d = self._block_backward(params, f'down{level}', d + dskips[level], caches, grads)
        self._conv_backward(params, 'conv_in', d, caches, grads)
        return grads


def denoise(params, z, x, sigma):
    """r_hat = f_theta([z, x], sigma) for a single Grid2D pair."""
    z = as_grid(z, 'z')
    x = as_grid(x, 'x')
    same_shape(z, x, ('z', 'x'))
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    r_hat, _ = UNetDenoiser(params.arch).forward(params, z[None], x[None], np.array([sigma]))
    return r_hat[0]


def as_denoiser_fn(params):
    """Wrap parameters as f(z, x, sigma) -> r_hat for the sampler."""
    net = UNetDenoiser(params.arch)

    def fn(z, x, sigma):
        r_hat, _ = net.forward(params, z[None], x[None], np.array([sigma]))
        return r_hat[0]
    return fn


def oracle_denoiser(mu, s):
    """Posterior mean for the prior r ~ N(mu, s^2 I) observed as z = r + sigma eps."""
    if s < 0:
        raise ParameterError(f"prior stddev must be >= 0, got {s}")
    mu = np.asarray(mu, dtype=np.float64)
    prior_var = float(s) ** 2

    def fn(z, x, sigma):
        noise_var = sigma * sigma
        if prior_var == 0.0:
            return np.broadcast_to(mu, np.shape(z)).copy()
        return (prior_var * np.asarray(z) + noise_var * mu) / (prior_var + noise_var)
    return fn


@dataclass
class TrainingBatch:
    z: np.ndarray
    x: np.ndarray
    sigmas: np.ndarray
    batch_id: int = 0


def backprop(params, batch, loss):
    """Forward the batch, evaluate ``loss(r_hat) -> (value, dvalue/dr_hat)``, backprop.

    Returns (loss value, gradient DenoiserParams aligned with ``params``).
    """
    net = UNetDenoiser(params.arch)
    r_hat, caches = net.forward(params, batch.z, batch.x, batch.sigmas)
    value, dr_hat = loss(r_hat)
    if not np.isfinite(value):
        raise TrainingError("non-finite loss", sigma=float(np.max(batch.sigmas)), batch_id=batch.batch_id)
    return value, net.backward(params, caches, dr_hat)
