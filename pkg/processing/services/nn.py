"""Batched layer primitives with hand-written backward passes.

Feature maps are float64 arrays shaped (N, C, H, W). Each ``*_forward`` returns
``(out, cache)`` and the matching ``*_backward`` consumes the upstream gradient
and that cache.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

NORM_EPS = 1e-5


def sinusoidal_embedding(sigmas, dim, base=10000.0):
    """Rows [sin(log(s) w_0), cos(log(s) w_0), ...] with w_i = base^(-2i/dim)."""
    phase = np.log(np.asarray(sigmas, dtype=np.float64)).reshape(-1, 1)
    freqs = base ** (-2.0 * np.arange(dim // 2, dtype=np.float64) / dim)
    angles = phase * freqs
    emb = np.empty((phase.shape[0], dim), dtype=np.float64)
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return emb


# ---------------------------
# 3x3 convolution, zero padding, stride 1
# ---------------------------
def conv3x3_forward(x, kernel, bias):
    n, c, h, w = x.shape
    out_ch = kernel.shape[0]
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)
    out = cols @ kernel.reshape(out_ch, c * 9).T + bias
    out = out.reshape(n, h, w, out_ch).transpose(0, 3, 1, 2)
    return out, (cols, x.shape)


def conv3x3_backward(dout, cache, kernel):
    cols, (n, c, h, w) = cache
    out_ch = kernel.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(n * h * w, out_ch)
    dkernel = (dflat.T @ cols).reshape(kernel.shape)
    dbias = dflat.sum(axis=0)
    dcols = (dflat @ kernel.reshape(out_ch, c * 9)).reshape(n, h, w, c, 3, 3)
    dpadded = np.zeros((n, c, h + 2, w + 2), dtype=np.float64)
    for i in range(3):
        for j in range(3):
            dpadded[:, :, i:i + h, j:j + w] += dcols[..., i, j].transpose(0, 3, 1, 2)
    return dpadded[:, :, 1:-1, 1:-1], dkernel, dbias


# ---------------------------
# adaptive group normalization
# ---------------------------
def group_norm_forward(h, groups, eps=NORM_EPS):
    n, c = h.shape[:2]
    grouped = h.reshape(n, groups, -1)
    mu = grouped.mean(axis=-1, keepdims=True)
    var = grouped.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((grouped - mu) * inv_std).reshape(h.shape)
    return xhat, (xhat, inv_std, groups)


def group_norm_backward(dxhat, cache):
    xhat, inv_std, groups = cache
    n = dxhat.shape[0]
    dg = dxhat.reshape(n, groups, -1)
    xg = xhat.reshape(n, groups, -1)
    dx = inv_std * (dg - dg.mean(axis=-1, keepdims=True)
                    - xg * (dg * xg).mean(axis=-1, keepdims=True))
    return dx.reshape(dxhat.shape)


def adagn_forward(h, emb, w_gamma, b_gamma, w_beta, b_beta, groups):
    """gamma(e) * (h - mu) / sigma + beta(e), statistics per sample and group."""
    xhat, norm_cache = group_norm_forward(h, groups)
    gamma = emb @ w_gamma.T + b_gamma
    beta = emb @ w_beta.T + b_beta
    out = gamma[:, :, None, None] * xhat + beta[:, :, None, None]
    return out, (norm_cache, xhat, gamma, emb)


def adagn_backward(dout, cache):
    norm_cache, xhat, gamma, emb = cache
    dgamma = (dout * xhat).sum(axis=(2, 3))
    dbeta = dout.sum(axis=(2, 3))
    dh = group_norm_backward(dout * gamma[:, :, None, None], norm_cache)
    return dh, dgamma.T @ emb, dgamma.sum(axis=0), dbeta.T @ emb, dbeta.sum(axis=0)


# ---------------------------
# pointwise and resampling
# ---------------------------
def silu_forward(x):
    s = expit(x)
    return x * s, (x, s)


def silu_backward(dout, cache):
    x, s = cache
    return dout * (s + x * s * (1.0 - s))


def avg_pool2_forward(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avg_pool2_backward(dout):
    return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25


def upsample2_forward(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(dout):
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
