"""Layer primitives for the descriptor network.

Tensors are plain numpy arrays in NHWC layout (dense layers take N x features).
Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. A single unbatched H x W x C input
is promoted to a batch of one and the output squeezed back.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import BatchTooSmall, EmptyOutput, ShapeMismatch


def _batched(x, rank):
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[np.newaxis], True
    if x.ndim != rank:
        raise ShapeMismatch(f"Expected a rank-{rank} tensor (or rank {rank - 1} unbatched), got shape {x.shape}")
    return x, False


# --------------------------------------------------------------------- conv2d

def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def conv2d_forward(x, weight, bias, stride=1, padding=0):
    """Zero-padded cross-correlation. ``weight`` is k x k x Cin x Cout."""
    x, squeezed = _batched(x, 4)
    weight = np.asarray(weight)
    if weight.ndim != 4 or weight.shape[0] != weight.shape[1]:
        raise ShapeMismatch(f"Kernel must be k x k x Cin x Cout, got {weight.shape}")
    k, _, cin, cout = weight.shape
    if x.shape[3] != cin:
        raise ShapeMismatch(f"Input has {x.shape[3]} channels, kernel expects {cin}")
    if np.shape(bias) != (cout,):
        raise ShapeMismatch(f"Bias must have shape ({cout},), got {np.shape(bias)}")
    if k < 1 or stride < 1 or padding < 0:
        raise ShapeMismatch(f"Invalid kernel {k}, stride {stride} or padding {padding}")
    n, h, w, _ = x.shape
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise EmptyOutput(f"{h}x{w} input with kernel {k}, stride {stride}, padding {padding} leaves no output")

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    # (N, Ho, Wo, Cin, k, k)
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    out = np.tensordot(windows, weight, axes=([3, 4, 5], [2, 0, 1])) + bias
    cache = (xp.shape, windows, weight, stride, padding, squeezed)
    return (out[0] if squeezed else out), cache


def conv2d_backward(dout, cache):
    xp_shape, windows, weight, stride, padding, squeezed = cache
    dout, _ = _batched(dout, 4)
    n, ho, wo, cout = dout.shape
    if windows.shape[:3] != (n, ho, wo) or weight.shape[3] != cout:
        raise ShapeMismatch(f"Upstream gradient {dout.shape} does not match the forward output")
    k = weight.shape[0]

    db = dout.sum(axis=(0, 1, 2))
    dw = np.tensordot(windows, dout, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    dxp = np.zeros(xp_shape, dtype=np.result_type(dout, weight))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += dout @ weight[i, j].T
    dx = dxp[:, padding:xp_shape[1] - padding, padding:xp_shape[2] - padding, :]
    return (dx[0] if squeezed else dx), dw, db


# ------------------------------------------------------------------ batchnorm

@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = Config.BN_MOMENTUM
    epsilon: float = Config.BN_EPSILON

    @classmethod
    def fresh(cls, channels, dtype=np.float32):
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype))


def batchnorm_forward(x, state, mode='train'):
    """Per-channel normalization over every axis but the last.

    Train mode uses batch statistics and moves the running statistics towards
    them (unbiased variance); eval mode reads the running statistics only.
    """
    x = np.asarray(x)
    if x.shape[-1] != state.gamma.shape[0]:
        raise ShapeMismatch(f"Input has {x.shape[-1]} channels, batch norm expects {state.gamma.shape[0]}")
    axes = tuple(range(x.ndim - 1))
    gamma, beta = state.gamma.astype(x.dtype), state.beta.astype(x.dtype)
    if mode == 'train':
        if x.shape[0] < 2:
            raise BatchTooSmall(f"Train-mode batch norm needs at least 2 samples, got {x.shape[0]}")
        m = int(np.prod([x.shape[a] for a in axes]))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state.running_mean[...] = state.momentum * state.running_mean + (1.0 - state.momentum) * mean
        state.running_var[...] = state.momentum * state.running_var + (1.0 - state.momentum) * var * m / max(m - 1, 1)
    elif mode == 'eval':
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (x - mean) * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma, mode, axes)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, mode, axes = cache
    dgamma = np.sum(dout * xhat, axis=axes)
    dbeta = np.sum(dout, axis=axes)
    dxhat = dout * gamma
    if mode == 'eval':
        return dxhat * inv_std, dgamma, dbeta
    m = xhat.size // xhat.shape[-1]
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * np.sum(dxhat * xhat, axis=axes))
    return dx, dgamma, dbeta


# --------------------------------------------------------------- elementwise

def relu_forward(x):
    x = np.asarray(x)
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


# ----------------------------------------------------------------- dense/FC

def fully_connected_forward(x, weight, bias):
    """``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    x, squeezed = _batched(x, 2)
    if weight.ndim != 2 or x.shape[1] != weight.shape[0] or np.shape(bias) != (weight.shape[1],):
        raise ShapeMismatch(f"Cannot apply weight {weight.shape} / bias {np.shape(bias)} to input {x.shape}")
    out = x @ weight + bias
    return (out[0] if squeezed else out), (x, weight, squeezed)


def fully_connected_backward(dout, cache):
    x, weight, squeezed = cache
    dout, _ = _batched(dout, 2)
    if dout.shape != (x.shape[0], weight.shape[1]):
        raise ShapeMismatch(f"Upstream gradient {dout.shape} does not match output {(x.shape[0], weight.shape[1])}")
    dx = dout @ weight.T
    return (dx[0] if squeezed else dx), x.T @ dout, dout.sum(axis=0)


# ------------------------------------------------------------ concat/flatten

def concat(a, b):
    """Join along the channel (last) axis."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeMismatch(f"Cannot concatenate {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=-1), a.shape[-1]


def concat_backward(dout, cache):
    return dout[..., :cache], dout[..., cache:]


def flatten(x):
    x = np.asarray(x)
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(dout, cache):
    return dout.reshape(cache)
