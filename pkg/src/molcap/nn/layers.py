"""Numpy layer primitives with explicit forward and backward passes.

Every forward function returns (output, cache); the matching backward
function consumes the upstream gradient plus that cache and returns the
input gradient together with any parameter gradients.  All operations
preserve the dtype of their inputs, so the same code runs in 64-bit
(gradient checks, deterministic tests) and 32-bit (fast training).

Convolutions and pooling use TensorFlow-style "same" padding: the
output side is ceil(input / stride) and any asymmetric padding puts the
extra row/column at the bottom/right.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatchError

__all__ = [
    "same_pad",
    "conv2d_forward",
    "conv2d_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "maxpool_forward",
    "maxpool_backward",
    "global_avg_pool_forward",
    "global_avg_pool_backward",
    "concat_forward",
    "concat_backward",
    "sigmoid",
    "bce_with_logits",
]


def same_pad(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """TF-style padding: (output size, pad before, pad after)."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return out, before, total - before


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int):
    view = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :oh, :ow]


# --------------------------------------------------------------------------
# Convolution


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1
) -> tuple[np.ndarray, tuple]:
    """Cross-correlate a NCHW batch with filters (F, C, kh, kw).

    Args:
        x: Input batch, shape (N, C, H, W).
        w: Filters, shape (F, C, kh, kw).
        b: Per-filter bias, shape (F,).
        stride: Step in both spatial directions.

    Returns:
        (output (N, F, ceil(H/stride), ceil(W/stride)), backward cache).

    Raises:
        ShapeMismatchError: Input channels disagree with the filters.
    """
    n, c, h, width = x.shape
    f, wc, kh, kw = w.shape
    if wc != c:
        raise ShapeMismatchError((n, wc, h, width), x.shape)
    oh, pbh, peh = same_pad(h, kh, stride)
    ow, pbw, pew = same_pad(width, kw, stride)
    padded = np.pad(x, ((0, 0), (0, 0), (pbh, peh), (pbw, pew)))
    patches = (
        _windows(padded, kh, kw, stride, oh, ow)
        .transpose(0, 2, 3, 1, 4, 5)
        .reshape(n * oh * ow, c * kh * kw)
    )
    out = patches @ w.reshape(f, -1).T + b
    y = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    cache = (patches, x.shape, padded.shape, w, stride, (oh, ow), (pbh, pbw))
    return y, cache


def conv2d_backward(
    dy: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward: returns (dx, dw, db)."""
    patches, x_shape, padded_shape, w, stride, (oh, ow), (pbh, pbw) = cache
    n, c, h, width = x_shape
    f, _, kh, kw = w.shape
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    dw = (dy_mat.T @ patches).reshape(w.shape)
    db = dy_mat.sum(axis=0)
    dpatches = (dy_mat @ w.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dpadded = np.zeros(padded_shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dpadded[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                dpatches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dpadded[:, :, pbh : pbh + h, pbw : pbw + width]
    return dx, dw, db


# --------------------------------------------------------------------------
# Dense


def dense_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Affine map of a (N, D) batch by (D, M) weights plus (M,) bias."""
    if x.shape[1] != w.shape[0]:
        raise ShapeMismatchError((x.shape[0], w.shape[0]), x.shape)
    return x @ w + b, (x, w)


def dense_backward(
    dy: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# --------------------------------------------------------------------------
# Activations and pooling


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


def maxpool_forward(
    x: np.ndarray, size: int = 3, stride: int = 2
) -> tuple[np.ndarray, tuple]:
    """Max pooling with same padding; ties resolve to the first cell."""
    n, c, h, w = x.shape
    oh, pbh, peh = same_pad(h, size, stride)
    ow, pbw, pew = same_pad(w, size, stride)
    padded = np.pad(
        x,
        ((0, 0), (0, 0), (pbh, peh), (pbw, pew)),
        constant_values=-np.inf,
    )
    flat = _windows(padded, size, size, stride, oh, ow).reshape(
        n, c, oh, ow, size * size
    )
    arg = flat.argmax(axis=4)
    out = np.take_along_axis(flat, arg[..., None], axis=4)[..., 0]
    cache = (x.shape, padded.shape, arg, size, stride, (oh, ow), (pbh, pbw))
    return out, cache


def maxpool_backward(dy: np.ndarray, cache: tuple) -> np.ndarray:
    x_shape, padded_shape, arg, size, stride, (oh, ow), (pbh, pbw) = cache
    n, c, h, w = x_shape
    dpadded = np.zeros(padded_shape, dtype=dy.dtype)
    rows = (np.arange(oh) * stride)[None, None, :, None] + arg // size
    cols = (np.arange(ow) * stride)[None, None, None, :] + arg % size
    batch = np.arange(n)[:, None, None, None]
    channel = np.arange(c)[None, :, None, None]
    np.add.at(dpadded, (batch, channel, rows, cols), dy)
    return dpadded[:, :, pbh : pbh + h, pbw : pbw + w]


def global_avg_pool_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Mean over the two spatial axes: (N, C, H, W) -> (N, C)."""
    return x.mean(axis=(2, 3)), x.shape


def global_avg_pool_backward(dy: np.ndarray, x_shape: tuple) -> np.ndarray:
    n, c, h, w = x_shape
    return np.broadcast_to(dy[:, :, None, None], x_shape) / np.asarray(
        h * w, dtype=dy.dtype
    )


def concat_forward(parts: list[np.ndarray]) -> tuple[np.ndarray, list[int]]:
    """Concatenate along axis 1, remembering the split widths."""
    return np.concatenate(parts, axis=1), [p.shape[1] for p in parts]


def concat_backward(dy: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    split_at = np.cumsum(widths)[:-1]
    return np.split(dy, split_at, axis=1)


# --------------------------------------------------------------------------
# Output head


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def bce_with_logits(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy straight from logits.

    Uses the softplus form max(z,0) - z*y + log1p(exp(-|z|)), which never
    exponentiates a positive number, so saturated predictions cannot
    overflow.

    Args:
        logits: Pre-sigmoid scores, shape (N, 1) or (N,).
        labels: Binary targets with the same number of elements.

    Returns:
        (scalar loss, gradient with respect to logits).
    """
    z = logits.reshape(-1)
    y = np.asarray(labels, dtype=z.dtype).reshape(-1)
    if z.shape != y.shape:
        raise ShapeMismatchError(z.shape, y.shape)
    per_example = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per_example.mean())
    dz = (sigmoid(z) - y) / z.size
    return loss, dz.reshape(logits.shape).astype(logits.dtype, copy=False)
