"""Nonlinearities and loss with hand-written backward passes.

Activations are (features x tokens) matrices; softmax and layer norm act
per column. Softmax subtracts the column max before exponentiating.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=0, keepdims=True))
    return z / z.sum(axis=0, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    return p * (dp - (p * dp).sum(axis=0, keepdims=True))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x ** 3)))


def gelu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    th = np.tanh(inner)
    d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return dy * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * d_inner)


def tanh_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y ** 2)


def layernorm(x: np.ndarray, gain: np.ndarray, offset: np.ndarray):
    """Normalize each column to zero mean / unit variance, then affine.

    Returns (y, cache) where cache feeds layernorm_backward.
    """
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    xhat = xc * inv
    y = gain[:, None] * xhat + offset[:, None]
    return y, (xhat, inv)


def layernorm_backward(dy: np.ndarray, gain: np.ndarray, cache):
    xhat, inv = cache
    h = xhat.shape[0]
    dgain = (dy * xhat).sum(axis=1)
    doffset = dy.sum(axis=1)
    dxhat = dy * gain[:, None]
    dx = inv / h * (h * dxhat
                    - dxhat.sum(axis=0, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=0, keepdims=True))
    return dx, dgain, doffset


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over columns.

    Returns (loss, accuracy, dlogits); dlogits is already scaled by
    1/count so it seeds the backward pass directly.
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes, count = logits.shape
    if labels.shape != (count,):
        raise ValueError(f"expected {count} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"label out of range [0, {classes})")
    p = softmax(logits)
    picked = p[labels, np.arange(count)]
    loss = float(-np.log(np.maximum(picked, np.finfo(logits.dtype).tiny)).mean())
    acc = float((logits.argmax(axis=0) == labels).mean())
    dlogits = p.copy()
    dlogits[labels, np.arange(count)] -= 1.0
    dlogits /= logits.dtype.type(count)
    return loss, acc, dlogits
