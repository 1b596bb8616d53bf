"""Dense layers with hand-written reverse-mode gradients.

Every layer is a pair of functions ``forward(params, x) -> (out, cache)`` and
``backward(params, cache, dout) -> (dx, grads)``.  Keeping the cache outside the
layer lets one parameter set be applied several times in a single forward pass
(shared towers) without the applications clobbering each other.

Image tensors are NHWC throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..frames import ShapeMismatch


@dataclass
class Parameter:
    """A trainable array with its gradient and Adam moment accumulators."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0

    def astype(self, dtype) -> "Parameter":
        p = Parameter(self.value.astype(dtype))
        p.adam_m[...] = self.adam_m
        p.adam_v[...] = self.adam_v
        return p


# --- conv2d: 3x3 kernel, stride 1, zero padding 1 ------------------------------------


@numba.njit(cache=True)
def _im2col(x):
    n, h, w, c = x.shape
    cols = np.empty((n, h, w, 3, 3, c), dtype=x.dtype)
    for a in range(n):
        for i in range(h):
            for j in range(w):
                for di in range(3):
                    ii = i + di - 1
                    for dj in range(3):
                        jj = j + dj - 1
                        if ii < 0 or ii >= h or jj < 0 or jj >= w:
                            for k in range(c):
                                cols[a, i, j, di, dj, k] = 0
                        else:
                            for k in range(c):
                                cols[a, i, j, di, dj, k] = x[a, ii, jj, k]
    return cols.reshape(n * h * w, 9 * c)


@numba.njit(cache=True)
def _col2im(dcols):
    n, h, w, _, _, c = dcols.shape
    dx = np.zeros((n, h, w, c), dtype=dcols.dtype)
    for a in range(n):
        for i in range(h):
            for j in range(w):
                for di in range(3):
                    ii = i + di - 1
                    if ii < 0 or ii >= h:
                        continue
                    for dj in range(3):
                        jj = j + dj - 1
                        if jj < 0 or jj >= w:
                            continue
                        for k in range(c):
                            dx[a, ii, jj, k] += dcols[a, i, j, di, dj, k]
    return dx


def conv2d_forward(w, b, x):
    """``w`` has shape (out, in, 3, 3); ``x`` is (N, H, W, in)."""
    if x.ndim != 4 or x.shape[3] != w.shape[1]:
        raise ShapeMismatch(f"conv2d expects (N,H,W,{w.shape[1]}), got {x.shape}")
    n, h, wd, _ = x.shape
    cols = _im2col(np.ascontiguousarray(x))
    wm = w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)
    out = (cols @ wm.T + b).reshape(n, h, wd, w.shape[0])
    return out, (cols, x.shape)


def conv2d_backward(w, cache, dout, need_dx=True):
    cols, (n, h, wd, c) = cache
    o = w.shape[0]
    d2 = dout.reshape(-1, o)
    dw = (d2.T @ cols).reshape(o, 3, 3, c).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    wm = w.transpose(0, 2, 3, 1).reshape(o, -1)
    dcols = (d2 @ wm).reshape(n, h, wd, 3, 3, c)
    return _col2im(dcols), dw, db


# --- elementwise ---------------------------------------------------------------------


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(cache, dout):
    # subgradient at exactly 0 is 0
    return dout * (cache > 0)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(cache, dout):
    return dout * cache * (1 - cache)


# --- pooling -------------------------------------------------------------------------

_QUADS = ((0, 0), (0, 1), (1, 0), (1, 1))


def maxpool_forward(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"maxpool needs even spatial dims, got {x.shape}")
    quads = [x[:, i::2, j::2] for i, j in _QUADS]
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    # route the gradient to the first maximal element of each window only
    taken = np.zeros(out.shape, dtype=bool)
    masks = []
    for q in quads:
        m = (q == out) & ~taken
        taken |= m
        masks.append(m)
    return out, (masks, x.shape)


def maxpool_backward(cache, dout):
    masks, shape = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    for (i, j), m in zip(_QUADS, masks):
        dx[:, i::2, j::2] = dout * m
    return dx


def global_avg_pool_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(cache, dout):
    n, h, w, c = cache
    return np.broadcast_to(dout[:, None, None, :] / (h * w), cache).copy()


# --- linear --------------------------------------------------------------------------


def linear_forward(w, b, x):
    """``w`` has shape (in, out)."""
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear expects (N,{w.shape[0]}), got {x.shape}")
    return x @ w + b, x


def linear_backward(w, cache, dout):
    x = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


# --- loss ----------------------------------------------------------------------------


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy of ``sigmoid(logits)`` and its gradient wrt logits."""
    z = logits.reshape(-1)
    y = labels.reshape(-1).astype(z.dtype)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (sigmoid(z) - y) / z.size
    return float(loss.mean()), grad.reshape(logits.shape)
