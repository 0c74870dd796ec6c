"""Dense numeric kernels and their backward passes.

Layout conventions:

* sequences are ``T x D`` arrays (time major);
* 1-D conv weights are ``(taps, D_in, D_out)``, tap ``i`` reading the input
  at ``t + context[i] * dilation``;
* 2-D conv inputs are ``(C, H, T)`` stacks and weights ``(C_out, C_in, 3, 3)``.

Everything zero-pads at the edges so sequence length is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LayerParams:
    weights: np.ndarray
    bias: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.weights.size + (0 if self.bias is None else self.bias.size)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _shift(x: np.ndarray, offset: int) -> np.ndarray:
    """``out[t] = x[t + offset]`` with zeros outside the sequence."""
    T = x.shape[0]
    out = np.zeros_like(x)
    if offset >= 0:
        if offset < T:
            out[:T - offset] = x[offset:]
    elif -offset < T:
        out[-offset:] = x[:T + offset]
    return out


def _check_conv1d(x, params, dilation, context):
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a T x D input with T >= 1, got shape {x.shape}")
    w = params.weights
    expected = (len(context), x.shape[1])
    if w.ndim != 3 or w.shape[:2] != expected:
        raise ValueError(f"conv1d weights: expected leading shape {expected}, got {w.shape}")
    if params.bias is not None and params.bias.shape != (w.shape[2],):
        raise ValueError(f"conv1d bias: expected ({w.shape[2]},), got {params.bias.shape}")


def conv1d_dilated(x: np.ndarray, params: LayerParams, dilation: int = 1,
                   context=(-1, 0, 1)) -> np.ndarray:
    _check_conv1d(x, params, dilation, context)
    y = np.zeros((x.shape[0], params.weights.shape[2]))
    for i, c in enumerate(context):
        y += _shift(x, c * dilation) @ params.weights[i]
    if params.bias is not None:
        y += params.bias
    return y


def conv1d_dilated_backward(x, params: LayerParams, dilation, context, grad_y):
    """Returns ``(grad_x, grad_weights, grad_bias)``."""
    grad_x = np.zeros_like(x)
    grad_w = np.empty_like(params.weights)
    for i, c in enumerate(context):
        off = c * dilation
        grad_w[i] = _shift(x, off).T @ grad_y
        grad_x += _shift(grad_y @ params.weights[i].T, -off)
    grad_b = None if params.bias is None else grad_y.sum(axis=0)
    return grad_x, grad_w, grad_b


def _im2col(x: np.ndarray, rows: slice) -> np.ndarray:
    C, H, T = x.shape
    padded = np.zeros((C, H + 2, T + 2))
    padded[:, 1:-1, 1:-1] = x
    cols = np.empty((C, 3, 3, H, T))
    for dh in range(3):
        for dt in range(3):
            cols[:, dh, dt] = padded[:, dh:dh + H, dt:dt + T]
    return cols[:, :, :, rows, :]


def conv2d_3x3(x: np.ndarray, params: LayerParams, subsample_height: bool = False) -> np.ndarray:
    """Zero-padded 3x3 convolution over (height, time); optional stride 2 on height."""
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"expected a (C, H, T) stack, got shape {x.shape}")
    w = params.weights
    if w.ndim != 4 or w.shape[1:] != (x.shape[0], 3, 3):
        raise ValueError(f"conv2d weights: expected (C_out, {x.shape[0]}, 3, 3), got {w.shape}")
    rows = slice(None, None, 2 if subsample_height else 1)
    cols = _im2col(x, rows)
    c_out = w.shape[0]
    h_out, T = cols.shape[3], cols.shape[4]
    y = w.reshape(c_out, -1) @ cols.reshape(-1, h_out * T)
    if params.bias is not None:
        y += params.bias[:, None]
    return y.reshape(c_out, h_out, T)


def conv2d_3x3_backward(x, params: LayerParams, subsample_height, grad_y):
    C, H, T = x.shape
    w = params.weights
    c_out = w.shape[0]
    step = 2 if subsample_height else 1
    cols = _im2col(x, slice(None, None, step))
    h_out = cols.shape[3]
    g = grad_y.reshape(c_out, h_out * T)
    grad_w = (g @ cols.reshape(-1, h_out * T).T).reshape(w.shape)
    grad_b = None if params.bias is None else g.sum(axis=1)
    gcols = (w.reshape(c_out, -1).T @ g).reshape(C, 3, 3, h_out, T)
    padded = np.zeros((C, H + 2, T + 2))
    for dh in range(3):
        for dt in range(3):
            padded[:, dh:dh + H:step, dt:dt + T] += gcols[:, dh, dt]
    return padded[:, 1:-1, 1:-1], grad_w, grad_b


def affine_relu(x: np.ndarray, params: LayerParams, apply_relu: bool = True) -> np.ndarray:
    w = params.weights
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"affine: input {x.shape} does not match weights {w.shape}")
    y = x @ w
    if params.bias is not None:
        y = y + params.bias
    return np.maximum(y, 0.0) if apply_relu else y


def affine_backward(x, params: LayerParams, grad_y):
    """Backward of the linear part only; apply :func:`relu_backward` first."""
    grad_b = None if params.bias is None else grad_y.sum(axis=0)
    return grad_y @ params.weights.T, x.T @ grad_y, grad_b


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(y, grad_y):
    """Gradient through ReLU given its output ``y``."""
    return grad_y * (y > 0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def orthonormality_error(m: np.ndarray) -> float:
    """``||M M^T / alpha - I||_F`` with ``alpha = tr(PP^T) / tr(P)``, ``P = M M^T``."""
    p = m @ m.T
    alpha = np.trace(p @ p.T) / np.trace(p)
    return float(np.linalg.norm(p / alpha - np.eye(p.shape[0])))


def semi_orthogonal_step(m: np.ndarray) -> np.ndarray:
    """One floating-scale update pulling the rows of ``m`` toward a scaled orthonormal set.

    ``M <- M - (1 / (2 alpha)) (M M^T - alpha I) M``; normalizing the step by
    ``alpha`` keeps the update stable for any overall scale of ``M``.
    """
    if m.ndim != 2 or m.shape[0] > m.shape[1]:
        raise ValueError(f"factor must be wide (rows <= cols), got {m.shape}")
    p = m @ m.T
    tr = np.trace(p)
    if tr <= 0.0:
        raise ValueError("degenerate factor")
    alpha = np.trace(p @ p.T) / tr
    return m - (0.5 / alpha) * (p - alpha * np.eye(p.shape[0])) @ m
