"""Dense numeric kernels: 2D convolution (forward/backward), batch norm,
dropout, fully connected, softmax cross-entropy, 2x2 max pooling.

Convolution uses the cross-correlation convention (no kernel flip) with
symmetric zero padding; out-of-bounds reads are zero. The fast path is
sliding-window views plus one BLAS matmul; `oracle.naive_conv2d` certifies it.
All functions are pure; callers own parameter state.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ConvSpec:
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(f"invalid conv spec: {self}")

    def out_size(self, h, w):
        oh, rh = divmod(h + 2 * self.padding - self.kernel_h, self.stride)
        ow, rw = divmod(w + 2 * self.padding - self.kernel_w, self.stride)
        if rh or rw or oh < 0 or ow < 0:
            raise ConfigError(
                f"non-integral output extent for input {h}x{w} with {self}"
            )
        return oh + 1, ow + 1


def _check_conv(x, w, spec):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (N,C,H,W), got {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv weights must be (F,C,kh,kw), got {w.shape}")
    f, c, kh, kw = w.shape
    if (kh, kw) != (spec.kernel_h, spec.kernel_w):
        raise ShapeError(f"weight kernel {kh}x{kw} does not match spec {spec.kernel_h}x{spec.kernel_w}")
    if c != x.shape[1] or c != spec.in_channels or f != spec.out_channels:
        raise ShapeError(
            f"channel mismatch: input C={x.shape[1]}, weights (F={f},C={c}), spec {spec}"
        )


def zero_pad2d(x, p):
    if p == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, :, p : p + h, p : p + w] = x
    return out


def _im2col(x, spec):
    """(N,C,Hp,Wp) -> (N*H'*W', C*kh*kw) patch matrix for the padded input."""
    n = x.shape[0]
    windows = sliding_window_view(x, (spec.kernel_h, spec.kernel_w), axis=(2, 3))
    windows = windows[:, :, :: spec.stride, :: spec.stride]
    hp, wp = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * hp * wp, -1)
    return np.ascontiguousarray(cols), hp, wp


def conv_patches(x, spec):
    """Patch matrix of the zero-padded input; reusable across conv calls that
    share the same input and spec (e.g. the real/imaginary filter pair)."""
    cols, _, _ = _im2col(zero_pad2d(x, spec.padding), spec)
    return cols


def conv2d_forward(x, w, spec, cols=None):
    """Cross-correlate x (N,C,H,W) with w (F,C,kh,kw) -> (N,F,H',W')."""
    _check_conv(x, w, spec)
    hp, wp = spec.out_size(x.shape[2], x.shape[3])
    if cols is None:
        cols = conv_patches(x, spec)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.reshape(x.shape[0], hp, wp, w.shape[0]).transpose(0, 3, 1, 2)


def conv2d_backward(grad_out, x, w, spec, cols=None, need_input_grad=True):
    """Exact gradients of conv2d_forward w.r.t. input and weights.

    `cols` lets a caller reuse the patch matrix from its own forward pass;
    `need_input_grad=False` skips the input gradient (first-layer case) and
    returns None in its place.
    """
    _check_conv(x, w, spec)
    hp, wp = spec.out_size(x.shape[2], x.shape[3])
    n, f = x.shape[0], w.shape[0]
    if grad_out.shape != (n, f, hp, wp):
        raise ShapeError(f"grad_out {grad_out.shape} != expected {(n, f, hp, wp)}")

    if cols is None:
        cols = conv_patches(x, spec)
    go = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1).reshape(n * hp * wp, f))

    grad_w = (go.T @ cols).reshape(w.shape)
    if not need_input_grad:
        return None, grad_w

    # One GEMM for the patch gradients, then scatter-add them back (col2im).
    grad_cols = go @ w.reshape(f, -1)
    grad_cols = grad_cols.reshape(n, hp, wp, x.shape[1], spec.kernel_h, spec.kernel_w)
    grad_xp = np.zeros(
        (n, x.shape[1], x.shape[2] + 2 * spec.padding, x.shape[3] + 2 * spec.padding),
        dtype=grad_cols.dtype,
    )
    s = spec.stride
    for i in range(spec.kernel_h):
        for j in range(spec.kernel_w):
            grad_xp[:, :, i : i + s * hp : s, j : j + s * wp : s] += grad_cols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    p = spec.padding
    if p:
        grad_x = grad_xp[:, :, p : p + x.shape[2], p : p + x.shape[3]]
    else:
        grad_x = grad_xp
    return grad_x, grad_w


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def batch_norm_forward(x, gamma, beta, eps=1e-5, mean=None, var=None):
    """Per-channel normalization of (N,C,H,W) inputs, then scale/shift.

    With mean/var omitted the batch statistics are used (training mode, needs
    N >= 2); passing them runs inference against stored statistics. Returns
    (out, cache); cache is None in inference mode.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch norm expects (N,C,H,W), got {x.shape}")
    training = mean is None
    if training:
        if x.shape[0] < 2:
            raise ShapeError("training-mode batch norm needs batch size >= 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv, gamma, mean, var) if training else None
    return out, cache


def batch_norm_backward(grad_out, cache):
    """Training-mode backward through the batch statistics."""
    xhat, inv, gamma, _, _ = cache
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    dgamma = np.sum(grad_out * xhat, axis=(0, 2, 3))
    dbeta = np.sum(grad_out, axis=(0, 2, 3))
    dxhat = grad_out * gamma[None, :, None, None]
    sum_dxhat = np.sum(dxhat, axis=(0, 2, 3), keepdims=True)
    sum_dxhat_x = np.sum(dxhat * xhat, axis=(0, 2, 3), keepdims=True)
    dx = (inv[None, :, None, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_x)
    return dx, dgamma, dbeta


def dropout(x, rate, rng, training=True):
    """Zero activations with probability `rate`, scale survivors by 1/(1-rate).

    Returns (out, mask); mask is None when inactive.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * mask / (1.0 - rate), mask


def dropout_backward(grad_out, mask, rate):
    if mask is None:
        return grad_out
    return grad_out * mask / (1.0 - rate)


def fully_connected_forward(x, w, b):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"fc shapes incompatible: x {x.shape}, w {w.shape}")
    return x @ w + b


def fully_connected_backward(grad_out, x, w):
    grad_x = grad_out @ w.T
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch. Returns (loss, probs)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ShapeError("label index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + 1e-30)))
    return loss, probs


def softmax_cross_entropy_backward(probs, labels):
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return grad / n


def maxpool2_forward(x):
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped.

    Returns (out, argmax) where argmax picks the first maximum in each window
    (deterministic tie-breaking), as flat indices into the 2x2 window.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects (N,C,H,W), got {x.shape}")
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xr = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
    xw = xr.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = np.argmax(xw, axis=-1)
    out = np.take_along_axis(xw, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(grad_out, x_shape, argmax):
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    gw = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(gw, argmax[..., None], grad_out[..., None], axis=-1)
    gx = np.zeros(x_shape, dtype=grad_out.dtype)
    gx[:, :, : h2 * 2, : w2 * 2] = (
        gw.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
    )
    return gx
