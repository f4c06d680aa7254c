"""Layer objects wiring the functional kernels into a trainable graph.

Each layer caches whatever its backward pass needs during forward, exposes
`params` and `grads` dicts of same-keyed arrays, and is owned by a single
training thread. Gradients accumulate nowhere: backward overwrites.
"""

import math

import numpy as np

from . import ops, phase_layer
from .errors import ConfigError


class Layer:
    kind = "layer"
    needs_input_grad = True

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, training=True):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError


class ConvLayer(Layer):
    """Trunk convolution with bias and floor output semantics: the padded
    input is cropped so the strided output extent is integral (rows/columns a
    partial window would need are ignored, as in standard frameworks)."""

    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=None,
                 rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.padding = kernel // 2 if padding is None else padding
        self.spec = ops.ConvSpec(kernel, kernel, stride, 0, in_channels, out_channels)
        std = math.sqrt(2.0 / (in_channels * kernel * kernel))
        self.params["w"] = (std * rng.standard_normal(
            (out_channels, in_channels, kernel, kernel))).astype(dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)
        self._x = None

    def out_size(self, h, w):
        k, s, p = self.spec.kernel_h, self.spec.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def _cropped_pad(self, x):
        xp = ops.zero_pad2d(x, self.padding)
        oh, ow = self.out_size(x.shape[2], x.shape[3])
        k, s = self.spec.kernel_h, self.spec.stride
        return xp[:, :, : (oh - 1) * s + k, : (ow - 1) * s + k]

    def forward(self, x, training=True):
        self._x = x
        self._xp = self._cropped_pad(x)
        self._cols = ops.conv_patches(self._xp, self.spec)
        out = ops.conv2d_forward(self._xp, self.params["w"], self.spec, cols=self._cols)
        return out + self.params["b"][None, :, None, None]

    def backward(self, grad_out):
        grad_xp, grad_w = ops.conv2d_backward(
            grad_out, self._xp, self.params["w"], self.spec,
            cols=self._cols, need_input_grad=self.needs_input_grad,
        )
        self.grads["w"] = grad_w
        self.grads["b"] = grad_out.sum(axis=(0, 2, 3))
        if not self.needs_input_grad:
            return None
        n, c, h, w = self._x.shape
        p = self.padding
        full = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad_xp.dtype)
        full[:, :, : grad_xp.shape[2], : grad_xp.shape[3]] = grad_xp
        return full[:, :, p : p + h, p : p + w] if p else full


class ReLULayer(Layer):
    kind = "relu"

    def forward(self, x, training=True):
        self._x = x
        return ops.relu(x)

    def backward(self, grad_out):
        return ops.relu_backward(grad_out, self._x)


class MaxPoolLayer(Layer):
    kind = "maxpool"

    def forward(self, x, training=True):
        self._shape = x.shape
        out, self._argmax = ops.maxpool2_forward(x)
        return out

    def backward(self, grad_out):
        return ops.maxpool2_backward(grad_out, self._shape, self._argmax)


class FlattenLayer(Layer):
    kind = "flatten"

    def forward(self, x, training=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class DenseLayer(Layer):
    kind = "fc"

    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        std = math.sqrt(2.0 / n_in)
        self.params["w"] = (std * rng.standard_normal((n_in, n_out))).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, training=True):
        self._x = x
        return ops.fully_connected_forward(x, self.params["w"], self.params["b"])

    def backward(self, grad_out):
        grad_x, gw, gb = ops.fully_connected_backward(grad_out, self._x, self.params["w"])
        self.grads["w"] = gw
        self.grads["b"] = gb
        return grad_x


class DropoutLayer(Layer):
    kind = "dropout"

    def __init__(self, rate, rng):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x, training=True):
        out, self._mask = ops.dropout(x, self.rate, self.rng, training)
        return out

    def backward(self, grad_out):
        return ops.dropout_backward(grad_out, self._mask, self.rate)


class BatchNormLayer(Layer):
    kind = "bn"

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, training=True):
        if training:
            out, self._cache = ops.batch_norm_forward(
                x, self.params["gamma"], self.params["beta"], eps=self.eps)
            _, _, _, mean, var = self._cache
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(x.dtype)
            self.running_var = ((1 - m) * self.running_var + m * var).astype(x.dtype)
        else:
            out, self._cache = ops.batch_norm_forward(
                x, self.params["gamma"], self.params["beta"], eps=self.eps,
                mean=self.running_mean, var=self.running_var)
        return out

    def backward(self, grad_out):
        grad_x, dgamma, dbeta = ops.batch_norm_backward(grad_out, self._cache)
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        return grad_x


class PhaseFrontEnd(Layer):
    """Complex conv -> CReLU -> per-part batch norm -> arctangent phase.

    The imaginary filters' free weights are the only front-end conv parameter;
    the batch-norm scale/shift of the real and imaginary parts have their own
    statistics. A frozen front end (fixed filter bank) exposes only the norm
    parameters.
    """

    kind = "phase_front"

    def __init__(self, clayer, eps=1e-8, bn_momentum=0.1, dtype=np.float32):
        super().__init__()
        self.clayer = clayer
        self.eps = eps
        self.bn_real = BatchNormLayer(clayer.filters, momentum=bn_momentum, dtype=dtype)
        self.bn_imag = BatchNormLayer(clayer.filters, momentum=bn_momentum, dtype=dtype)
        self._rebind()

    def _rebind(self):
        self.params = {}
        if not self.clayer.frozen:
            self.params["u"] = self.clayer.free_weights
        for part, bn in (("bn_real", self.bn_real), ("bn_imag", self.bn_imag)):
            for k, v in bn.params.items():
                self.params[f"{part}.{k}"] = v

    def forward(self, x, training=True):
        self._x = x
        self._cols = ops.conv_patches(x, self.clayer.spec)
        resp = phase_layer.complex_conv_forward(x, self.clayer, cols=self._cols)
        self._pre = (resp.real_resp, resp.imag_resp)
        r1, i1 = phase_layer.crelu(resp.real_resp, resp.imag_resp)
        r2 = self.bn_real.forward(r1, training)
        i2 = self.bn_imag.forward(i1, training)
        self._post_bn = (r2, i2)
        return phase_layer.extract_phase(r2, i2, self.eps)

    def backward(self, grad_out):
        r2, i2 = self._post_bn
        g_r2, g_i2 = phase_layer.extract_phase_backward(grad_out, r2, i2, self.eps)
        g_r1 = self.bn_real.backward(g_r2)
        g_i1 = self.bn_imag.backward(g_i2)
        g_r0, g_i0 = phase_layer.crelu_backward(g_r1, g_i1, *self._pre)
        grad_x, grad_u = phase_layer.complex_conv_backward(
            g_r0, g_i0, self._x, self.clayer,
            cols=self._cols, need_input_grad=self.needs_input_grad,
        )
        self.grads = {}
        if grad_u is not None:
            self.grads["u"] = grad_u.astype(self.clayer.free_weights.dtype)
        for part, bn in (("bn_real", self.bn_real), ("bn_imag", self.bn_imag)):
            for k, v in bn.grads.items():
                self.grads[f"{part}.{k}"] = v
        return grad_x

    def regularizer(self):
        """Current spectral-spread penalty of the trainable filters (0 if frozen)."""
        if self.clayer.frozen:
            return 0.0
        return phase_layer.gabor_regularizer(self.clayer.free_weights, self.clayer.envelope)

    def regularizer_grad(self):
        if self.clayer.frozen:
            raise ConfigError("frozen front end has no trainable filters")
        g = phase_layer.regularizer_gradient(self.clayer.free_weights, self.clayer.envelope)
        return g.astype(self.clayer.free_weights.dtype)

    def sync(self):
        phase_layer.sync_tied_weights(self.clayer)
