"""Trainable perpendicular complex convolution with phase extraction.

Only the imaginary filters train. They are parameterized as free weights U
times a fixed Gaussian envelope E (so learned filters stay localized), and the
real filters are derived as the quarter-turned imaginary ones after every
update — they never receive optimizer updates. Phase comes from a
single-argument arctangent of the imaginary/real responses, and a spectral
regularizer pulls each trainable slice toward a single-tone (sine-like)
frequency profile.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ops, spectral
from .errors import ConfigError, ShapeError
from .gabor import rotate_quarter_stack


def make_envelope(k, sigma_e):
    """Gaussian window, peak 1 at the center pixel: exp(-(x^2+y^2)/(2 sigma_e^2))."""
    if k % 2 == 0:
        raise ConfigError(f"envelope size must be odd, got {k}")
    if sigma_e <= 0:
        raise ConfigError(f"sigma_e must be positive, got {sigma_e}")
    half = k // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    return np.exp(-(xs**2 + ys**2) / (2.0 * sigma_e**2))


@dataclass
class PhaseResponse:
    real_resp: np.ndarray
    imag_resp: np.ndarray
    phase: np.ndarray | None = None


class ComplexConvLayer:
    """Complex conv front end: free weights U, fixed envelope E, derived
    imaginary weights W_i = U * E and real weights W_r = rotate_quarter(W_i).

    A frozen layer carries explicit (W_r, W_i) from a filter bank instead and
    exposes no trainable parameters.
    """

    def __init__(self, spec, envelope=None, free_weights=None,
                 w_real=None, w_imag=None, reg_weight=1e-3):
        if spec.kernel_h != spec.kernel_w:
            raise ConfigError("complex layer kernels must be square (quarter-turn tying)")
        self.spec = spec
        self.reg_weight = reg_weight
        self.frozen = free_weights is None
        if self.frozen:
            if w_real is None or w_imag is None:
                raise ConfigError("frozen layer needs explicit w_real and w_imag")
            self.envelope = None
            self.free_weights = None
            self.w_real = w_real
            self.w_imag = w_imag
        else:
            if envelope is None:
                raise ConfigError("trainable layer needs an envelope")
            if np.any(envelope <= 0):
                raise ConfigError("envelope must be strictly positive")
            self.envelope = envelope
            self.free_weights = free_weights
            self.w_imag = None
            self.w_real = None
            sync_tied_weights(self)

    @classmethod
    def create(cls, filters, in_channels, kernel_size, stride=1, padding=None,
               sigma_e=None, reg_weight=1e-3, rng=None, dtype=np.float32):
        """Trainable layer; U ~ uniform[-a, a] with a = 1/sqrt(C k^2)."""
        rng = rng or np.random.default_rng(0)
        padding = kernel_size // 2 if padding is None else padding
        sigma_e = kernel_size / 4.0 if sigma_e is None else sigma_e
        spec = ops.ConvSpec(kernel_size, kernel_size, stride, padding, in_channels, filters)
        a = 1.0 / math.sqrt(in_channels * kernel_size * kernel_size)
        u = rng.uniform(-a, a, size=(filters, in_channels, kernel_size, kernel_size))
        env = make_envelope(kernel_size, sigma_e).astype(dtype)
        return cls(spec, envelope=env, free_weights=u.astype(dtype), reg_weight=reg_weight)

    @classmethod
    def from_bank(cls, bank, in_channels=1, stride=1, padding=None, dtype=np.float32):
        """Frozen layer whose filters come from a quadrature or perpendicular bank."""
        if in_channels != 1:
            raise ConfigError("fixed banks define single-channel filters")
        real, imag = bank.as_weights(dtype=dtype)
        k = bank.spec.kernel_size
        padding = k // 2 if padding is None else padding
        spec = ops.ConvSpec(k, k, stride, padding, in_channels, len(bank))
        return cls(spec, w_real=real, w_imag=imag, reg_weight=0.0)

    @property
    def filters(self):
        return self.spec.out_channels


def sync_tied_weights(layer):
    """Recompute W_i = U * E and W_r = rotate_quarter(W_i) per filter slice.

    Idempotent; a no-op for frozen layers. Call after every optimizer step so
    the perpendicular tie holds bitwise.
    """
    if layer.frozen:
        return
    layer.w_imag = layer.free_weights * layer.envelope[None, None, :, :]
    layer.w_real = rotate_quarter_stack(layer.w_imag)


def complex_conv_forward(x, layer, cols=None):
    """Real and imaginary responses of the complex layer; W_i is recomputed
    from the current free weights, W_r is used as stored (frozen tie).

    Both branches share one patch matrix (pass `cols` to reuse it again in
    the backward pass)."""
    if x.shape[1] != layer.spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, layer wants {layer.spec.in_channels}")
    if layer.frozen:
        w_imag = layer.w_imag
    else:
        w_imag = layer.free_weights * layer.envelope[None, None, :, :]
    if cols is None:
        cols = ops.conv_patches(x, layer.spec)
    real_resp = ops.conv2d_forward(x, layer.w_real, layer.spec, cols=cols)
    imag_resp = ops.conv2d_forward(x, w_imag, layer.spec, cols=cols)
    return PhaseResponse(real_resp, imag_resp)


def complex_conv_backward(grad_real, grad_imag, x, layer, cols=None, need_input_grad=True):
    """Gradients (grad_x, grad_free_weights).

    The real branch's weight gradient is computed and discarded because the
    real filters are frozen copies; it still feeds the input gradient. The
    imaginary branch chains through the envelope product into U.
    """
    gx_real, _discard = ops.conv2d_backward(
        grad_real, x, layer.w_real, layer.spec, cols=cols, need_input_grad=need_input_grad
    )
    w_imag = layer.w_imag if layer.frozen else layer.free_weights * layer.envelope[None, None]
    gx_imag, g_wi = ops.conv2d_backward(
        grad_imag, x, w_imag, layer.spec, cols=cols, need_input_grad=need_input_grad
    )
    grad_x = gx_real + gx_imag if need_input_grad else None
    if layer.frozen:
        return grad_x, None
    return grad_x, g_wi * layer.envelope[None, None, :, :]


def crelu(real_resp, imag_resp):
    """ReLU applied independently to the real and imaginary maps."""
    if real_resp.shape != imag_resp.shape:
        raise ShapeError("real/imag response shapes differ")
    return ops.relu(real_resp), ops.relu(imag_resp)


def crelu_backward(grad_real, grad_imag, real_resp, imag_resp):
    return ops.relu_backward(grad_real, real_resp), ops.relu_backward(grad_imag, imag_resp)


def extract_phase(real_resp, imag_resp, epsilon=1e-8):
    """Single-argument arctangent phase, finite everywhere.

    phase = arctan(imag / (real + epsilon * sign(real))), where sign(0) = +1,
    so the denominator never vanishes and values stay in (-pi/2, pi/2).
    """
    if real_resp.shape != imag_resp.shape:
        raise ShapeError("real/imag response shapes differ")
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    den = real_resp + epsilon * np.where(real_resp >= 0, 1.0, -1.0)
    return np.arctan(imag_resp / den)


def extract_phase_backward(grad_out, real_resp, imag_resp, epsilon=1e-8):
    den = real_resp + epsilon * np.where(real_resp >= 0, 1.0, -1.0)
    u = imag_resp / den
    common = grad_out / (1.0 + u * u)
    grad_imag = common / den
    grad_real = -common * imag_resp / (den * den)
    return grad_real, grad_imag


def _slice_regularizer(w):
    """Mass-weighted mean spectral distance from the spectral center of mass.

    Returns (value, spectrum, mags, coords, com) so the gradient can reuse
    the decomposition; value is 0 for an all-zero slice.
    """
    spectrum = spectral.rfft2_complex(w)
    mags = np.abs(spectrum)
    coords = np.asarray(spectral.halfplane_coords(w.shape[0], w.shape[1]), dtype=np.float64)
    total = mags.sum()
    if total == 0.0:
        return 0.0, spectrum, mags, coords, np.zeros(2)
    com = (mags[..., None] * coords).sum(axis=(0, 1)) / total
    dist = np.linalg.norm(coords - com, axis=-1)
    return float((mags * dist).sum() / total), spectrum, mags, coords, com


def gabor_regularizer(free_weights, envelope):
    """Mean over filter slices of the spectral-spread penalty of U * E.

    Minimizing it concentrates each slice's spectral mass at one frequency,
    i.e. pushes the windowed filter toward a pure sinusoid.
    """
    u = np.asarray(free_weights, dtype=np.float64)
    w = u * envelope[None, None, :, :]
    f, c = w.shape[0], w.shape[1]
    total = 0.0
    for fi in range(f):
        for ci in range(c):
            total += _slice_regularizer(w[fi, ci])[0]
    return total / (f * c)


def regularizer_gradient(free_weights, envelope):
    """Exact gradient of gabor_regularizer w.r.t. the free weights.

    Chains through the envelope product, the DFT magnitudes, the mass
    normalization and the center of mass (which depends on every bin). For a
    half-plane coefficient array C the pixel-domain gradient is
    Re(FFT2(C)) since each magnitude bin sees the conjugate DFT basis row.
    Zero-magnitude bins (and all-zero slices) get zero gradient.
    """
    u = np.asarray(free_weights, dtype=np.float64)
    env = np.asarray(envelope, dtype=np.float64)
    w = u * env[None, None, :, :]
    f, c, kh, kw = w.shape
    grad = np.zeros_like(w)
    for fi in range(f):
        for ci in range(c):
            value, spectrum, mags, coords, com = _slice_regularizer(w[fi, ci])
            total = mags.sum()
            if total == 0.0:
                continue
            diff = coords - com
            dist = np.linalg.norm(diff, axis=-1)
            # v = sum_b m_b (com - p_b)/d_b, skipping the d_b = 0 bin
            safe = np.where(dist > 0, dist, 1.0)
            unit = np.where(dist[..., None] > 0, -diff / safe[..., None], 0.0)
            v = (mags[..., None] * unit).sum(axis=(0, 1))
            g_m = (dist + (diff @ v) / total - value) / total
            with np.errstate(invalid="ignore", divide="ignore"):
                coeff = np.where(mags > 0, g_m * np.conj(spectrum) / mags, 0.0)
            full = np.zeros((kh, kw), dtype=np.complex128)
            full[:, : kw // 2 + 1] = coeff
            grad[fi, ci] = np.real(np.fft.fft2(full))
    return (grad * env[None, None, :, :]) / (f * c)
