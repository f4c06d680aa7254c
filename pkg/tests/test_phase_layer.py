import math

import numpy as np
import numpy.testing as npt
import pytest

from phasestream import gabor, ops, phase_layer, spectral
from phasestream.errors import ConfigError, ShapeError
from phasestream.oracle import (
    analytic_gabor_response,
    finite_diff_grad,
    relative_error,
    wrapped_phase_distance,
)


@pytest.fixture
def rng():
    return np.random.default_rng(99)


class TestEnvelope:
    def test_center_is_one(self):
        e = phase_layer.make_envelope(7, 7 / 4)
        assert e[3, 3] == 1.0

    def test_symmetries(self):
        e = phase_layer.make_envelope(9, 2.0)
        npt.assert_array_equal(e, e[::-1, ::-1])
        npt.assert_array_equal(e, e.T)

    def test_corner_value_default_sigma(self):
        e = phase_layer.make_envelope(7, 7 / 4)
        expected = math.exp(-9 * 16 / 49)
        assert e[0, 0] == pytest.approx(expected, rel=1e-12)
        assert e[0, 0] == pytest.approx(0.0529, abs=2e-4)

    def test_validation(self):
        with pytest.raises(ConfigError):
            phase_layer.make_envelope(6, 1.0)
        with pytest.raises(ConfigError):
            phase_layer.make_envelope(7, 0.0)


class TestCrelu:
    def test_elementwise(self):
        r, i = phase_layer.crelu(np.array([-1.0]), np.array([2.0]))
        assert r[0] == 0.0 and i[0] == 2.0

    def test_positive_identity(self, rng):
        a = np.abs(rng.standard_normal((3, 3))) + 0.1
        b = np.abs(rng.standard_normal((3, 3))) + 0.1
        r, i = phase_layer.crelu(a, b)
        npt.assert_array_equal(r, a)
        npt.assert_array_equal(i, b)

    def test_gradient_gates_on_sign(self, rng):
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))
        t = rng.standard_normal((4, 4))

        def f(v):
            r, i = phase_layer.crelu(v, b)
            return float(np.sum(r * t) + np.sum(i * t))

        gr, _ = phase_layer.crelu_backward(t, t, a, b)
        assert relative_error(gr, finite_diff_grad(f, a)) <= 1e-4


class TestExtractPhase:
    def test_cardinal_values(self):
        assert phase_layer.extract_phase(np.array(1.0), np.array(0.0)) == pytest.approx(0.0)
        assert phase_layer.extract_phase(np.array(1.0), np.array(1.0)) == pytest.approx(
            math.pi / 4, abs=1e-7
        )

    def test_zero_denominator_hits_near_half_pi(self):
        phase = phase_layer.extract_phase(np.array(0.0), np.array(1.0), epsilon=1e-8)
        assert phase == pytest.approx(math.pi / 2, abs=1e-7)
        assert phase < math.pi / 2

    def test_finite_everywhere(self, rng):
        r = rng.standard_normal((50, 50)) * 1e-9
        i = rng.standard_normal((50, 50))
        out = phase_layer.extract_phase(r, i)
        assert np.all(np.isfinite(out))
        assert np.all(np.abs(out) <= math.pi / 2)

    def test_backward_matches_finite_differences(self, rng):
        r = rng.standard_normal((3, 3)) + 0.5
        i = rng.standard_normal((3, 3))
        t = rng.standard_normal((3, 3))
        gr, gi = phase_layer.extract_phase_backward(t, r, i)
        fgr = finite_diff_grad(
            lambda v: float(np.sum(phase_layer.extract_phase(v, i) * t)), r
        )
        fgi = finite_diff_grad(
            lambda v: float(np.sum(phase_layer.extract_phase(r, v) * t)), i
        )
        assert relative_error(gr, fgr) <= 1e-4
        assert relative_error(gi, fgi) <= 1e-4


def _trainable_layer(rng, filters=2, in_channels=1, k=7, dtype=np.float64):
    return phase_layer.ComplexConvLayer.create(
        filters, in_channels, k, rng=rng, dtype=dtype
    )


class TestComplexConv:
    def test_zero_input_zero_response(self, rng):
        layer = _trainable_layer(rng)
        resp = phase_layer.complex_conv_forward(np.zeros((1, 1, 9, 9)), layer)
        assert not resp.real_resp.any() and not resp.imag_resp.any()

    def test_delta_input_reproduces_flipped_kernels(self, rng):
        layer = _trainable_layer(rng, filters=3, k=5)
        x = np.zeros((1, 1, 11, 11))
        x[0, 0, 5, 5] = 1.0
        resp = phase_layer.complex_conv_forward(x, layer)
        patch = resp.imag_resp[0, :, 3:8, 3:8]
        npt.assert_allclose(patch, layer.w_imag[:, 0, ::-1, ::-1], atol=1e-12)

    def test_channel_mismatch_rejected(self, rng):
        layer = _trainable_layer(rng, in_channels=2)
        with pytest.raises(ShapeError):
            phase_layer.complex_conv_forward(np.zeros((1, 1, 9, 9)), layer)

    def test_matched_sinusoid_magnitude_near_oracle(self):
        lam, theta, size = 6.0, math.pi / 5, 15
        sigma = 0.56 * lam
        params = gabor.GaborParams(wavelength=lam, theta=theta, psi=0.0, sigma=sigma, gamma=0.5)
        kern = gabor.make_gabor(params, size)
        spec = ops.ConvSpec(size, size, 1, 0, 1, 1)
        layer = phase_layer.ComplexConvLayer(
            spec, w_real=kern.real[None, None], w_imag=kern.imag[None, None]
        )
        n = 31
        half = n // 2
        ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
        xr = xs * math.cos(theta) + ys * math.sin(theta)
        img = np.cos(2 * math.pi * xr / lam)
        resp = phase_layer.complex_conv_forward(img[None, None], layer)
        center = (n - size) // 2 + size // 2 - size // 2  # response grid center
        mid = resp.real_resp.shape[2] // 2
        measured = math.hypot(
            resp.real_resp[0, 0, mid, mid], resp.imag_resp[0, 0, mid, mid]
        )
        oracle = analytic_gabor_response(lam, theta, size, sigma, gamma=0.5)
        assert oracle.matched
        assert measured == pytest.approx(oracle.magnitude, rel=0.05)


class TestSyncTiedWeights:
    def test_exact_tie_after_sync(self, rng):
        layer = _trainable_layer(rng, filters=4, in_channels=2)
        layer.free_weights += rng.standard_normal(layer.free_weights.shape)
        phase_layer.sync_tied_weights(layer)
        expected = gabor.rotate_quarter_stack(layer.w_imag)
        assert np.array_equal(layer.w_real, expected)
        assert np.max(np.abs(layer.w_real - expected)) == 0.0

    def test_idempotent(self, rng):
        layer = _trainable_layer(rng)
        phase_layer.sync_tied_weights(layer)
        wr, wi = layer.w_real.copy(), layer.w_imag.copy()
        phase_layer.sync_tied_weights(layer)
        assert np.array_equal(layer.w_real, wr) and np.array_equal(layer.w_imag, wi)

    def test_frozen_layer_noop(self):
        bank = gabor.make_bank(gabor.preset_bank_spec(24, "quadrature"))
        layer = phase_layer.ComplexConvLayer.from_bank(bank)
        wr = layer.w_real.copy()
        phase_layer.sync_tied_weights(layer)
        npt.assert_array_equal(layer.w_real, wr)


def _tone(k, row, col):
    ys, xs = np.mgrid[0:k, 0:k]
    return np.cos(2 * math.pi * (row * ys + col * xs) / k)


class TestGaborRegularizer:
    def test_single_tone_is_zero(self):
        ones = np.ones((7, 7))
        u = _tone(7, 2, 1)[None, None]
        assert phase_layer.gabor_regularizer(u, ones) <= 1e-9

    def test_two_equal_bins(self):
        k = 8
        ones = np.ones((k, k))
        u = (_tone(k, 1, 1) + _tone(k, 3, 2))[None, None]
        mags, coords = spectral.rfft2(u[0, 0])
        live = mags > 1e-6
        assert live.sum() == 2
        p = np.asarray(coords, dtype=float)[live]
        expected = np.linalg.norm(p[0] - p[1]) / 2.0
        assert phase_layer.gabor_regularizer(u, ones) == pytest.approx(expected, rel=1e-9)

    def test_zero_slice_contributes_zero(self):
        ones = np.ones((7, 7))
        assert phase_layer.gabor_regularizer(np.zeros((1, 1, 7, 7)), ones) == 0.0

    def test_translation_invariance(self, rng):
        ones = np.ones((9, 9))
        u = rng.standard_normal((1, 1, 9, 9))
        base = phase_layer.gabor_regularizer(u, ones)
        for shift in [(1, 0), (0, 3), (4, 2)]:
            rolled = np.roll(u, shift, axis=(2, 3))
            assert phase_layer.gabor_regularizer(rolled, ones) == pytest.approx(
                base, abs=1e-6
            )

    def test_mean_over_slices(self, rng):
        env = phase_layer.make_envelope(7, 3.0)
        u = rng.standard_normal((3, 2, 7, 7))
        total = np.mean(
            [
                phase_layer.gabor_regularizer(u[f : f + 1, c : c + 1], env)
                for f in range(3)
                for c in range(2)
            ]
        )
        assert phase_layer.gabor_regularizer(u, env) == pytest.approx(total, rel=1e-12)


class TestRegularizerGradient:
    def test_zero_weights_zero_gradient(self):
        env = phase_layer.make_envelope(7, 2.0)
        g = phase_layer.regularizer_gradient(np.zeros((2, 1, 7, 7)), env)
        assert not g.any()

    def test_matches_finite_differences(self, rng):
        env = phase_layer.make_envelope(7, 7 / 4)
        u = rng.standard_normal((2, 1, 7, 7))
        g = phase_layer.regularizer_gradient(u, env)
        fg = finite_diff_grad(lambda v: phase_layer.gabor_regularizer(v, env), u)
        assert relative_error(g, fg) <= 1e-4

    def test_odd_under_sign_flip(self, rng):
        env = phase_layer.make_envelope(7, 3.0)
        u = rng.standard_normal((1, 1, 7, 7))
        npt.assert_allclose(
            phase_layer.regularizer_gradient(-u, env),
            -phase_layer.regularizer_gradient(u, env),
            atol=1e-12,
        )


def test_end_to_end_gradient_through_phase(rng):
    """conv -> CReLU -> arctangent -> scalar loss, differentiated in U with the
    stored real filters held fixed (the frozen-tie contract)."""
    layer = _trainable_layer(rng, filters=2, k=5)
    x = rng.standard_normal((2, 1, 8, 8))
    t = None

    def loss(u):
        saved = layer.free_weights
        layer.free_weights = u
        resp = phase_layer.complex_conv_forward(x, layer)
        r1, i1 = phase_layer.crelu(resp.real_resp, resp.imag_resp)
        phase = phase_layer.extract_phase(r1, i1)
        layer.free_weights = saved
        return float(np.sum(phase * t))

    resp = phase_layer.complex_conv_forward(x, layer)
    r1, i1 = phase_layer.crelu(resp.real_resp, resp.imag_resp)
    t = rng.standard_normal(r1.shape)
    g_r, g_i = phase_layer.extract_phase_backward(t, r1, i1)
    g_r0, g_i0 = phase_layer.crelu_backward(g_r, g_i, resp.real_resp, resp.imag_resp)
    _, g_u = phase_layer.complex_conv_backward(g_r0, g_i0, x, layer)
    fg = finite_diff_grad(loss, layer.free_weights)
    assert relative_error(g_u, fg) <= 1e-4


def test_phase_shift_linearity():
    """Translating a matched sinusoid by delta moves the extracted phase by
    2*pi*delta/lambda (mod pi), the discrete shift property."""
    lam, theta, size = 8.0, 0.0, 15
    sigma = 0.56 * lam
    kern = gabor.make_gabor(
        gabor.GaborParams(wavelength=lam, theta=theta, psi=0.0, sigma=sigma, gamma=0.5), size
    )
    spec = ops.ConvSpec(size, size, 1, 0, 1, 1)
    layer = phase_layer.ComplexConvLayer(
        spec, w_real=kern.real[None, None], w_imag=kern.imag[None, None]
    )
    n = 33
    half = n // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    worst = 0.0
    for delta in np.arange(0.0, lam + 1e-9, lam / 8):
        img = np.cos(2 * math.pi * (xs - delta) / lam)
        resp = phase_layer.complex_conv_forward(img[None, None], layer)
        r1, i1 = resp.real_resp, resp.imag_resp
        mid = r1.shape[2] // 2
        phase = float(phase_layer.extract_phase(r1, i1)[0, 0, mid, mid])
        expected = 2 * math.pi * delta / lam
        worst = max(worst, wrapped_phase_distance(phase, expected))
    assert worst <= 0.05


def test_perpendicular_covers_both_plaid_orientations():
    """On a plaid of two orthogonal sinusoids the perpendicular pair responds
    along both orientations; the quadrature pair along one. Energy is measured
    at each component's frequency bin of the response spectra."""
    lam, size, k = 8.0, 38, 7
    sigma = 0.56 * lam
    kern = gabor.make_gabor(
        gabor.GaborParams(wavelength=lam, theta=0.0, psi=0.0, sigma=sigma, gamma=1.0), k
    )
    quad = phase_layer.ComplexConvLayer(
        ops.ConvSpec(k, k, 1, 0, 1, 1),
        w_real=kern.real[None, None], w_imag=kern.imag[None, None],
    )
    perp = phase_layer.ComplexConvLayer(
        ops.ConvSpec(k, k, 1, 0, 1, 1),
        w_real=gabor.rotate_quarter(kern.imag)[None, None],
        w_imag=kern.imag[None, None],
    )
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    plaid = np.sin(2 * math.pi * xs / lam) + np.sin(2 * math.pi * ys / lam)

    def orientation_energy_ratio(layer):
        resp = phase_layer.complex_conv_forward(plaid[None, None], layer)
        out = resp.real_resp[0, 0] + 1j * resp.imag_resp[0, 0]
        spectrum = np.abs(np.fft.fft2(out)) ** 2
        m = out.shape[0]
        bin_x = round(m / lam)
        primary = spectrum[0, bin_x] + spectrum[0, m - bin_x]
        orthogonal = spectrum[bin_x, 0] + spectrum[m - bin_x, 0]
        return orthogonal / primary

    ratio_quad = orientation_energy_ratio(quad)
    ratio_perp = orientation_energy_ratio(perp)
    assert ratio_perp >= 5.0 * ratio_quad


class TestLayerConstruction:
    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ConfigError):
            phase_layer.ComplexConvLayer(
                ops.ConvSpec(4, 4, 1, 0, 1, 1),
                w_real=np.zeros((1, 1, 4, 4)), w_imag=np.zeros((1, 1, 4, 4)),
            )

    def test_rect_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ops.ConvSpec(3, 5, 1, 0, 1, 1).kernel_h  # construction is fine...
            phase_layer.ComplexConvLayer(
                ops.ConvSpec(3, 5, 1, 0, 1, 1),
                w_real=np.zeros((1, 1, 3, 5)), w_imag=np.zeros((1, 1, 3, 5)),
            )

    def test_envelope_must_be_positive(self, rng):
        env = np.zeros((5, 5))
        with pytest.raises(ConfigError):
            phase_layer.ComplexConvLayer(
                ops.ConvSpec(5, 5, 1, 2, 1, 2),
                envelope=env, free_weights=np.zeros((2, 1, 5, 5)),
            )

    def test_init_scale(self, rng):
        layer = phase_layer.ComplexConvLayer.create(4, 3, 7, rng=rng)
        bound = 1.0 / math.sqrt(3 * 49)
        assert np.abs(layer.free_weights).max() <= bound

    def test_frozen_from_bank(self):
        bank = gabor.make_bank(gabor.preset_bank_spec(24, "perpendicular"))
        layer = phase_layer.ComplexConvLayer.from_bank(bank)
        assert layer.frozen
        assert layer.filters == 24
        npt.assert_array_equal(
            layer.w_real[0, 0], gabor.rotate_quarter(layer.w_imag[0, 0])
        )
