import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from phasestream import gabor
from phasestream.errors import ConfigError, ShapeError


def _params(**kw):
    base = dict(wavelength=4.0, theta=0.0, psi=0.0, sigma=2.0, gamma=0.5)
    base.update(kw)
    return gabor.GaborParams(**base)


class TestMakeGabor:
    def test_center_pixel(self):
        k = gabor.make_gabor(_params(), 7)
        assert k.real[3, 3] == pytest.approx(1.0)
        assert k.imag[3, 3] == pytest.approx(0.0, abs=1e-12)

    def test_first_pixel_along_wave(self):
        # theta=0, wavelength=4: at offset (x=1, y=0) the carrier sits at pi/2.
        sigma = 2.0
        k = gabor.make_gabor(_params(sigma=sigma), 7)
        env = math.exp(-1.0 / (2 * sigma**2))
        assert k.real[3, 4] == pytest.approx(0.0, abs=1e-12)
        assert k.imag[3, 4] == pytest.approx(env, rel=1e-12)

    def test_magnitude_is_envelope_for_any_psi(self):
        for psi in np.linspace(0, 2 * math.pi, 9):
            k = gabor.make_gabor(_params(psi=psi, gamma=1.0), 9)
            base = gabor.make_gabor(_params(psi=0.0, gamma=1.0), 9)
            npt.assert_allclose(k.magnitude(), base.magnitude(), atol=1e-12)

    def test_gamma_one_envelope_rotation_invariant(self):
        for theta in np.linspace(0, math.pi, 5):
            k = gabor.make_gabor(_params(theta=theta, gamma=1.0), 9)
            mag = k.magnitude()
            npt.assert_allclose(gabor.rotate_quarter(mag), mag, atol=1e-12)

    def test_quadrature_pair_is_quarter_cycle_offset(self):
        # The real carrier lagging by pi/2 reproduces the imaginary part.
        for psi in np.linspace(-math.pi, math.pi, 7):
            a = gabor.make_gabor(_params(psi=psi), 9)
            b = gabor.make_gabor(_params(psi=psi - math.pi / 2), 9)
            npt.assert_allclose(a.imag, b.real, atol=1e-12)

    def test_even_size_rejected(self):
        with pytest.raises(ConfigError):
            gabor.make_gabor(_params(), 8)

    def test_nyquist_warning_still_produces_kernel(self):
        with pytest.warns(gabor.NyquistWarning):
            k = gabor.make_gabor(_params(wavelength=1.5), 7)
        assert k.real.shape == (7, 7)

    def test_invalid_params_rejected(self):
        with pytest.raises(ConfigError):
            gabor.GaborParams(wavelength=-1.0, theta=0.0)
        with pytest.raises(ConfigError):
            gabor.GaborParams(wavelength=4.0, theta=math.nan)


class TestRotateQuarter:
    def test_contract_formula(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((5, 5))
        out = gabor.rotate_quarter(m)
        for y in range(5):
            for x in range(5):
                assert out[y, x] == m[x, 5 - 1 - y]

    @settings(max_examples=20, deadline=None)
    @given(hnp.arrays(np.float64, st.integers(2, 8).map(lambda k: (k, k)),
                      elements=st.floats(-10, 10)))
    def test_four_applications_identity(self, m):
        out = m
        for _ in range(4):
            out = gabor.rotate_quarter(out)
        npt.assert_array_equal(out, m)

    def test_row_becomes_column(self):
        m = np.zeros((4, 4))
        m[0, :] = [1, 2, 3, 4]
        out = gabor.rotate_quarter(m)
        nz_cols = np.unique(np.nonzero(out)[1])
        assert list(nz_cols) == [0]

    def test_gabor_orientation_shift(self):
        # Quarter-turning the imaginary part lands on the theta - pi/2 filter
        # (the theta + pi/2 filter up to wave polarity).
        for theta in np.linspace(0, math.pi, 6):
            src = gabor.make_gabor(_params(theta=theta, gamma=1.0), 9)
            dst = gabor.make_gabor(_params(theta=theta - math.pi / 2, gamma=1.0), 9)
            npt.assert_allclose(gabor.rotate_quarter(src.imag), dst.imag, atol=1e-10)
            flipped = gabor.make_gabor(_params(theta=theta + math.pi / 2, gamma=1.0), 9)
            npt.assert_allclose(gabor.rotate_quarter(src.imag), -flipped.imag, atol=1e-10)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            gabor.rotate_quarter(np.zeros((3, 4)))

    def test_stack_matches_per_slice(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((3, 2, 5, 5))
        out = gabor.rotate_quarter_stack(w)
        for f in range(3):
            for c in range(2):
                npt.assert_array_equal(out[f, c], gabor.rotate_quarter(w[f, c]))


class TestLogSpaced:
    def test_endpoints(self):
        npt.assert_allclose(gabor.log_spaced(0.2, 5, 2), [0.2, 5.0])

    def test_powers_of_two(self):
        npt.assert_allclose(gabor.log_spaced(1, 4, 3), [1, 2, 4])

    def test_closed_form_ratio(self):
        f = gabor.log_spaced(0.2, 5, 12)
        assert len(f) == 12
        assert f[5] / f[4] == pytest.approx(25 ** (1 / 11), abs=1e-9)

    def test_constant_ratio(self):
        f = gabor.log_spaced(0.2, 5, 12)
        ratios = [b / a for a, b in zip(f, f[1:])]
        npt.assert_allclose(ratios, ratios[0], atol=1e-9)

    def test_errors(self):
        with pytest.raises(ConfigError):
            gabor.log_spaced(0.2, 5, 1)
        with pytest.raises(ConfigError):
            gabor.log_spaced(5, 0.2, 4)


class TestMakeBank:
    def test_preset_sizes(self):
        b24 = gabor.make_bank(gabor.preset_bank_spec(24, "quadrature"))
        b96 = gabor.make_bank(gabor.preset_bank_spec(96, "perpendicular"))
        assert len(b24) == 24
        assert len(b96) == 96
        assert b96.spec.frequencies[0] == pytest.approx(0.2)
        assert b96.spec.frequencies[-1] == pytest.approx(5.0)

    def test_small_bank_shape(self):
        spec = gabor.FilterBankSpec(frequencies=gabor.log_spaced(1, 3, 3))
        assert gabor.make_bank(spec).spec.size == 24

    def test_perpendicular_tie(self):
        bank = gabor.make_bank(gabor.preset_bank_spec(24, "perpendicular"))
        for k in bank.kernels:
            npt.assert_array_equal(k.real, gabor.rotate_quarter(k.imag))

    def test_determinism(self):
        a = gabor.make_bank(gabor.preset_bank_spec(96, "quadrature"))
        b = gabor.make_bank(gabor.preset_bank_spec(96, "quadrature"))
        for ka, kb in zip(a.kernels, b.kernels):
            assert ka.real.tobytes() == kb.real.tobytes()
            assert ka.imag.tobytes() == kb.imag.tobytes()

    def test_normalization_flag(self):
        spec = gabor.preset_bank_spec(24, "quadrature", normalize=True)
        for k in gabor.make_bank(spec).kernels:
            assert np.sum(k.real**2 + k.imag**2) == pytest.approx(1.0)

    def test_frequency_bound_enforced(self):
        with pytest.raises(ConfigError):
            gabor.FilterBankSpec(kernel_size=7, frequencies=[5.0])

    def test_empty_lists_rejected(self):
        with pytest.raises(ConfigError):
            gabor.FilterBankSpec(frequencies=[])
        with pytest.raises(ConfigError):
            gabor.FilterBankSpec(orientations=[])

    def test_wavelength_rule(self):
        spec = gabor.FilterBankSpec(kernel_size=9, frequencies=[1.5], orientations=[0.0])
        bank = gabor.make_bank(spec)
        assert bank.params[0].wavelength == pytest.approx(9 / 1.5)
        assert bank.params[0].sigma == pytest.approx(0.56 * 9 / 1.5)


def test_bank_save_load_round_trip(tmp_path):
    bank = gabor.make_bank(gabor.preset_bank_spec(24, "perpendicular"))
    path = tmp_path / "bank.bin"
    gabor.save_bank(bank, path)
    back = gabor.load_bank(path)
    assert len(back) == 24
    assert back.spec.mode == "perpendicular"
    for a, b in zip(bank.kernels, back.kernels):
        npt.assert_array_equal(np.asarray(a.real, dtype=np.float64), b.real)
    assert back.params[0].wavelength == pytest.approx(bank.params[0].wavelength)
