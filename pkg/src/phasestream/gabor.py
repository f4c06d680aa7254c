"""Complex Gabor kernels and filter banks.

A complex Gabor pairs a cosine and a sine carrier under one Gaussian
envelope: real = e * cos(2*pi*x'/wavelength + psi), imag = e * sin(...),
with x', y' the orientation-rotated pixel offsets. A quadrature bank keeps
that pair; a perpendicular bank replaces the real part with the quarter-turned
imaginary part, which trades orientation selectivity for coverage of two
orthogonal directions.

Frequencies are in cycles per kernel window, so wavelength = kernel_size / f;
this keeps the usable range representable on small pixel grids.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import ConfigError, ShapeError


class NyquistWarning(UserWarning):
    """Wavelength below 2 pixels cannot be represented without aliasing."""


@dataclass(frozen=True)
class GaborParams:
    wavelength: float
    theta: float
    psi: float = 0.0
    sigma: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        vals = (self.wavelength, self.theta, self.psi, self.sigma, self.gamma)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"non-finite Gabor parameter in {self}")
        if self.wavelength <= 0 or self.sigma <= 0 or self.gamma <= 0:
            raise ConfigError(f"wavelength, sigma, gamma must be positive: {self}")


@dataclass
class ComplexKernel:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError("real/imag kernel shapes differ")
        k = self.real.shape[0]
        if self.real.ndim != 2 or self.real.shape[1] != k or k % 2 == 0:
            raise ShapeError(f"kernel must be odd square, got {self.real.shape}")

    @property
    def size(self):
        return self.real.shape[0]

    def magnitude(self):
        return np.hypot(self.real, self.imag)


def make_gabor(params, size):
    """Materialize a complex quadrature Gabor on an odd `size` x `size` grid.

    With (x, y) offsets from the center pixel:
        x' = x cos(theta) + y sin(theta),  y' = -x sin(theta) + y cos(theta)
        e  = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2))
        real = e cos(2 pi x'/wavelength + psi), imag = e sin(...)
    """
    if size % 2 == 0:
        raise ConfigError(f"kernel size must be odd, got {size}")
    if params.wavelength < 2.0:
        warnings.warn(
            f"wavelength {params.wavelength:.3g} px is below the 2 px Nyquist limit",
            NyquistWarning,
            stacklevel=2,
        )
    half = size // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = xs * math.cos(params.theta) + ys * math.sin(params.theta)
    yr = -xs * math.sin(params.theta) + ys * math.cos(params.theta)
    envelope = np.exp(-(xr**2 + (params.gamma**2) * yr**2) / (2.0 * params.sigma**2))
    carrier = 2.0 * math.pi * xr / params.wavelength + params.psi
    return ComplexKernel(envelope * np.cos(carrier), envelope * np.sin(carrier))


def rotate_quarter(kernel):
    """Quarter-turn a square array about its center: out[y, x] = in[x, k-1-y]."""
    kernel = np.asarray(kernel)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"rotate_quarter needs a square array, got {kernel.shape}")
    return np.ascontiguousarray(np.swapaxes(kernel[..., ::-1], -1, -2))


def rotate_quarter_stack(weights):
    """rotate_quarter applied to every trailing k x k slice of (..., k, k)."""
    weights = np.asarray(weights)
    if weights.shape[-1] != weights.shape[-2]:
        raise ShapeError(f"trailing slices must be square, got {weights.shape}")
    return np.ascontiguousarray(np.swapaxes(weights[..., ::-1], -1, -2))


def log_spaced(f_min, f_max, n):
    """n frequencies f_min * (f_max/f_min)^(i/(n-1)), i = 0..n-1."""
    if n < 2:
        raise ConfigError(f"need at least 2 frequencies, got {n}")
    if not 0 < f_min < f_max:
        raise ConfigError(f"need 0 < f_min < f_max, got {f_min}, {f_max}")
    ratio = f_max / f_min
    return [f_min * ratio ** (i / (n - 1)) for i in range(n)]


def sigma_for_wavelength(wavelength):
    """Bandwidth rule: sigma = 0.56 * wavelength (about one octave)."""
    return 0.56 * wavelength


@dataclass
class FilterBankSpec:
    kernel_size: int = 7
    frequencies: list = field(default_factory=lambda: log_spaced(1.0, 3.0, 3))
    orientations: list = field(default_factory=lambda: [math.pi / 8 * i for i in range(8)])
    mode: str = "quadrature"
    psi: float = 0.0
    gamma: float = 0.5
    sigma_rule: object = None
    normalize: bool = False

    def __post_init__(self):
        if self.kernel_size % 2 == 0 or self.kernel_size < 3:
            raise ConfigError(f"kernel_size must be odd >= 3, got {self.kernel_size}")
        if self.mode not in ("quadrature", "perpendicular"):
            raise ConfigError(f"unknown bank mode {self.mode!r}")
        if not self.frequencies or not self.orientations:
            raise ConfigError("frequency and orientation lists must be non-empty")
        limit = self.kernel_size / 2
        for f in self.frequencies:
            if not 0 < f <= limit:
                raise ConfigError(
                    f"frequency {f} outside (0, {limit}] for kernel size {self.kernel_size}"
                )

    @property
    def size(self):
        return len(self.frequencies) * len(self.orientations)

    def sigma_for(self, wavelength):
        rule = self.sigma_rule or sigma_for_wavelength
        return rule(wavelength)


@dataclass
class ComplexFilterBank:
    spec: FilterBankSpec
    kernels: list
    params: list

    def __len__(self):
        return len(self.kernels)

    def as_weights(self, dtype=np.float64):
        """Stack into conv weight arrays (real, imag), each (F, 1, k, k)."""
        real = np.stack([k.real for k in self.kernels])[:, None].astype(dtype)
        imag = np.stack([k.imag for k in self.kernels])[:, None].astype(dtype)
        return real, imag


def make_bank(spec):
    """One kernel per (frequency, orientation) pair, frequencies outermost.

    wavelength = kernel_size / frequency. In perpendicular mode the real part
    is the quarter-turned imaginary part.
    """
    kernels = []
    params_list = []
    for f in spec.frequencies:
        wavelength = spec.kernel_size / f
        for theta in spec.orientations:
            p = GaborParams(
                wavelength=wavelength,
                theta=theta,
                psi=spec.psi,
                sigma=spec.sigma_for(wavelength),
                gamma=spec.gamma,
            )
            kern = make_gabor(p, spec.kernel_size)
            if spec.mode == "perpendicular":
                kern = ComplexKernel(rotate_quarter(kern.imag), kern.imag)
            if spec.normalize:
                norm = math.sqrt(float(np.sum(kern.real**2 + kern.imag**2)))
                if norm > 0:
                    kern = ComplexKernel(kern.real / norm, kern.imag / norm)
            kernels.append(kern)
            params_list.append(p)
    return ComplexFilterBank(spec=spec, kernels=kernels, params=params_list)


def preset_bank_spec(n_filters, mode, normalize=True):
    """The two standard bank sizes: 24 (3 x 8, 7px) and 96 (12 x 8, 11px).

    The 96-filter preset spans 12 log-spaced frequencies in [0.2, 5] cycles
    per window; that upper end forces an 11px kernel to stay below Nyquist.
    """
    if n_filters == 24:
        return FilterBankSpec(
            kernel_size=7,
            frequencies=log_spaced(1.0, 3.0, 3),
            mode=mode,
            normalize=normalize,
        )
    if n_filters == 96:
        return FilterBankSpec(
            kernel_size=11,
            frequencies=log_spaced(0.2, 5.0, 12),
            mode=mode,
            normalize=normalize,
        )
    raise ConfigError(f"no preset for {n_filters} filters (use 24 or 96)")


def save_bank(bank, path):
    """Container file with stacked real/imag weights plus a JSON sidecar of
    per-kernel parameters at `path` + '.json'."""
    real, imag = bank.as_weights()
    container.save_tensors(path, {"real": real, "imag": imag})
    side = {
        "kernel_size": bank.spec.kernel_size,
        "mode": bank.spec.mode,
        "normalize": bank.spec.normalize,
        "psi": bank.spec.psi,
        "gamma": bank.spec.gamma,
        "frequencies": list(bank.spec.frequencies),
        "orientations": list(bank.spec.orientations),
        "params": [
            {
                "wavelength": p.wavelength,
                "theta": p.theta,
                "psi": p.psi,
                "sigma": p.sigma,
                "gamma": p.gamma,
            }
            for p in bank.params
        ],
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1)


def load_bank(path):
    tensors = container.load_tensors(path)
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        side = json.load(fh)
    spec = FilterBankSpec(
        kernel_size=side["kernel_size"],
        frequencies=side["frequencies"],
        orientations=side["orientations"],
        mode=side["mode"],
        psi=side["psi"],
        gamma=side["gamma"],
        normalize=side["normalize"],
    )
    kernels = [
        ComplexKernel(tensors["real"][i, 0], tensors["imag"][i, 0])
        for i in range(tensors["real"].shape[0])
    ]
    params_list = [GaborParams(**p) for p in side["params"]]
    return ComplexFilterBank(spec=spec, kernels=kernels, params=params_list)
