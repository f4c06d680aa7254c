"""Slow, obviously-correct reference implementations.

Everything here exists to certify the fast paths and deliberately shares no
code with them: convolution is a direct loop, the DFT is the textbook double
sum, gradients come from central differences, and the Gabor response is a
direct dot product of analytic formulas. All oracles run in float64.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def relative_error(a, b):
    """Global relative error ||a-b|| / max(||a|| + ||b||, tiny)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def naive_conv2d(x, w, stride=1, padding=0):
    """Direct-loop cross-correlation. Out-of-bounds reads are zero.

    x: (N, C, H, W), w: (F, C, kh, kw) -> (N, F, H', W')
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"expected 4D input/weights, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"channel mismatch: input {c}, weights {cw}")
    if (h + 2 * padding - kh) % stride != 0 or (wd + 2 * padding - kw) % stride != 0:
        raise ShapeError("output extent not integral for given stride/padding")
    hp = (h + 2 * padding - kh) // stride + 1
    wp = (wd + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    out = np.zeros((n, f, hp, wp))
    for ni in range(n):
        for fi in range(f):
            for y in range(hp):
                for xi in range(wp):
                    window = xp[ni, :, y * stride : y * stride + kh, xi * stride : xi * stride + kw]
                    out[ni, fi, y, xi] = float(np.sum(window * w[fi]))
    return out


def naive_dft2_halfplane(x):
    """O(k^4) double-sum DFT magnitudes over rows 0..k-1, columns 0..floor(k/2).

    Returns (magnitudes, coords) where coords[r, c] = (signed row frequency,
    column frequency): rows above k/2 alias to negative frequencies.
    """
    x = np.asarray(x, dtype=np.float64)
    kh, kw = x.shape
    cols = kw // 2 + 1
    mags = np.zeros((kh, cols))
    coords = np.zeros((kh, cols, 2))
    for r in range(kh):
        for c in range(cols):
            acc = 0.0 + 0.0j
            for y in range(kh):
                for xx in range(kw):
                    acc += x[y, xx] * np.exp(-2j * math.pi * (r * y / kh + c * xx / kw))
            mags[r, c] = abs(acc)
            coords[r, c, 0] = r if r <= kh // 2 else r - kh
            coords[r, c, 1] = c
    return mags, coords


@dataclass
class FiniteDiffConfig:
    epsilon: float = 1e-5
    scheme: str = "central"


def finite_diff_grad(scalar_function, point, config=None):
    """Central-difference gradient of a scalar function at `point` (float64)."""
    cfg = config or FiniteDiffConfig()
    if cfg.scheme != "central":
        raise ValueError(f"unsupported scheme {cfg.scheme!r}")
    point = np.array(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = point.ravel()
    gflat = grad.ravel()
    eps = cfg.epsilon
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = scalar_function(point)
        flat[i] = orig - eps
        fm = scalar_function(point)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ArithmeticError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


@dataclass
class GaborResponseOracle:
    """Expected complex response of a Gabor pair to a sinusoid.

    `matched` is True when the probe sinusoid hits the filter's (lambda, theta);
    only then are `magnitude` and `phase` point predictions. Otherwise they are
    None and `magnitude_range` gives the loose envelope bound.
    """

    matched: bool
    magnitude: float | None
    phase: float | None
    magnitude_range: tuple[float, float]


def analytic_gabor_response(lam, theta, size, sigma, gamma=0.5,
                            lam_s=None, theta_s=None, phase_s=0.0, amplitude=1.0):
    """Response of a quadrature Gabor (psi=0) to an analytic sinusoid.

    The probe is amplitude * cos(2*pi*x'/lam_s - phase_s): phase_s is the
    spatial lag along the wave direction, so a translation by delta pixels
    corresponds to phase_s = 2*pi*delta/lam_s. For the matched case the
    extracted single-argument-arctangent phase equals phase_s modulo pi, and
    the magnitude approaches amplitude * sum(envelope) / 2 (single-sided
    spectrum keeps half the energy).

    Filter and probe are both evaluated directly from their closed forms and
    reduced with one dot product; no convolution code is involved.
    """
    lam_s = lam if lam_s is None else lam_s
    theta_s = theta if theta_s is None else theta_s
    half = size // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = xs * math.cos(theta) + ys * math.sin(theta)
    yr = -xs * math.sin(theta) + ys * math.cos(theta)
    envelope = np.exp(-(xr**2 + (gamma * yr) ** 2) / (2.0 * sigma**2))
    f_real = envelope * np.cos(2.0 * math.pi * xr / lam)
    f_imag = envelope * np.sin(2.0 * math.pi * xr / lam)

    xs_s = xs * math.cos(theta_s) + ys * math.sin(theta_s)
    probe = amplitude * np.cos(2.0 * math.pi * xs_s / lam_s - phase_s)

    env_sum = float(np.sum(envelope))
    bound = (0.0, abs(amplitude) * env_sum)
    matched = math.isclose(lam, lam_s, rel_tol=1e-9) and math.isclose(
        math.cos(2 * (theta - theta_s)), 1.0, abs_tol=1e-12
    )
    if not matched:
        return GaborResponseOracle(False, None, None, bound)

    r = float(np.sum(probe * f_real))
    i = float(np.sum(probe * f_imag))
    magnitude = math.hypot(r, i)
    phase = math.atan(i / r) if r != 0.0 else math.copysign(math.pi / 2, i)
    return GaborResponseOracle(True, magnitude, phase, bound)


def wrapped_phase_distance(a, b):
    """Distance between two phases defined modulo pi (single-arg arctan range)."""
    d = (a - b) % math.pi
    return min(d, math.pi - d)
