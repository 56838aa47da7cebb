"""Image-quality metrics and Q-Q data for Gaussianity analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; returns inf for identical inputs."""
    if x.shape != ref.shape:
        raise ValueError(f"psnr: shape mismatch {x.shape} vs {ref.shape}")
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((np.asarray(x, dtype=np.float64) - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5          # 11x11 window
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _local_mean(img: np.ndarray, kernel1d: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, kernel1d, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel1d, axis=1, mode="reflect")


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity over an 11x11 Gaussian window (sigma 1.5).

    Inputs are (H, W) or (H, W, C) in [0, 1]; channels are scored
    independently and averaged.  The boundary band narrower than the window
    radius is excluded from the mean.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {ref.shape}")
    if x.ndim == 2:
        x = x[:, :, None]
        ref = ref[:, :, None]
    h, w, channels = x.shape
    if min(h, w) < 2 * _SSIM_RADIUS + 1:
        raise ValueError(f"image {h}x{w} smaller than the {2 * _SSIM_RADIUS + 1}-pixel window")

    ax = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (ax / _SSIM_SIGMA) ** 2)
    kernel /= kernel.sum()

    scores = []
    r = _SSIM_RADIUS
    for c in range(channels):
        a, b = x[:, :, c], ref[:, :, c]
        mu_a = _local_mean(a, kernel)
        mu_b = _local_mean(b, kernel)
        var_a = _local_mean(a * a, kernel) - mu_a * mu_a
        var_b = _local_mean(b * b, kernel) - mu_b * mu_b
        cov = _local_mean(a * b, kernel) - mu_a * mu_b
        s = ((2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
            (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
        )
        scores.append(float(s[r:-r, r:-r].mean()))
    return float(np.mean(scores))


# Coefficients of Acklam's rational approximation to the inverse normal CDF.
_ICDF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
           1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ICDF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
           6.680131188771972e+01, -1.328068155288572e+01)
_ICDF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
           -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ICDF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
           3.754408661907416e+00)
_ICDF_SPLIT = 0.02425


def _icdf_half(p: np.ndarray) -> np.ndarray:
    """Quantiles for p in (0, 0.5]; result is <= 0."""
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    x = np.empty_like(p)
    tail = p < _ICDF_SPLIT
    central = ~tail

    if np.any(central):
        q = p[central] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[central] = num * q / den

    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        x[tail] = num / den

    # One Halley step on Phi(x) - p = 0.  For x <= 0 the CDF is a bare erfc
    # value with full relative precision, so the step lands near machine
    # accuracy (the p >= 0.5 side is handled by reflection).
    err = 0.5 * special.erfc(-x / np.sqrt(2.0)) - p
    u = err * np.sqrt(2.0 * np.pi) * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def inverse_normal_cdf(p):
    """Standard normal quantile function, elementwise.

    Rational approximation refined by one Halley step, evaluated on the
    p <= 0.5 side and reflected, so both tails keep full accuracy; absolute
    error is well under 1e-9 over (0, 1).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    flip = p > 0.5
    x = _icdf_half(np.where(flip, 1.0 - p, p))
    x = np.where(flip, -x, x)
    return x if x.ndim else float(x)


@dataclass
class QQData:
    """Quantile pairs for a normal Q-Q plot.

    ``sample_quantiles`` is the sorted sample aligned to the reference line
    fitted through the quantile pairs, so a perfectly normal sample lies on
    the diagonal regardless of its location and scale.
    """

    theoretical_quantiles: np.ndarray
    sample_quantiles: np.ndarray
    sample_mean: float
    sample_std: float

    def max_deviation(self) -> float:
        """Largest absolute distance from the diagonal."""
        return float(np.max(np.abs(self.sample_quantiles - self.theoretical_quantiles)))


def qq_normal(sample) -> QQData:
    """Normal Q-Q data: sorted sample against quantiles at (i - 0.5) / n.

    The sample is standardized by the least-squares line through the quantile
    pairs (intercept = location, slope = scale), which maps a sample that
    already equals the theoretical quantiles onto the diagonal exactly.
    """
    arr = np.sort(np.asarray(sample, dtype=np.float64).ravel())
    n = arr.size
    if n < 2:
        raise ValueError(f"need at least 2 observations, got {n}")
    mean = float(arr.mean())
    std = float(arr.std())
    if std == 0.0:
        raise ValueError("zero-variance sample")

    positions = (np.arange(1, n + 1) - 0.5) / n
    theory = inverse_normal_cdf(positions)
    # theory has exact zero mean by symmetry; slope > 0 because both arrays
    # are sorted and the sample is non-constant.
    slope = float(np.dot(theory, arr - mean) / np.dot(theory, theory))
    standardized = (arr - mean) / slope
    return QQData(
        theoretical_quantiles=theory,
        sample_quantiles=standardized,
        sample_mean=mean,
        sample_std=std,
    )
