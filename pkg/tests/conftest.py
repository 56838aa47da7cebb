"""Shared synthetic-image helpers for the test suite."""

import numpy as np

from bypassdiff.rng import gaussian_field


def blob_image(seed, shape=(32, 32, 3), blocks=6):
    """Piecewise-constant test image with a few random rectangles.

    Deliberately non-Gaussian pixel statistics, so bypass calibration has
    something real to measure.
    """
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 999], dtype=np.uint64)))
    h, w, c = shape
    img = np.full(shape, -0.4)
    for _ in range(blocks):
        y0, x0 = gen.integers(0, h - 4), gen.integers(0, w - 4)
        hh, ww = gen.integers(4, h - y0 + 1), gen.integers(4, w - x0 + 1)
        img[y0:y0 + hh, x0:x0 + ww, :] = gen.uniform(-0.8, 0.8, size=c)
    return img


def smooth_field(seed, shape, cutoff=2, amp=0.7):
    """Low-pass-filtered Gaussian field, rescaled to peak amplitude amp."""
    raw = gaussian_field(seed, 0, shape)
    f = np.fft.fft2(raw, axes=(0, 1))
    h, w = shape[:2]
    fy = np.minimum(np.arange(h), h - np.arange(h))
    fx = np.minimum(np.arange(w), w - np.arange(w))
    mask = (fy[:, None] <= cutoff) & (fx[None, :] <= cutoff)
    s = np.fft.ifft2(f * mask[:, :, None], axes=(0, 1)).real
    return amp * s / np.abs(s).max()
