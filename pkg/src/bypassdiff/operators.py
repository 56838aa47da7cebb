"""Linear degradation operators A and their Moore-Penrose pseudo-inverses.

Each operator maps a clean image of ``input_shape`` (H, W, C) to a degraded
tensor of ``output_shape`` and exposes the pseudo-inverse action pinv_apply.
All operators act per color channel and are immutable after construction, so
apply/pinv_apply are pure and thread-safe.

The pseudo-inverse structures:

* block-average downsampling: rows of A are orthogonal with squared norm
  1/s^2, so A+ replicates each low-res value into its s x s block and
  A A+ = I holds exactly;
* circular Gaussian blur: A is diagonalized by the 2-D DFT; A+ multiplies by
  conj(H)/|H|^2 on Fourier modes with |H| above a truncation threshold and
  zeroes the rest (truncated pseudo-inverse);
* compressed sensing: a row-orthonormalized Gaussian matrix applied to each
  flattened channel, so A+ is the transpose and A A+ = I.
"""

from __future__ import annotations

import numpy as np

# Fourier modes with |H| below this fraction of max|H| are dropped from the
# blur pseudo-inverse.
BLUR_TRUNCATION = 1e-3


class DegradationOperator:
    """Base class; concrete operators fill in _apply/_pinv per channel stack."""

    kind: str = "base"

    def __init__(self, input_shape: tuple[int, int, int], output_shape: tuple[int, int, int]):
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(output_shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape) != self.input_shape:
            raise ValueError(f"{self.kind}: expected input shape {self.input_shape}, got {x.shape}")
        return self._apply(np.asarray(x, dtype=np.float64))

    def pinv_apply(self, y: np.ndarray) -> np.ndarray:
        if tuple(y.shape) != self.output_shape:
            raise ValueError(f"{self.kind}: expected output shape {self.output_shape}, got {y.shape}")
        return self._pinv(np.asarray(y, dtype=np.float64))

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pinv(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        """JSON-serializable constructor spec (see cli module for the schema)."""
        raise NotImplementedError


class IdentityOperator(DegradationOperator):
    kind = "identity"

    def __init__(self, input_shape):
        super().__init__(input_shape, input_shape)

    def _apply(self, x):
        return x.copy()

    def _pinv(self, y):
        return y.copy()

    def config(self):
        return {"kind": self.kind, "input_shape": list(self.input_shape)}


class BlockAverageOperator(DegradationOperator):
    """s x s block-mean downsampling; pseudo-inverse is nearest-neighbor replication."""

    kind = "sr_average"

    def __init__(self, scale: int, input_shape):
        h, w, c = input_shape
        if scale < 1:
            raise ValueError(f"scale must be >= 1, got {scale}")
        if h % scale or w % scale:
            raise ValueError(f"scale {scale} must divide image dimensions {h}x{w}")
        self.scale = int(scale)
        super().__init__(input_shape, (h // scale, w // scale, c))

    def _apply(self, x):
        h, w, c = self.input_shape
        s = self.scale
        return x.reshape(h // s, s, w // s, s, c).mean(axis=(1, 3))

    def _pinv(self, y):
        s = self.scale
        return np.repeat(np.repeat(y, s, axis=0), s, axis=1)

    def config(self):
        return {"kind": self.kind, "scale": self.scale, "input_shape": list(self.input_shape)}


class CircularBlurOperator(DegradationOperator):
    """Circular (wrap-around) convolution with a normalized Gaussian kernel."""

    kind = "gaussian_blur"

    def __init__(self, sigma: float, radius: int, input_shape):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        if radius < 1:
            raise ValueError(f"radius must be >= 1, got {radius}")
        h, w, _ = input_shape
        if 2 * radius + 1 > min(h, w):
            raise ValueError(f"kernel diameter {2 * radius + 1} exceeds image size {h}x{w}")
        super().__init__(input_shape, input_shape)
        self.sigma = float(sigma)
        self.radius = int(radius)
        self.kernel = gaussian_kernel(sigma, radius)

        # Embed the kernel with its center at (0, 0) so the DFT diagonalizes A.
        pad = np.zeros((h, w))
        r = self.radius
        pad[:r + 1, :r + 1] = self.kernel[r:, r:]
        pad[:r + 1, -r:] = self.kernel[r:, :r]
        pad[-r:, :r + 1] = self.kernel[:r, r:]
        pad[-r:, -r:] = self.kernel[:r, :r]
        self._tf = np.fft.fft2(pad)

        mag = np.abs(self._tf)
        keep = mag > BLUR_TRUNCATION * mag.max()
        if not keep.any():
            raise ValueError("degenerate blur kernel: all Fourier modes truncated")
        self._tf_pinv = np.where(keep, np.conj(self._tf) / np.where(keep, mag**2, 1.0), 0.0)
        self.retained_modes = keep

    def _filter(self, x, tf):
        out = np.empty_like(x)
        for c in range(x.shape[2]):
            out[:, :, c] = np.fft.ifft2(np.fft.fft2(x[:, :, c]) * tf).real
        return out

    def _apply(self, x):
        return self._filter(x, self._tf)

    def _pinv(self, y):
        return self._filter(y, self._tf_pinv)

    def config(self):
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "radius": self.radius,
            "input_shape": list(self.input_shape),
        }


class CompressedSensingOperator(DegradationOperator):
    """Row-orthonormalized Gaussian measurement matrix applied per channel.

    Keeps ceil(ratio * n) rows for n = H * W; the matrix is regenerated
    deterministically from the seed so calibration and restoration always see
    the same A.  Measurements come back as an (m, 1, C) tensor.
    """

    kind = "compressed_sensing"

    def __init__(self, ratio: float, seed: int, input_shape):
        if not 0.0 < ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
        h, w, c = input_shape
        n = h * w
        m = int(np.ceil(ratio * n))
        super().__init__(input_shape, (m, 1, c))
        self.ratio = float(ratio)
        self.seed = int(seed)

        rng = np.random.Generator(np.random.Philox(key=np.uint64(self.seed)))
        gauss = rng.standard_normal((n, m))
        q, r = np.linalg.qr(gauss)
        # Sign-fix the QR factor so the matrix is unique given the seed.
        q *= np.sign(np.diag(r))
        self.matrix = q.T  # (m, n), orthonormal rows

    def _apply(self, x):
        h, w, c = self.input_shape
        flat = x.reshape(h * w, c)
        return (self.matrix @ flat).reshape(self.output_shape)

    def _pinv(self, y):
        h, w, c = self.input_shape
        m = self.output_shape[0]
        flat = y.reshape(m, c)
        return (self.matrix.T @ flat).reshape(self.input_shape)

    def config(self):
        return {
            "kind": self.kind,
            "ratio": self.ratio,
            "seed": self.seed,
            "input_shape": list(self.input_shape),
        }


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """(2r+1) x (2r+1) Gaussian kernel normalized to sum 1 (DC gain 1)."""
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g1, g1)
    return k / k.sum()


def make_identity(input_shape) -> IdentityOperator:
    return IdentityOperator(input_shape)


def make_sr(scale: int, input_shape) -> BlockAverageOperator:
    return BlockAverageOperator(scale, input_shape)


def make_blur(sigma: float, radius: int, input_shape) -> CircularBlurOperator:
    return CircularBlurOperator(sigma, radius, input_shape)


def make_cs(ratio: float, seed: int, input_shape) -> CompressedSensingOperator:
    return CompressedSensingOperator(ratio, seed, input_shape)


def apply(op: DegradationOperator, x: np.ndarray) -> np.ndarray:
    return op.apply(x)


def pinv_apply(op: DegradationOperator, y: np.ndarray) -> np.ndarray:
    return op.pinv_apply(y)


def operator_from_config(cfg: dict) -> DegradationOperator:
    """Inverse of DegradationOperator.config()."""
    kind = cfg.get("kind")
    shape = tuple(cfg["input_shape"])
    if kind == "identity":
        return make_identity(shape)
    if kind == "sr_average":
        return make_sr(int(cfg["scale"]), shape)
    if kind == "gaussian_blur":
        return make_blur(float(cfg["sigma"]), int(cfg["radius"]), shape)
    if kind == "compressed_sensing":
        return make_cs(float(cfg["ratio"]), int(cfg.get("seed", 0)), shape)
    raise ValueError(f"unknown operator kind: {kind!r}")
