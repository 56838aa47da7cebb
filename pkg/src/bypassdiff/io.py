"""File formats: PNG images in model space, NTF tensors, Q-Q CSV."""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

NTF_MAGIC = b"NTF1"
_NTF_MAX_RANK = 8
_NTF_MAX_ELEMENTS = 1 << 28


def load_image(path) -> np.ndarray:
    """Read a PNG into model space: float64 (H, W, C) in [-1, 1].

    8-bit value v maps to v / 127.5 - 1.  Grayscale files keep one channel;
    everything else is converted to RGB.
    """
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 127.5 - 1.0


def save_image(path, x: np.ndarray) -> None:
    """Write a model-space array to 8-bit PNG, clamping to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1) or (H, W, 3), got {x.shape}")
    v = np.clip((np.clip(x, -1.0, 1.0) + 1.0) * 127.5, 0.0, 255.0)
    v = np.rint(v).astype(np.uint8)
    if v.shape[2] == 1:
        Image.fromarray(v[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(v, mode="RGB").save(path, format="PNG")


def save_tensor(path, x: np.ndarray) -> None:
    """Write an array as NTF: magic, u32 rank, u32 dims, float32 payload.

    Integers and floats are little-endian.
    """
    x = np.ascontiguousarray(x, dtype="<f4")
    if x.ndim > _NTF_MAX_RANK:
        raise ValueError(f"rank {x.ndim} exceeds limit {_NTF_MAX_RANK}")
    with open(path, "wb") as f:
        f.write(NTF_MAGIC)
        f.write(struct.pack("<I", x.ndim))
        f.write(struct.pack(f"<{x.ndim}I", *x.shape))
        f.write(x.tobytes())


def load_tensor(path) -> np.ndarray:
    """Read an NTF file back into a float32 array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != NTF_MAGIC:
        raise ValueError(f"{path}: not an NTF file")
    (rank,) = struct.unpack_from("<I", data, 4)
    if rank > _NTF_MAX_RANK:
        raise ValueError(f"{path}: rank {rank} exceeds limit {_NTF_MAX_RANK}")
    header_end = 8 + 4 * rank
    if len(data) < header_end:
        raise ValueError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    count = 1
    for d in dims:
        count *= d
    if count > _NTF_MAX_ELEMENTS:
        raise ValueError(f"{path}: element count {count} exceeds limit")
    if len(data) != header_end + 4 * count:
        raise ValueError(f"{path}: payload size mismatch")
    return np.frombuffer(data, dtype="<f4", offset=header_end).reshape(dims).copy()


def save_qq_csv(path, qq) -> None:
    """Write quantile pairs as CSV with a 'theoretical,sample' header."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("theoretical,sample\n")
        for t, s in zip(qq.theoretical_quantiles, qq.sample_quantiles):
            f.write(f"{t:.9g},{s:.9g}\n")
