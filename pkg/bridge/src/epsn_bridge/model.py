"""Noise predictors the server can put behind the wire.

A predictor is a callable (float32 array, t) -> float32 array of the same
shape.  The dry-run predictor needs nothing; the checkpoint predictor
wraps a saved torch module and hides the layout conventions diffusion
UNets commonly use.
"""

import numpy as np


class PredictError(Exception):
    """The predictor could not produce a tensor for this request."""


def zero_predictor(x: np.ndarray, t: int) -> np.ndarray:
    return np.zeros_like(x, dtype=np.float32)


class TorchPredictor:
    """Runs a saved torch module as eps(x_t, t).

    Accepts a TorchScript archive or a pickled ``nn.Module``.  Plain
    state_dicts are rejected: reconstructing an architecture from weights
    alone is checkpoint conversion, which this bridge does not do.

    Rank-3 requests (H, W, C) are fed to the network as (1, C, H, W) and
    the answer is mapped back; other ranks pass through unchanged.  A
    network that predicts noise and variance stacked along the channel
    axis (2C output channels) contributes its first C channels.
    """

    def __init__(self, path: str):
        try:
            import torch
        except ImportError:
            raise PredictError("torch is not installed; only --dry-run is available")
        self._torch = torch
        try:
            self._model = torch.jit.load(path, map_location="cpu")
        except Exception:
            try:
                loaded = torch.load(path, map_location="cpu", weights_only=False)
            except Exception as exc:
                raise PredictError(f"cannot load checkpoint {path}: {exc}")
            if isinstance(loaded, dict):
                raise PredictError(
                    f"{path} holds a bare state_dict; export the full module instead")
            self._model = loaded
        self._model.eval()

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray:
        torch = self._torch
        hwc = x.ndim == 3
        arr = np.transpose(x, (2, 0, 1))[None] if hwc else x
        with torch.no_grad():
            try:
                out = self._model(torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32)),
                                  torch.tensor([int(t)], dtype=torch.int64))
            except Exception as exc:
                raise PredictError(f"model forward failed: {exc}")
        out = out.detach().cpu().numpy().astype(np.float32, copy=False)
        if hwc:
            if out.ndim != 4 or out.shape[0] != 1:
                raise PredictError(f"model returned shape {out.shape} for a single image")
            channels = x.shape[2]
            if out.shape[1] == 2 * channels:
                out = out[:, :channels]
            if out.shape[1] != channels:
                raise PredictError(
                    f"model returned {out.shape[1]} channels for {channels}-channel input")
            out = np.transpose(out[0], (1, 2, 0))
        if out.shape != x.shape:
            raise PredictError(f"model returned shape {out.shape}, request was {x.shape}")
        return out
