"""Noise-prediction server speaking the EPSN wire protocol."""

from .model import PredictError, TorchPredictor, zero_predictor
from .server import BridgeServer

__all__ = ["BridgeServer", "PredictError", "TorchPredictor", "zero_predictor"]
