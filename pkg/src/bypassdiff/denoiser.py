"""Noise-prediction handles: the eps(x_t, t) contract.

A denoiser maps a noisy image at step t to a prediction of the standard
normal noise it contains.  The oracle kinds are exact Bayes denoisers for
synthetic Gaussian / Gaussian-mixture priors, which makes the whole
restoration pipeline verifiable in closed form without a trained network.
The external kind forwards requests to a tensor server over TCP (see
``bypassdiff.epsn`` for the wire format); any failure there is fatal for the
run, never silently absorbed.
"""

from __future__ import annotations

import numpy as np

from .schedule import NoiseSchedule
from . import epsn


class DenoiserError(RuntimeError):
    """External denoiser transport or protocol failure."""


class Denoiser:
    kind: str = "base"

    def epsilon(self, x_t: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError


class ZeroDenoiser(Denoiser):
    """Predicts no noise; turns predict_x0 into plain rescaling by 1/sqrt(abar)."""

    kind = "zero"

    def epsilon(self, x_t, t, schedule):
        if not 1 <= t <= schedule.total_steps:
            raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
        return np.zeros_like(x_t)

    def config(self):
        return {"kind": self.kind}


class GaussianOracleDenoiser(Denoiser):
    """Exact Bayes denoiser for the prior x0 ~ Normal(mean, var * I).

    The posterior mean of x0 given x_t is

        m(x_t) = (sqrt(abar) * var * x_t + (1 - abar) * mean)
                 / (abar * var + 1 - abar)

    and the returned noise estimate is the one predict_x0 inverts back to m:
    eps = (x_t - sqrt(abar) * m) / sqrt(1 - abar).
    """

    kind = "oracle_gaussian"

    def __init__(self, mean, var: float):
        if var < 0:
            raise ValueError(f"prior variance must be >= 0, got {var}")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.var = float(var)

    def posterior_mean(self, x_t, t, schedule):
        abar = schedule.abar(t)
        return (np.sqrt(abar) * self.var * x_t + (1.0 - abar) * self.mean) / (
            abar * self.var + 1.0 - abar
        )

    def epsilon(self, x_t, t, schedule):
        if not 1 <= t <= schedule.total_steps:
            raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
        abar = schedule.abar(t)
        m = self.posterior_mean(x_t, t, schedule)
        return (x_t - np.sqrt(abar) * m) / np.sqrt(1.0 - abar)

    def config(self):
        mean = self.mean.tolist() if self.mean.ndim else float(self.mean)
        return {"kind": self.kind, "mean": mean, "var": self.var}


class GmmOracleDenoiser(Denoiser):
    """Exact Bayes denoiser for an isotropic Gaussian-mixture prior.

    Components are (weight_i, mean_i, var_i) with image-shaped means.  The
    posterior mean is the responsibility-weighted combination of the
    per-component Gaussian posterior means, with responsibilities

        w_i  propto  weight_i * Normal(x_t; sqrt(abar) mean_i,
                                        (abar var_i + 1 - abar) I)

    evaluated over the whole image and normalized via log-sum-exp.
    """

    kind = "oracle_gmm"

    def __init__(self, means, variances, weights):
        self.means = [np.asarray(m, dtype=np.float64) for m in means]
        self.variances = [float(v) for v in variances]
        self.weights = np.asarray(weights, dtype=np.float64)
        if not (len(self.means) == len(self.variances) == len(self.weights)):
            raise ValueError("means, variances, weights must have equal length")
        if len(self.means) == 0:
            raise ValueError("mixture needs at least one component")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        self.weights = self.weights / self.weights.sum()

    def responsibilities(self, x_t, t, schedule):
        abar = schedule.abar(t)
        d = x_t.size
        log_post = np.empty(len(self.means))
        for i, (mu, var) in enumerate(zip(self.means, self.variances)):
            v = abar * var + 1.0 - abar
            sq = np.sum((x_t - np.sqrt(abar) * mu) ** 2)
            log_post[i] = np.log(self.weights[i]) - 0.5 * (d * np.log(2.0 * np.pi * v) + sq / v)
        log_post -= log_post.max()
        w = np.exp(log_post)
        return w / w.sum()

    def posterior_mean(self, x_t, t, schedule):
        abar = schedule.abar(t)
        w = self.responsibilities(x_t, t, schedule)
        m = np.zeros_like(x_t)
        for wi, mu, var in zip(w, self.means, self.variances):
            mi = (np.sqrt(abar) * var * x_t + (1.0 - abar) * mu) / (abar * var + 1.0 - abar)
            m += wi * mi
        return m

    def epsilon(self, x_t, t, schedule):
        if not 1 <= t <= schedule.total_steps:
            raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
        abar = schedule.abar(t)
        m = self.posterior_mean(x_t, t, schedule)
        return (x_t - np.sqrt(abar) * m) / np.sqrt(1.0 - abar)

    def config(self):
        return {
            "kind": self.kind,
            "means": [m.tolist() for m in self.means],
            "variances": self.variances,
            "weights": self.weights.tolist(),
        }


class ExternalDenoiser(Denoiser):
    """Forwards eps requests to a tensor server speaking the EPSN protocol.

    One request is in flight per connection; callers wanting parallelism open
    multiple handles.  Transport errors, protocol violations, and non-finite
    responses raise DenoiserError.
    """

    kind = "external"

    def __init__(self, address: str):
        self.address = address
        self._client = None

    def _connect(self):
        if self._client is None:
            try:
                self._client = epsn.Client(self.address)
            except OSError as exc:
                raise DenoiserError(f"cannot reach denoiser at {self.address}: {exc}") from exc
        return self._client

    def epsilon(self, x_t, t, schedule):
        if not 1 <= t <= schedule.total_steps:
            raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
        client = self._connect()
        try:
            out = client.request(x_t, t)
        except (OSError, epsn.ProtocolError) as exc:
            self.close()
            raise DenoiserError(f"denoiser request failed: {exc}") from exc
        if out.shape != x_t.shape:
            self.close()
            raise DenoiserError(f"denoiser returned shape {out.shape}, expected {x_t.shape}")
        if not np.isfinite(out).all():
            self.close()
            raise DenoiserError("denoiser returned non-finite values")
        return out.astype(np.float64)

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def config(self):
        return {"kind": self.kind, "address": self.address}


def denoiser_from_config(cfg: dict) -> Denoiser:
    kind = cfg.get("kind")
    if kind == "zero":
        return ZeroDenoiser()
    if kind == "oracle_gaussian":
        return GaussianOracleDenoiser(mean=np.asarray(cfg.get("mean", 0.0)), var=float(cfg.get("var", 1.0)))
    if kind == "oracle_gmm":
        return GmmOracleDenoiser(cfg["means"], cfg["variances"], cfg["weights"])
    if kind == "external":
        return ExternalDenoiser(cfg["address"])
    raise ValueError(f"unknown denoiser kind: {kind!r}")
