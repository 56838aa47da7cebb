"""Noise schedule and the three core diffusion-step equations.

The schedule fixes, for steps t = 1..T, the variance increments beta_t,
alpha_t = 1 - beta_t and the cumulative products alpha_bar_t.  Step index 0
is reserved for clean data (alpha_bar_0 == 1), so a reverse transition to
t = 0 returns the current clean-image estimate unchanged.

Images are plain numpy arrays of shape (height, width, channels); every
function here is pure and operates elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule beta_t with derived alpha_t and alpha_bar_t, t = 1..T.

    Arrays are index-shifted: ``beta[i]`` holds the value for step ``t = i+1``.
    Use :meth:`abar` for 0-based-step-safe lookup of alpha_bar.
    """

    total_steps: int
    beta: np.ndarray
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    def abar(self, t: int) -> float:
        """alpha_bar at step t, with alpha_bar_0 defined as 1."""
        if not 0 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside [0, {self.total_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_linear_schedule(total_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Arithmetic beta progression from beta_start to beta_end over total_steps entries."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(total_steps=total_steps, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def default_schedule() -> NoiseSchedule:
    # Standard pretrained-DDPM convention: T=1000, linear 1e-4 .. 0.02.
    return make_linear_schedule(1000, 1e-4, 0.02)


def _check_step(schedule: NoiseSchedule, t: int) -> None:
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def q_sample(schedule: NoiseSchedule, x0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
    """Forward-process sample: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    _check_step(schedule, t)
    _check_same_shape(x0, eps, "q_sample")
    abar = schedule.abar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def predict_x0(schedule: NoiseSchedule, x_t: np.ndarray, t: int, eps_theta: np.ndarray) -> np.ndarray:
    """Clean-image estimate from x_t and a noise prediction:
    (x_t - sqrt(1 - abar_t) * eps_theta) / sqrt(abar_t)."""
    _check_step(schedule, t)
    _check_same_shape(x_t, eps_theta, "predict_x0")
    abar = schedule.abar(t)
    return (x_t - np.sqrt(1.0 - abar) * eps_theta) / np.sqrt(abar)


def reverse_step(
    schedule: NoiseSchedule,
    x0_hat: np.ndarray,
    t_next: int,
    eps_theta: np.ndarray,
    eps_random: np.ndarray,
    eta: float,
) -> np.ndarray:
    """One reverse transition onto step t_next.

    Returns sqrt(abar_next) * x0_hat + sqrt(1 - abar_next) * mix, where the
    injected noise mixes fresh randomness against the estimated noise:
    mix = eta * eps_random + sqrt(1 - eta^2) * eps_theta.

    eta = 0 is the deterministic limit; eta = 1 never reads eps_theta (the
    output is bit-invariant to it) and re-noises from eps_random alone.
    t_next = 0 returns x0_hat unchanged.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    _check_same_shape(x0_hat, eps_theta, "reverse_step")
    _check_same_shape(x0_hat, eps_random, "reverse_step")
    if t_next == 0:
        return x0_hat.copy()
    abar = schedule.abar(t_next)
    if eta == 1.0:
        mix = eps_random
    else:
        mix = eta * eps_random + np.sqrt(1.0 - eta * eta) * eps_theta
    return np.sqrt(abar) * x0_hat + np.sqrt(1.0 - abar) * mix


def step_grid(schedule: NoiseSchedule, num_steps: int, start_step: int | None = None) -> np.ndarray:
    """Ascending uniform subsequence of 1..T with num_steps entries.

    With start_step set, it is snapped to the nearest grid entry and the grid
    is truncated to steps <= that entry; the truncated length is the number of
    denoiser calls a restoration run will make.
    """
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    grid = np.unique(np.round(np.linspace(1, schedule.total_steps, num_steps)).astype(int))
    if start_step is not None:
        if not 1 <= start_step <= schedule.total_steps:
            raise ValueError(f"start_step {start_step} outside [1, {schedule.total_steps}]")
        snapped = grid[np.argmin(np.abs(grid - start_step))]
        grid = grid[grid <= snapped]
    return grid
