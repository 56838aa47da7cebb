"""Quick-bypass construction and the offline search for the start step.

Restoration can begin at an intermediate step t from the approximation

    x~_t = sqrt(abar_t) * pinv(y) + sqrt(1 - abar_t) * eps

instead of from pure noise, provided x~_t is statistically indistinguishable
from a true forward-process state x_t.  Writing x_t = sqrt(abar_t) * pinv(y)
+ residual, the residual

    sqrt(abar_t) * (x0 - pinv(y)) + sqrt(1 - abar_t) * eps

must look like the pure scheduled noise it replaces.  Two criteria decide
that: an omnibus skewness/kurtosis normality test, and a cap on the gap
between the residual's standard deviation and sqrt(1 - abar_t).  The
calibration scan finds, per sample, the smallest t where both hold, and
averages across the calibration set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .operators import DegradationOperator
from .schedule import NoiseSchedule, q_sample

DEFAULT_STD_THRESHOLD = 0.001
DEFAULT_ALPHA = 0.05

# t-block size for the vectorized criteria scan, sized so a block of
# residuals stays a few MB regardless of image size.
_SCAN_BLOCK_ELEMENTS = 1 << 22


def approximate_input(
    schedule: NoiseSchedule,
    op: DegradationOperator,
    y: np.ndarray,
    t: int,
    eps: np.ndarray,
) -> np.ndarray:
    """Bypass start state: the forward process applied to pinv(y) at step t."""
    return q_sample(schedule, op.pinv_apply(y), t, eps)


def residual(
    schedule: NoiseSchedule,
    op: DegradationOperator,
    x0: np.ndarray,
    y: np.ndarray,
    t: int,
    eps: np.ndarray,
) -> np.ndarray:
    """The part of x_t not explained by the bypass approximation:
    sqrt(abar_t) * (x0 - pinv(y)) + sqrt(1 - abar_t) * eps."""
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
    pinv_y = op.pinv_apply(y)
    if x0.shape != pinv_y.shape or eps.shape != pinv_y.shape:
        raise ValueError("residual: x0, pinv(y) and eps shapes must agree")
    abar = schedule.abar(t)
    return np.sqrt(abar) * (x0 - pinv_y) + np.sqrt(1.0 - abar) * eps


def _moment_stats(samples: np.ndarray):
    """Per-row (mean-centered) std, skewness g1 and kurtosis b2 = m4/m2^2."""
    mean = samples.mean(axis=-1, keepdims=True)
    d = samples - mean
    m2 = np.mean(d * d, axis=-1)
    m3 = np.mean(d * d * d, axis=-1)
    m4 = np.mean(d * d * d * d, axis=-1)
    if np.any(m2 <= 0.0):
        raise ValueError("zero-variance sample")
    return np.sqrt(m2), m3 / m2**1.5, m4 / (m2 * m2)


def _skew_z(g1: np.ndarray, n: int) -> np.ndarray:
    # Transformed sample skewness; asymptotically standard normal under
    # normality (D'Agostino 1970 correction).
    y = g1 * np.sqrt(((n + 1.0) * (n + 3.0)) / (6.0 * (n - 2.0)))
    beta2 = (
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0))
    )
    w2 = -1.0 + np.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / np.sqrt(0.5 * np.log(w2))
    alpha = np.sqrt(2.0 / (w2 - 1.0))
    return delta * np.arcsinh(y / alpha)


def _kurt_z(b2: np.ndarray, n: int) -> np.ndarray:
    # Transformed sample kurtosis (Anscombe-Glynn 1983 cube-root correction).
    e_b2 = 3.0 * (n - 1.0) / (n + 1.0)
    var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) ** 2 * (n + 3.0) * (n + 5.0))
    x = (b2 - e_b2) / np.sqrt(var_b2)
    sqrt_beta1 = (
        6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * np.sqrt(6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0)))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + np.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    denom = 1.0 + x * np.sqrt(2.0 / (a - 4.0))
    term = np.sign(denom) * np.cbrt((1.0 - 2.0 / a) / np.abs(denom))
    return ((1.0 - 2.0 / (9.0 * a)) - term) / np.sqrt(2.0 / (9.0 * a))


def _k2_batch(samples: np.ndarray):
    """Omnibus statistics for each row of a (batch, n) array."""
    n = samples.shape[-1]
    std, g1, b2 = _moment_stats(samples)
    z1 = _skew_z(g1, n)
    z2 = _kurt_z(b2, n)
    k2 = z1 * z1 + z2 * z2
    # Survival function of chi-square with 2 dof.
    p = np.exp(-0.5 * k2)
    return k2, p, z1, z2, std


def dagostino_k2(sample) -> tuple[float, float, float, float]:
    """Omnibus normality statistic K^2 = Z_skew^2 + Z_kurt^2 and its p-value.

    Returns (k2, p_value, skew_z, kurt_z).  Needs n >= 20 so both component
    transforms are defined.
    """
    arr = np.asarray(sample, dtype=np.float64).ravel()
    if arr.size < 20:
        raise ValueError(f"need at least 20 observations, got {arr.size}")
    k2, p, z1, z2, _ = _k2_batch(arr[None, :])
    return float(k2[0]), float(p[0]), float(z1[0]), float(z2[0])


def std_gap_ok(
    residual_values: np.ndarray,
    schedule: NoiseSchedule,
    t: int,
    k: float = DEFAULT_STD_THRESHOLD,
) -> tuple[bool, float]:
    """Criterion 2: |std(residual) - sqrt(1 - abar_t)| < k."""
    if k <= 0:
        raise ValueError(f"threshold k must be positive, got {k}")
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"step {t} outside [1, {schedule.total_steps}]")
    gap = abs(float(np.std(residual_values)) - np.sqrt(1.0 - schedule.abar(t)))
    return gap < k, gap


@dataclass
class StepDiagnostic:
    t: int
    k2: float
    p_value: float
    std_gap: float


@dataclass
class CalibrationReport:
    task_id: str
    schedule_id: str
    min_steps: list[int]              # per-sample minimal passing step
    bypass_step: int                  # rounded mean, clamped to [1, T]
    threshold_k: float
    alpha: float
    sample_count: int
    unsatisfied: list[int] = field(default_factory=list)  # samples stuck at T
    diagnostics: list[list[StepDiagnostic]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "task_id": self.task_id,
            "schedule_id": self.schedule_id,
            "min_steps": list(map(int, self.min_steps)),
            "bypass_step": int(self.bypass_step),
            "threshold_k": self.threshold_k,
            "alpha": self.alpha,
            "sample_count": self.sample_count,
            "unsatisfied": list(map(int, self.unsatisfied)),
            "diagnostics": [
                [[d.t, d.k2, d.p_value, d.std_gap] for d in per_sample]
                for per_sample in self.diagnostics
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationReport":
        return cls(
            task_id=data["task_id"],
            schedule_id=data["schedule_id"],
            min_steps=[int(v) for v in data["min_steps"]],
            bypass_step=int(data["bypass_step"]),
            threshold_k=float(data["threshold_k"]),
            alpha=float(data["alpha"]),
            sample_count=int(data["sample_count"]),
            unsatisfied=[int(v) for v in data.get("unsatisfied", [])],
            diagnostics=[
                [StepDiagnostic(int(t), float(k2), float(p), float(g)) for t, k2, p, g in per_sample]
                for per_sample in data.get("diagnostics", [])
            ],
        )


def _scan_minimal_step(schedule, discrepancy, eps, k, alpha, per_channel):
    """Smallest t where both criteria pass for one (discrepancy, eps) pair.

    The scan is linear in t (the criteria are not provably monotone per
    sample) but evaluated in vectorized t-blocks with early exit.  Channels
    are pooled into one sample unless per_channel is set, in which case every
    channel must pass on its own.
    """
    total = schedule.total_steps
    sqrt_abar = np.sqrt(np.concatenate(([1.0], schedule.alpha_bar)))
    sqrt_1m = np.sqrt(1.0 - np.concatenate(([1.0], schedule.alpha_bar)))

    if per_channel:
        channels = discrepancy.shape[-1]
        d2 = discrepancy.reshape(-1, channels).T      # (C, n)
        e2 = eps.reshape(-1, channels).T
    else:
        d2 = discrepancy.reshape(1, -1)
        e2 = eps.reshape(1, -1)
    n = d2.shape[1]
    if n < 20:
        raise ValueError(f"need at least 20 values per tested sample, got {n}")

    block = max(1, _SCAN_BLOCK_ELEMENTS // (n * d2.shape[0]))
    diags: list[StepDiagnostic] = []
    for start in range(1, total + 1, block):
        ts = np.arange(start, min(start + block - 1, total) + 1)
        a = sqrt_abar[ts]            # (B,)
        b = sqrt_1m[ts]
        # residuals for the whole block: (B, C, n)
        res = a[:, None, None] * d2[None, :, :] + b[:, None, None] * e2[None, :, :]
        k2, p, _, _, std = _k2_batch(res)
        gap = np.abs(std - b[:, None])
        ok = np.all((p >= alpha) & (gap < k), axis=1)
        for j, t in enumerate(ts):
            # pooled diagnostics report the first (only) channel row
            diags.append(StepDiagnostic(int(t), float(k2[j, 0]), float(p[j, 0]), float(gap[j, 0])))
            if ok[j]:
                return int(t), diags, True
    return total, diags, False


def calibrate_bypass_step(
    calibration_pairs,
    schedule: NoiseSchedule,
    op: DegradationOperator,
    k: float = DEFAULT_STD_THRESHOLD,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    per_channel: bool = False,
    task_id: str = "",
    keep_diagnostics: bool = True,
) -> CalibrationReport:
    """Offline search for the averaged bypass step over (x0, y) pairs.

    One noise draw per sample (fresh draws per t would make minimality
    ill-defined), keyed by (seed, sample index).  Samples where no t <= T
    satisfies both criteria contribute t_i = T and are flagged.
    """
    pairs = list(calibration_pairs)
    if not pairs:
        raise ValueError("calibration set is empty")
    if k <= 0:
        raise ValueError(f"threshold k must be positive, got {k}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")

    min_steps: list[int] = []
    unsatisfied: list[int] = []
    diagnostics: list[list[StepDiagnostic]] = []
    for i, (x0, y) in enumerate(pairs):
        discrepancy = np.asarray(x0, dtype=np.float64) - op.pinv_apply(y)
        eps = rng.gaussian_field(seed, i, discrepancy.shape)
        t_i, diags, satisfied = _scan_minimal_step(schedule, discrepancy, eps, k, alpha, per_channel)
        min_steps.append(t_i)
        if not satisfied:
            unsatisfied.append(i)
        if keep_diagnostics:
            diagnostics.append(diags)

    t_star = int(np.clip(round(float(np.mean(min_steps))), 1, schedule.total_steps))
    return CalibrationReport(
        task_id=task_id or op.kind,
        schedule_id=f"linear-T{schedule.total_steps}",
        min_steps=min_steps,
        bypass_step=t_star,
        threshold_k=k,
        alpha=alpha,
        sample_count=len(pairs),
        unsatisfied=unsatisfied,
        diagnostics=diagnostics,
    )
