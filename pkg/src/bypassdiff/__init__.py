"""Zero-shot image restoration by diffusion null-space sampling.

The library restores a degraded observation y = A(x) by steering a reverse
diffusion trajectory: at every step the range-space component of the current
clean-image estimate is replaced by the pseudo-inverse reconstruction, so the
output agrees with y by construction.  A calibration pass can locate an
intermediate step whose approximate input is statistically indistinguishable
from the true trajectory, letting restoration skip the earlier steps entirely.
"""

from .bypass import (
    CalibrationReport,
    StepDiagnostic,
    approximate_input,
    calibrate_bypass_step,
    dagostino_k2,
    residual,
    std_gap_ok,
)
from .denoiser import (
    Denoiser,
    DenoiserError,
    ExternalDenoiser,
    GaussianOracleDenoiser,
    GmmOracleDenoiser,
    ZeroDenoiser,
    denoiser_from_config,
)
from .io import load_image, load_tensor, save_image, save_qq_csv, save_tensor
from .metrics import QQData, inverse_normal_cdf, psnr, qq_normal, ssim
from .operators import (
    BlockAverageOperator,
    CircularBlurOperator,
    CompressedSensingOperator,
    DegradationOperator,
    IdentityOperator,
    apply,
    gaussian_kernel,
    make_blur,
    make_cs,
    make_identity,
    make_sr,
    operator_from_config,
    pinv_apply,
)
from .restoration import RestorationConfig, ddnm_project, restore
from .rng import gaussian_field, init_tag, step_tag
from .schedule import (
    NoiseSchedule,
    default_schedule,
    make_linear_schedule,
    predict_x0,
    q_sample,
    reverse_step,
    step_grid,
)

__version__ = "1.0.0"

__all__ = [
    "CalibrationReport",
    "StepDiagnostic",
    "approximate_input",
    "calibrate_bypass_step",
    "dagostino_k2",
    "residual",
    "std_gap_ok",
    "Denoiser",
    "DenoiserError",
    "ExternalDenoiser",
    "GaussianOracleDenoiser",
    "GmmOracleDenoiser",
    "ZeroDenoiser",
    "denoiser_from_config",
    "load_image",
    "load_tensor",
    "save_image",
    "save_qq_csv",
    "save_tensor",
    "QQData",
    "inverse_normal_cdf",
    "psnr",
    "qq_normal",
    "ssim",
    "BlockAverageOperator",
    "CircularBlurOperator",
    "CompressedSensingOperator",
    "DegradationOperator",
    "IdentityOperator",
    "apply",
    "gaussian_kernel",
    "make_blur",
    "make_cs",
    "make_identity",
    "make_sr",
    "operator_from_config",
    "pinv_apply",
    "RestorationConfig",
    "ddnm_project",
    "restore",
    "gaussian_field",
    "init_tag",
    "step_tag",
    "NoiseSchedule",
    "default_schedule",
    "make_linear_schedule",
    "predict_x0",
    "q_sample",
    "reverse_step",
    "step_grid",
    "__version__",
]
