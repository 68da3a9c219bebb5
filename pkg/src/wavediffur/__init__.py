"""Wavelet-domain cascaded diffusion ultra-resolution.

Decomposes images into Haar sub-bands, super-resolves the low-frequency
band with a projection-conditioned reverse diffusion sampler, restores
the high-frequency bands with a cross-scale-constrained predictor, and
iterates the x2 step up to the target magnification.
"""

from .cascade import CascadeConfig, plan_cascade, run_csp_wavediffur, run_wavediffur
from .losses import LossWeights, l_consistent, l_diff, l_realness, l_total, tv
from .metrics import MetricReport, ag, psnr, sam, sre, ssim
from .networks import (
    Condition,
    Models,
    NetConfig,
    ParamStore,
    backward,
    build_models,
    cross_attention,
    csp_encode,
    cshr_restore,
    denoiser_forward,
    upscale_hf,
)
from .sampler import (
    ProjectionParams,
    analytic_gaussian_eps,
    apply_projection,
    reverse_step_uncond,
    sample_conditional,
)
from .schedule import NoiseSchedule, make_schedule, q_sample, sigma_at
from .trainer import TrainConfig, fit, train_step
from .wavelet import WaveletBands, dwt2, idwt2

__version__ = "0.1.0"
