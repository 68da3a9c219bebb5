"""Training objectives: diffusion epsilon-matching, high-frequency
realness (MSE + anisotropic TV over the detail bands), consistency
(L1 + 1-SSIM on the reconstructed image), and their plain sum.

Every loss accepts numpy arrays (returning float) or autodiff Tensors
(returning a scalar Tensor), so the same definitions serve evaluation
and gradient-based training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import DivergenceError, ParamError, ShapeError
from .metrics import ssim

# Realness weights: MSE term 0.1, TV term 2.
DEFAULT_LAMBDA1 = 0.1
DEFAULT_LAMBDA2 = 2.0


@dataclass
class LossWeights:
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ParamError(
                f"loss weights must be non-negative, got ({self.lambda1}, {self.lambda2})"
            )


def _shape_of(x):
    return x.data.shape if isinstance(x, Tensor) else np.asarray(x).shape


def _check_same(a, b, name: str):
    sa, sb = _shape_of(a), _shape_of(b)
    if sa != sb:
        raise ShapeError(f"{name}: shapes {sa} and {sb} differ")


def _abs(x):
    return x.abs() if isinstance(x, Tensor) else np.abs(x)


def _scalar(x):
    return x if isinstance(x, Tensor) else float(x)


def l_diff(eps_hat, eps):
    """Mean squared error between predicted and true noise."""
    _check_same(eps_hat, eps, "l_diff")
    d = eps_hat - eps
    return _scalar((d * d).mean())


def tv(x):
    """Anisotropic total variation: mean over the (H-1)x(W-1) valid grid of
    |row forward difference| + |column forward difference|."""
    shape = _shape_of(x)
    if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
        raise ShapeError(f"tv expects an (H,W,C) image of at least 2x2, got {shape}")
    dr = x[1:, :-1, :] - x[:-1, :-1, :]
    dc = x[:-1, 1:, :] - x[:-1, :-1, :]
    return _scalar((_abs(dr) + _abs(dc)).mean())


def l_realness(vhd_sr, vhd_hr, w: LossWeights = LossWeights()):
    """lambda1 * sum-band MSE + lambda2 * sum-band TV over the SR detail bands."""
    if len(vhd_sr) != 3 or len(vhd_hr) != 3:
        raise ShapeError("l_realness expects (V,H,D) triples")
    mse_sum = None
    tv_sum = None
    for b_sr, b_hr in zip(vhd_sr, vhd_hr):
        _check_same(b_sr, b_hr, "l_realness")
        d = b_sr - b_hr
        m = (d * d).mean()
        t = tv(b_sr)
        mse_sum = m if mse_sum is None else mse_sum + m
        tv_sum = t if tv_sum is None else tv_sum + t
    return _scalar(mse_sum * w.lambda1 + tv_sum * w.lambda2)


def l_consistent(i_sr, i_hr):
    """Mean absolute error plus (1 - SSIM) against the reference image."""
    _check_same(i_sr, i_hr, "l_consistent")
    mae = _abs(i_sr - i_hr).mean()
    return _scalar(mae + (1.0 - ssim(i_sr, i_hr)))


def l_total(diff, realness, consistent):
    """Unweighted sum of the three training objectives."""
    for name, v in (("diff", diff), ("realness", realness), ("consistent", consistent)):
        val = v.data if isinstance(v, Tensor) else v
        if not np.all(np.isfinite(val)):
            raise DivergenceError(f"l_total: non-finite {name} term {val}")
    return diff + realness + consistent
