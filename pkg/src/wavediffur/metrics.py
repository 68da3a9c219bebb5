"""Full-reference image quality metrics: PSNR, SSIM, SAM, SRE, AG.

SSIM uses 8x8 windows with stride 1 (suited to 16-64 px images) and is
written against the arithmetic shared by numpy arrays and autodiff
tensors, so the training loss differentiates through the exact same
implementation the evaluator reports.

SRE is pinned here as the mean per-pixel relative spectral residual in
percent (lower is better); absolute comparability with other SRE
conventions is not claimed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import MetricError, ParamError, ShapeError

SSIM_WINDOW = 8
PSNR_CAP_DB = 100.0


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    sam: float
    sre: float
    ag: float


def _check_pair(pred, gt, name: str):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeError(f"{name}: pred shape {p.shape} != gt shape {g.shape}")
    if p.ndim != 3:
        raise ShapeError(f"{name}: expected (H,W,C) arrays, got shape {p.shape}")
    return p, g


def psnr(pred, gt, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE); exact match returns the 100 dB cap."""
    if peak <= 0:
        raise ParamError(f"peak must be positive, got {peak}")
    p, g = _check_pair(pred, gt, "psnr")
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _box_mean(x, win: int):
    """Mean over win x win windows at stride 1; works on ndarray and Tensor."""
    shape = x.data.shape if isinstance(x, Tensor) else x.shape
    H, W = shape[0], shape[1]
    oh, ow = H - win + 1, W - win + 1
    acc = None
    for u in range(win):
        for v in range(win):
            sl = x[u : u + oh, v : v + ow]
            acc = sl if acc is None else acc + sl
    return acc * (1.0 / (win * win))


def ssim(pred, gt, peak: float = 1.0):
    """Mean local SSIM, 8x8 windows, C1=(0.01*peak)^2, C2=(0.03*peak)^2.

    Accepts numpy arrays (returns float) or autodiff Tensors (returns a
    scalar Tensor for use inside training losses).
    """
    differentiable = isinstance(pred, Tensor) or isinstance(gt, Tensor)
    if not differentiable:
        pred, gt = _check_pair(pred, gt, "ssim")
    shape = pred.data.shape if isinstance(pred, Tensor) else pred.shape
    if shape[0] < SSIM_WINDOW or shape[1] < SSIM_WINDOW:
        raise ParamError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {shape[0]}x{shape[1]}"
        )
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_p = _box_mean(pred, SSIM_WINDOW)
    mu_g = _box_mean(gt, SSIM_WINDOW)
    var_p = _box_mean(pred * pred, SSIM_WINDOW) - mu_p * mu_p
    var_g = _box_mean(gt * gt, SSIM_WINDOW) - mu_g * mu_g
    cov = _box_mean(pred * gt, SSIM_WINDOW) - mu_p * mu_g
    num = (mu_p * mu_g * 2.0 + c1) * (cov * 2.0 + c2)
    den = (mu_p * mu_p + mu_g * mu_g + c1) * (var_p + var_g + c2)
    smap = num / den
    out = smap.mean()
    return out if differentiable else float(out)


def sam(pred, gt) -> float:
    """Mean per-pixel spectral angle in degrees; zero-norm pixels skipped."""
    p, g = _check_pair(pred, gt, "sam")
    if p.shape[2] < 2:
        raise MetricError(f"sam needs >= 2 channels, got {p.shape[2]}")
    dot = np.sum(p * g, axis=2)
    norm = np.sqrt(np.sum(p * p, axis=2)) * np.sqrt(np.sum(g * g, axis=2))
    valid = norm > 0
    if not valid.any():
        raise MetricError("sam undefined: every pixel has a zero-norm spectrum")
    cos = np.clip(dot[valid] / norm[valid], -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def sre(pred, gt) -> float:
    """Mean per-pixel relative spectral residual, in percent."""
    p, g = _check_pair(pred, gt, "sre")
    num = np.sqrt(np.sum((g - p) ** 2, axis=2))
    den = np.sqrt(np.sum(g * g, axis=2)) + 1e-8
    return float(100.0 * np.mean(num / den))


def ag(img) -> float:
    """Mean gradient magnitude sqrt((gx^2+gy^2)/2) with forward differences."""
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"ag expects an (H,W,C) image, got shape {x.shape}")
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ShapeError(f"ag needs at least 2x2 images, got {x.shape[0]}x{x.shape[1]}")
    gx = x[1:, :-1, :] - x[:-1, :-1, :]
    gy = x[:-1, 1:, :] - x[:-1, :-1, :]
    return float(np.mean(np.sqrt((gx * gx + gy * gy) / 2.0)))


def report(pred, gt, peak: float = 1.0) -> MetricReport:
    """All five metrics for one prediction/ground-truth pair."""
    return MetricReport(
        psnr=psnr(pred, gt, peak),
        ssim=ssim(pred, gt, peak),
        sam=sam(pred, gt),
        sre=sre(pred, gt),
        ag=ag(pred),
    )


CSV_COLUMNS = ["image_id", "scale", "psnr", "ssim", "sam", "sre", "ag"]


def write_metrics_csv(path, rows) -> None:
    """Write per-image metric rows sorted by image_id for diffability.

    Rows are (image_id, scale, MetricReport) triples.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for image_id, scale, rep in sorted(rows, key=lambda r: str(r[0])):
            writer.writerow(
                [image_id, scale]
                + [f"{v:.6f}" for v in (rep.psnr, rep.ssim, rep.sam, rep.sre, rep.ag)]
            )
