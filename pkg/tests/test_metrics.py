import csv

import numpy as np
import pytest

from wavediffur.errors import MetricError, ParamError, ShapeError
from wavediffur.metrics import (
    MetricReport,
    ag,
    psnr,
    report,
    sam,
    sre,
    ssim,
    write_metrics_csv,
)


# -- brute-force oracles (independent double loops) --------------------------------------


def _psnr_oracle(p, g, peak=1.0):
    h, w, c = p.shape
    mse = 0.0
    for i in range(h):
        for j in range(w):
            for k in range(c):
                mse += (float(p[i, j, k]) - float(g[i, j, k])) ** 2
    mse /= h * w * c
    return 100.0 if mse == 0 else 10 * np.log10(peak * peak / mse)


def _ssim_oracle(p, g, win=8, peak=1.0):
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    h, w, ch = p.shape
    vals = []
    for i in range(h - win + 1):
        for j in range(w - win + 1):
            for k in range(ch):
                wp = p[i : i + win, j : j + win, k]
                wg = g[i : i + win, j : j + win, k]
                mp, mg = wp.mean(), wg.mean()
                vp, vg = (wp * wp).mean() - mp * mp, (wg * wg).mean() - mg * mg
                cov = (wp * wg).mean() - mp * mg
                vals.append(
                    ((2 * mp * mg + c1) * (2 * cov + c2))
                    / ((mp * mp + mg * mg + c1) * (vp + vg + c2))
                )
    return float(np.mean(vals))


def _sam_oracle(p, g):
    h, w, _ = p.shape
    angs = []
    for i in range(h):
        for j in range(w):
            num = float(np.dot(p[i, j], g[i, j]))
            den = float(np.linalg.norm(p[i, j]) * np.linalg.norm(g[i, j]))
            if den == 0:
                continue
            angs.append(np.degrees(np.arccos(np.clip(num / den, -1, 1))))
    return float(np.mean(angs))


def _sre_oracle(p, g):
    h, w, _ = p.shape
    vals = []
    for i in range(h):
        for j in range(w):
            vals.append(
                np.linalg.norm(g[i, j] - p[i, j]) / (np.linalg.norm(g[i, j]) + 1e-8)
            )
    return float(100.0 * np.mean(vals))


def _ag_oracle(x):
    h, w, c = x.shape
    vals = []
    for i in range(h - 1):
        for j in range(w - 1):
            for k in range(c):
                gx = x[i + 1, j, k] - x[i, j, k]
                gy = x[i, j + 1, k] - x[i, j, k]
                vals.append(np.sqrt((gx * gx + gy * gy) / 2.0))
    return float(np.mean(vals))


# -- psnr -------------------------------------------------------------------------------


def test_psnr_identity_cap(rng):
    x = rng.uniform(0, 1, (8, 8, 3))
    assert psnr(x, x) == 100.0


def test_psnr_constant_offset():
    gt = np.full((16, 16, 1), 0.4)
    assert np.isclose(psnr(gt + 0.1, gt, peak=1.0), 20.0, atol=1e-9)


def test_psnr_brute_force(rng):
    for _ in range(20):
        p = rng.uniform(0, 1, (6, 7, 3))
        g = rng.uniform(0, 1, (6, 7, 3))
        assert abs(psnr(p, g) - _psnr_oracle(p, g)) < 1e-6


def test_psnr_errors():
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4, 1)), np.zeros((4, 5, 1)))
    with pytest.raises(ParamError):
        psnr(np.zeros((4, 4, 1)), np.zeros((4, 4, 1)), peak=0.0)


# -- ssim ------------------------------------------------------------------------------


def test_ssim_identity(rng):
    x = rng.uniform(0, 1, (12, 12, 3))
    assert ssim(x, x) == 1.0


def test_ssim_anticorrelated_checkerboard():
    gt = np.indices((16, 16)).sum(axis=0) % 2
    gt = gt[:, :, None].astype(np.float64)
    assert ssim(1.0 - gt, gt) < 0.0


def test_ssim_constant_images_closed_form():
    a, b = 0.3, 0.6
    p = np.full((8, 8, 1), a)
    g = np.full((8, 8, 1), b)
    c1, c2 = 0.01**2, 0.03**2
    want = ((2 * a * b + c1) * c2) / ((a * a + b * b + c1) * c2)
    assert np.isclose(ssim(p, g), want, rtol=1e-9)


def test_ssim_symmetry(rng):
    p = rng.uniform(0, 1, (10, 10, 2))
    g = rng.uniform(0, 1, (10, 10, 2))
    assert abs(ssim(p, g) - ssim(g, p)) < 1e-9


def test_ssim_brute_force(rng):
    for _ in range(5):
        p = rng.uniform(0, 1, (10, 9, 2))
        g = rng.uniform(0, 1, (10, 9, 2))
        assert abs(ssim(p, g) - _ssim_oracle(p, g)) < 1e-9


def test_ssim_too_small():
    with pytest.raises(ParamError):
        ssim(np.zeros((4, 4, 1)), np.zeros((4, 4, 1)))


# -- sam -----------------------------------------------------------------------------


def test_sam_scale_invariance(rng):
    x = rng.uniform(0.1, 1, (8, 8, 3))
    assert sam(2.5 * x, x) < 1e-5


def test_sam_orthogonal_spectra():
    p = np.zeros((4, 4, 3))
    g = np.zeros((4, 4, 3))
    p[..., 0] = 1.0
    g[..., 1] = 1.0
    assert np.isclose(sam(p, g), 90.0, atol=1e-9)


def test_sam_brute_force(rng):
    for _ in range(20):
        p = rng.uniform(0, 1, (7, 6, 3))
        g = rng.uniform(0, 1, (7, 6, 3))
        assert abs(sam(p, g) - _sam_oracle(p, g)) < 1e-4


def test_sam_skips_zero_norm_pixels(rng):
    p = rng.uniform(0.1, 1, (4, 4, 3))
    g = rng.uniform(0.1, 1, (4, 4, 3))
    p2, g2 = p.copy(), g.copy()
    p2[0, 0] = 0.0  # this pixel must be skipped
    base = _sam_oracle(p2, g2)
    assert abs(sam(p2, g2) - base) < 1e-6


def test_sam_errors():
    with pytest.raises(MetricError):
        sam(np.zeros((4, 4, 1)), np.zeros((4, 4, 1)))  # needs >= 2 channels
    with pytest.raises(MetricError):
        sam(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))  # all zero-norm


# -- sre ------------------------------------------------------------------------------


def test_sre_identity(rng):
    x = rng.uniform(0.1, 1, (8, 8, 3))
    assert sre(x, x) == 0.0


def test_sre_zero_prediction(rng):
    g = rng.uniform(0.5, 1, (8, 8, 3))
    assert np.isclose(sre(np.zeros_like(g), g), 100.0, atol=1e-4)


def test_sre_brute_force(rng):
    for _ in range(20):
        p = rng.uniform(0, 1, (6, 6, 3))
        g = rng.uniform(0, 1, (6, 6, 3))
        assert abs(sre(p, g) - _sre_oracle(p, g)) < 1e-6


# -- ag -------------------------------------------------------------------------------


def test_ag_constant():
    assert ag(np.full((8, 8, 3), 0.3)) == 0.0


def test_ag_ramp_closed_form():
    s = 0.2
    img = (np.arange(10, dtype=np.float64)[:, None, None] * s) * np.ones((10, 10, 1))
    assert np.isclose(ag(img), s / np.sqrt(2), rtol=1e-9)


def test_ag_brute_force(rng):
    for _ in range(20):
        x = rng.uniform(0, 1, (7, 8, 2))
        assert abs(ag(x) - _ag_oracle(x)) < 1e-6


# -- report & csv ------------------------------------------------------------------------


def test_report_identity(rng):
    x = rng.uniform(0.1, 1, (9, 9, 3))
    rep = report(x, x)
    assert rep.psnr == 100.0 and rep.ssim == 1.0
    assert rep.sam < 1e-6 and rep.sre == 0.0
    assert rep.ag > 0


def test_csv_stable_order(tmp_path, rng):
    rows = []
    for name in ("zeta", "alpha", "mid"):
        x = rng.uniform(0.1, 1, (9, 9, 3))
        rows.append((name, 2, report(x, x)))
    out = tmp_path / "m.csv"
    write_metrics_csv(out, rows)
    with open(out) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["image_id", "scale", "psnr", "ssim", "sam", "sre", "ag"]
    assert [r[0] for r in got[1:]] == ["alpha", "mid", "zeta"]
    assert got[1][2] == "100.000000"
