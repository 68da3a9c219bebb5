"""Built-in invariant suite behind `wavediffur selftest`.

Each check is a compact, seeded version of a module oracle: wavelet
round-trip and energy conservation, schedule marginals, analytic-score
sampling, finite-difference gradient checks, and metric brute-force
agreement. Prints one pass/fail line per check.
"""

from __future__ import annotations

import numpy as np

from . import metrics
from .networks import Condition, NetConfig, ParamStore, backward, csp_encode
from .sampler import ProjectionParams, analytic_gaussian_eps, sample_conditional
from .schedule import make_schedule, q_sample
from .wavelet import dwt2, idwt2


def _check_wavelet() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst_rt, worst_en = 0.0, 0.0
    for _ in range(50):
        x = rng.standard_normal((16, 16, 3)).astype(np.float32)
        bands = dwt2(x)
        rt = np.max(np.abs(idwt2(bands) - x))
        ex = float(np.sum(x.astype(np.float64) ** 2))
        eb = sum(float(np.sum(np.asarray(b, np.float64) ** 2)) for b in (bands.a, bands.v, bands.h, bands.d))
        worst_rt = max(worst_rt, float(rt))
        worst_en = max(worst_en, abs(eb - ex) / ex)
    ok = worst_rt < 1e-5 and worst_en < 1e-4
    return ok, f"round-trip max err {worst_rt:.2e}, energy rel err {worst_en:.2e}"


def _check_schedule() -> tuple[bool, str]:
    sched = make_schedule()
    rng = np.random.default_rng(11)
    x0 = np.full((100, 100, 1), 0.5, np.float32)
    xT = q_sample(x0, sched.T - 1, rng.standard_normal(x0.shape).astype(np.float32), sched)
    mean, std = float(xT.mean()), float(xT.std())
    ok = abs(mean) < 0.02 and abs(std - 1.0) < 0.02
    return ok, f"x_T mean {mean:+.4f}, std {std:.4f}"


def _check_sampler() -> tuple[bool, str]:
    sched = make_schedule(T=200, beta_min=5e-4, beta_max=0.1)
    mu, var0 = 3.0, 0.25
    shape = (4000, 1, 1)
    cond = Condition(lf=np.full(shape, mu, np.float32))
    oracle = lambda x, t, c: analytic_gaussian_eps(x, t, mu, var0, sched)
    out = sample_conditional(shape, cond, oracle, sched, ProjectionParams(0.0, False), seed=3)
    mean, var = float(out.mean()), float(out.var())
    ok = abs(mean - mu) < 0.05 and abs(var - var0) / var0 < 0.10
    return ok, f"sample mean {mean:.4f}, var {var:.4f}"


def _fd_check(loss_fn, params: ParamStore, names, rng, n_probe: int = 12) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    worst = 0.0
    loss = loss_fn()
    backward(loss, params)
    grads = {name: params[name].grad.copy() for name in names}
    h = 1e-4
    for name in names:
        p = params[name]
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            lp = float(loss_fn().data)
            flat[i] = keep - h
            lm = float(loss_fn().data)
            flat[i] = keep
            fd = (lp - lm) / (2 * h)
            an = float(grads[name].reshape(-1)[i])
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
    return worst


def _check_gradients() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    cfg = NetConfig(heads=4, base_width=8, csp_width=8, emb_dim=8)
    lr = rng.standard_normal((8, 8, 2))
    ref = rng.standard_normal((12, 12, 2))
    weights = rng.standard_normal((8, 8, 2))

    seed32 = ParamStore(seed=1)
    csp_encode(lr, ref, seed32, cfg)  # materialize architecture
    params = seed32.astype(np.float64)
    for _, p in params.items():  # randomize zero-initialized heads
        if not p.data.any():
            p.data = rng.standard_normal(p.data.shape) * 0.05

    def loss_fn():
        cond = csp_encode(lr, ref, params, cfg)
        return (cond.lf * weights).sum() + (cond.hf[0] * weights).sum()

    names = [n for n in params.names() if n.startswith("csp.")]
    worst = _fd_check(loss_fn, params, names, rng, n_probe=4)
    return worst < 1e-4, f"csp encoder max rel grad err {worst:.2e}"


def _check_metrics() -> tuple[bool, str]:
    rng = np.random.default_rng(13)
    worst_psnr, worst_sam = 0.0, 0.0
    for _ in range(20):
        p = rng.uniform(0, 1, (9, 9, 3))
        g = rng.uniform(0, 1, (9, 9, 3))
        mse = 0.0
        for i in range(9):
            for j in range(9):
                for c in range(3):
                    mse += (p[i, j, c] - g[i, j, c]) ** 2
        mse /= 9 * 9 * 3
        worst_psnr = max(worst_psnr, abs(metrics.psnr(p, g) - 10 * np.log10(1.0 / mse)))
        angs = []
        for i in range(9):
            for j in range(9):
                num = float(np.dot(p[i, j], g[i, j]))
                den = float(np.linalg.norm(p[i, j]) * np.linalg.norm(g[i, j]))
                angs.append(np.degrees(np.arccos(np.clip(num / den, -1, 1))))
        worst_sam = max(worst_sam, abs(metrics.sam(p, g) - np.mean(angs)))
    idok = (
        metrics.psnr(p, p) == 100.0
        and metrics.ssim(p, p) == 1.0
        and metrics.sam(p, p) < 1e-6
        and metrics.sre(p, p) == 0.0
    )
    ok = worst_psnr < 1e-6 and worst_sam < 1e-4 and idok
    return ok, (
        f"psnr gap {worst_psnr:.2e}, sam gap {worst_sam:.2e}, "
        f"identity cases {'ok' if idok else 'BAD'}"
    )


CHECKS = [
    ("wavelet round-trip/energy", _check_wavelet),
    ("schedule terminal marginal", _check_schedule),
    ("analytic-score sampling", _check_sampler),
    ("gradient finite differences", _check_gradients),
    ("metric oracle agreement", _check_metrics),
]


def run_selftest(print_fn=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as e:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(e).__name__}: {e}"
        all_ok &= ok
        print_fn(f"[{'PASS' if ok else 'FAIL'}] {name:32s} {detail}")
    return all_ok
