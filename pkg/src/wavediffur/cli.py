"""Command-line entry point.

Commands: train, ur, eval, dwt, gen, selftest. All runs are reproducible
under --seed; results are emitted as CSV/raw tensors for scripted
comparison. WDUR_THREADS caps eval parallelism.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as dataio
from . import metrics
from .cascade import plan_cascade, run_csp_wavediffur, run_wavediffur
from .config import RunConfig, load_config
from .errors import ParamError, WaveDiffURError
from .losses import LossWeights
from .networks import NetConfig, build_models
from .sampler import ProjectionParams
from .schedule import make_schedule
from .selftest import run_selftest
from .trainer import TrainConfig, fit
from .wavelet import dwt2


def _net_config(cfg: RunConfig) -> NetConfig:
    return NetConfig(
        heads=cfg.heads, base_width=cfg.base_width, csp_width=cfg.csp_width, emb_dim=cfg.emb_dim
    )


def _load_models(cfg: RunConfig, channels: int, ckpt: str | None):
    models = build_models(channels, _net_config(cfg), seed=cfg.seed)
    if ckpt:
        models.params.load_state(dataio.load_checkpoint(ckpt))
    return models


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    dataset = dataio.load_dataset(args.data)
    channels = dataset[0].hr.shape[2]
    models = _load_models(cfg, channels, args.ckpt)
    sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    tcfg = TrainConfig(
        steps=cfg.steps,
        batch=cfg.batch,
        lr0=cfg.lr0,
        decay=cfg.decay,
        decay_every=cfg.decay_every,
        seed=cfg.seed,
        loss_weights=LossWeights(cfg.lambda1, cfg.lambda2),
        optimizer=cfg.optimizer,
        clip_norm=cfg.clip_norm,
        checkpoint_every=cfg.checkpoint_every,
        cond_weight=cfg.cond_weight,
    )
    os.makedirs(args.out, exist_ok=True)

    def progress(row):
        print(
            f"step {row['step']:6d} lr {row['lr']:.2e} total {row['l_total']:.4f} "
            f"(diff {row['l_diff']:.4f} real {row['l_realness']:.4f} cons {row['l_consistent']:.4f})"
        )

    fit(dataset, models, sched, tcfg, out_dir=args.out, progress=progress)
    print(f"checkpoint written to {os.path.join(args.out, 'ckpt_final.wdur')}")
    return 0


def cmd_ur(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode:
        cfg.mode = args.mode
    img = dataio.load_image(args.input)
    scale = args.scale
    if scale < 1 or scale & (scale - 1):
        raise ParamError(f"--scale must be a power of 2, got {scale}")
    plan = plan_cascade(img.shape[0], img.shape[0] * scale, cfg.k, mode=cfg.mode, seed=cfg.seed)
    models = _load_models(cfg, img.shape[2], args.ckpt)
    sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    pp = ProjectionParams(cfg.lambda_mix, cfg.match_noise)

    level_cb = None
    if args.dump_levels:
        stem, ext = os.path.splitext(args.out)

        def level_cb(i, x):
            dataio.save_image(f"{stem}_level{i}{ext}", x)

    if cfg.mode == "csp":
        if not args.ref:
            raise ParamError("csp mode needs --ref (reference image)")
        ref = dataio.load_image(args.ref)
        out = run_csp_wavediffur(img, ref, plan, models, sched, pp, level_cb=level_cb)
    else:
        out = run_wavediffur(img, plan, models, sched, pp, sigma_hf=cfg.sigma_hf, level_cb=level_cb)
    dataio.save_image(args.out, out)
    print(f"{args.input} {img.shape} -> {args.out} {out.shape} (x{scale}, {cfg.mode})")
    return 0


def cmd_eval(args) -> int:
    names = sorted(
        f for f in os.listdir(args.pred_dir) if f.endswith((".wdtn", ".png"))
    )
    if not names:
        raise ParamError(f"no .wdtn/.png files in {args.pred_dir}")

    def one(name):
        pred = dataio.load_image(os.path.join(args.pred_dir, name))
        gt = dataio.load_image(os.path.join(args.gt_dir, name))
        rep = metrics.report(pred, gt)
        return os.path.splitext(name)[0], args.scale, rep

    workers = int(os.environ.get("WDUR_THREADS", "0")) or min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, names))
    metrics.write_metrics_csv(args.csv, rows)
    mean_psnr = float(np.mean([r[2].psnr for r in rows]))
    print(f"wrote {args.csv} ({len(rows)} rows, mean psnr {mean_psnr:.2f} dB)")
    return 0


def cmd_dwt(args) -> int:
    img = dataio.load_image(args.input)
    bands = dwt2(img)
    for key, band in (("a", bands.a), ("v", bands.v), ("h", bands.h), ("d", bands.d)):
        path = f"{args.out_prefix}_{key}.wdtn"
        dataio.save_tensor(path, band)
        print(f"wrote {path} {band.shape}")
    return 0


def cmd_gen(args) -> int:
    pairs = dataio.make_synthetic_dataset(args.seed, args.n, args.hr_size, args.levels)
    dataio.save_dataset(args.out, pairs)
    print(f"wrote {len(pairs)} triples under {args.out} (hr {args.hr_size}, d={args.levels})")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wavediffur", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the x2 model on a dataset directory")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--data", required=True, help="dataset root (<id>/{lr,ref,hr}.wdtn)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and loss CSV")
    p.add_argument("--ckpt", help="warm-start checkpoint")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ur", help="ultra-resolve an image by a power-of-2 scale")
    p.add_argument("--input", required=True)
    p.add_argument("--ref", help="reference image (csp mode)")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--mode", choices=["baseline", "csp"])
    p.add_argument("--ckpt", help="trained checkpoint (untrained nets when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--dump-levels", action="store_true", help="write each cascade level")
    p.set_defaults(func=cmd_ur)

    p = sub.add_parser("eval", help="metric CSV over matching pred/gt directories")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--scale", type=int, default=2)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dwt", help="write the four sub-band tensors of an image")
    p.add_argument("--input", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("gen", help="generate a procedural dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--hr-size", type=int, default=32)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WaveDiffURError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
