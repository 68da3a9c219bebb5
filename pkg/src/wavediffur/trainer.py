"""Joint training of the denoiser, condition encoder, and
high-frequency restorer under the summed objective.

One training step: draw a uniform step index and unit noise, noise the
HR approximation band, predict the noise conditionally, restore SR
detail bands, rebuild a full image from the one-step denoised estimate
x0_hat = (x_t - sqrt(1-abar)*eps_hat)/sqrt(abar), and descend the total
loss. Plain SGD is the default; Adam is available behind the same
interface (its state is not persisted in checkpoints).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .data import SamplePair, save_checkpoint
from .errors import DivergenceError, ParamError
from .losses import LossWeights, l_consistent, l_diff, l_realness, l_total
from .networks import Condition, Models, backward, csp_encode, cshr_restore, denoiser_forward
from .schedule import NoiseSchedule, q_sample
from .wavelet import WaveletBands, dwt2, idwt2


@dataclass
class TrainConfig:
    steps: int = 5000
    batch: int = 8
    lr0: float = 1e-4
    decay: float = 0.8
    decay_every: int = 5000
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: str = "sgd"
    clip_norm: float = 0.0  # 0 disables clipping
    checkpoint_every: int = 1000
    # Weight of the condition-anchoring term. The encoder emits tensors in
    # the target band domain; without this anchor its heads drift into a
    # free feature space during joint training and the projection step
    # then mixes garbage into the sampled band. 0 disables.
    cond_weight: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ParamError(f"steps must be >= 1, got {self.steps}")
        if self.lr0 <= 0:
            raise ParamError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 < self.decay <= 1.0:
            raise ParamError(f"decay must lie in (0,1], got {self.decay}")
        if self.optimizer not in ("sgd", "adam"):
            raise ParamError(f"optimizer must be sgd or adam, got {self.optimizer!r}")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """lr0 * decay^floor(step/decay_every)."""
    return cfg.lr0 * cfg.decay ** (step // cfg.decay_every)


class SGD:
    def step(self, params, lr: float) -> None:
        for _, p in params.items():
            p.data -= (lr * p.grad).astype(p.data.dtype)


class Adam:
    """Standard Adam; state lives for the duration of one fit() run."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = p.grad
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p.data -= (lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)


def make_optimizer(cfg: TrainConfig):
    return Adam() if cfg.optimizer == "adam" else SGD()


def _clip_gradients(params, max_norm: float) -> None:
    total = 0.0
    for _, p in params.items():
        total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for _, p in params.items():
            p.grad *= scale


def _pair_loss(pair: SamplePair, models: Models, sched: NoiseSchedule,
               cfg: TrainConfig, rng: np.random.Generator):
    """Build the differentiable total loss for one (lr, ref, hr) triple."""
    hr_bands = dwt2(pair.hr)
    a_hr = hr_bands.a
    t = int(rng.integers(0, sched.T))
    eps = rng.standard_normal(a_hr.shape).astype(np.float32)
    x_t = q_sample(a_hr, t, eps, sched)

    cond = csp_encode(pair.lr, pair.ref, models.params, models.cfg)
    # the score net consumes the condition as data: the encoder heads train
    # from the anchoring/realness paths, not from the diffusion objective
    eps_hat = denoiser_forward(
        x_t, t, Condition(lf=cond.lf.detach()), models.params, models.cfg
    )
    ld = l_diff(eps_hat, eps)

    lr_bands = dwt2(pair.lr)
    vhd_sr = cshr_restore(
        lr_bands.detail(), tuple(b.detach() for b in cond.hf), models.params, models.cfg
    )
    lreal = l_realness(vhd_sr, hr_bands.detail(), cfg.loss_weights)

    ab = sched.alpha_bar[t]
    x0_hat = (Tensor(x_t) - eps_hat * np.sqrt(1.0 - ab)) * (1.0 / np.sqrt(ab))
    i_rec = idwt2(WaveletBands(x0_hat, *vhd_sr))
    lcons = l_consistent(i_rec, Tensor(pair.hr))

    try:
        loss = l_total(ld, lreal, lcons)
    except DivergenceError as e:
        raise DivergenceError(f"{e} (t={t})") from e
    if cfg.cond_weight > 0:
        anchor = l_diff(cond.lf, a_hr)
        for cb, hb in zip(cond.hf, hr_bands.detail()):
            anchor = anchor + l_diff(cb, hb)
        loss = loss + anchor * cfg.cond_weight

    return loss, {
        "l_diff": float(ld.data),
        "l_realness": float(lreal.data),
        "l_consistent": float(lcons.data),
        "t": t,
    }


def train_step(
    pair,
    models: Models,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    lr_now: float | None = None,
    optimizer=None,
) -> dict:
    """One gradient-descent update from a sample pair (or a mini-batch of
    pairs, whose losses are averaged). Returns the loss parts."""
    pairs = [pair] if isinstance(pair, SamplePair) else list(pair)
    lr_now = cfg.lr0 if lr_now is None else lr_now
    optimizer = optimizer or SGD()

    total = None
    agg = {"l_diff": 0.0, "l_realness": 0.0, "l_consistent": 0.0}
    last_t = -1
    try:
        for p in pairs:
            loss, parts = _pair_loss(p, models, sched, cfg, rng)
            total = loss if total is None else total + loss
            for key in agg:
                agg[key] += parts[key] / len(pairs)
            last_t = parts["t"]
    except DivergenceError as e:
        raise DivergenceError(f"{e} (lr={lr_now})") from e
    total = total * (1.0 / len(pairs))

    loss_val = float(total.data)
    if not np.isfinite(loss_val):
        raise DivergenceError(f"non-finite training loss {loss_val} (t={last_t}, lr={lr_now})")

    backward(total, models.params)
    if cfg.clip_norm > 0:
        _clip_gradients(models.params, cfg.clip_norm)
    optimizer.step(models.params, lr_now)
    agg["l_total"] = loss_val
    return agg


LOG_COLUMNS = ["step", "lr", "l_diff", "l_realness", "l_consistent", "l_total"]


def fit(
    dataset,
    models: Models,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    out_dir: str | None = None,
    log_every: int = 50,
    progress=None,
):
    """Iterate train_step over seeded shuffles of the dataset.

    Writes `loss_log.csv` and periodic `ckpt_<step>.wdur` checkpoints
    when `out_dir` is given; returns (models, log_rows).
    """
    if not dataset:
        raise ParamError("fit requires a non-empty dataset")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(cfg)
    rows = []
    order: list[int] = []
    for step in range(cfg.steps):
        batch = []
        for _ in range(max(1, cfg.batch)):
            if not order:
                order = list(rng.permutation(len(dataset)))
            batch.append(dataset[order.pop()])
        lr_now = lr_at(step, cfg)
        try:
            parts = train_step(batch, models, sched, cfg, rng, lr_now, optimizer)
        except DivergenceError as e:
            raise DivergenceError(f"training step {step}: {e}") from e
        if step % log_every == 0 or step == cfg.steps - 1:
            row = {"step": step, "lr": lr_now, **parts}
            rows.append(row)
            if progress is not None:
                progress(row)
        if out_dir and cfg.checkpoint_every > 0 and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, f"ckpt_{step + 1}.wdur"), models.params)
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "ckpt_final.wdur"), models.params)
        with open(os.path.join(out_dir, "loss_log.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in LOG_COLUMNS})
    return models, rows
