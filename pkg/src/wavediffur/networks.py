"""Trainable components: the conditional denoiser, the cross-scale
condition encoder, the cross-scale high-frequency restorer, and the
non-learned bicubic band upscaler used by the baseline cascade.

All forward passes record an autodiff graph and return `Tensor`s; call
`.data` (or use the numpy-returning closures on `Models`) for inference.
Parameters are created lazily on first use with a deterministic
per-name seed, so a forward pass doubles as architecture materialization
and a checkpoint can be strictly diffed against it.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import bicubic_resize, bicubic_x2
from .errors import ParamError, ShapeError
from .wavelet import dwt2


class ParamStore:
    """Named parameter tensors with matching gradient slots."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._params: dict[str, Tensor] = {}

    def param(self, name: str, shape, init="he") -> Tensor:
        """Get or deterministically create a parameter.

        `init` is "he", "zeros", or a numeric standard deviation. An
        existing parameter with a different shape raises ShapeError.
        """
        shape = tuple(int(s) for s in shape)
        if name in self._params:
            p = self._params[name]
            if p.data.shape != shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {p.data.shape} != requested {shape}"
                )
            return p
        if init == "zeros":
            data = np.zeros(shape, dtype=np.float32)
        else:
            if init == "he":
                fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
                std = float(np.sqrt(2.0 / fan_in))
            else:
                std = float(init)
            rng = np.random.default_rng([self.seed, zlib.crc32(name.encode())])
            data = (rng.standard_normal(shape) * std).astype(np.float32)
        t = Tensor(data, requires_grad=True, name=name)
        t.grad = np.zeros(shape, dtype=np.float32)
        self._params[name] = t
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = np.zeros_like(p.data)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Fill an empty store, or strictly diff against a populated one.

        Loading into a populated store reports every missing name,
        unknown name, and shape mismatch in one error.
        """
        if not self._params:
            for name, arr in state.items():
                arr = np.asarray(arr, dtype=np.float32)
                t = Tensor(arr.copy(), requires_grad=True, name=name)
                t.grad = np.zeros_like(arr)
                self._params[name] = t
            return
        missing = [n for n in self._params if n not in state]
        unknown = [n for n in state if n not in self._params]
        mismatched = [
            f"{n}: checkpoint {np.asarray(state[n]).shape} vs model {self._params[n].data.shape}"
            for n in state
            if n in self._params and np.asarray(state[n]).shape != self._params[n].data.shape
        ]
        if missing or unknown or mismatched:
            raise ShapeError(
                "checkpoint does not match the materialized architecture; "
                f"missing={missing} unknown={unknown} mismatched={mismatched}"
            )
        for name, arr in state.items():
            self._params[name].data = np.asarray(arr, dtype=np.float32).copy()
            self._params[name].grad = np.zeros_like(self._params[name].data)

    def astype(self, dtype) -> "ParamStore":
        """Copy with every parameter cast (float64 for gradient checks)."""
        out = ParamStore(self.seed)
        for name, p in self._params.items():
            t = Tensor(p.data.astype(dtype), requires_grad=True, name=name)
            t.grad = np.zeros_like(t.data)
            out._params[name] = t
        return out


@dataclass
class Condition:
    """Low-frequency condition tensor plus optional (V,H,D) triple."""

    lf: object
    hf: Optional[tuple] = None


@dataclass
class NetConfig:
    heads: int = 12
    base_width: int = 32
    csp_width: int = 48
    emb_dim: int = 32


@dataclass
class Models:
    """Parameter store plus architecture knobs, with numpy-returning
    closures for the sampling/cascade side."""

    params: ParamStore
    cfg: NetConfig = field(default_factory=NetConfig)

    def denoise_np(self, x_t, t, cond):
        return denoiser_forward(x_t, t, cond, self.params, self.cfg).data

    def csp_np(self, i_lr, i_ref) -> Condition:
        c = csp_encode(i_lr, i_ref, self.params, self.cfg)
        return Condition(lf=c.lf.data, hf=tuple(b.data for b in c.hf))

    def cshr_np(self, vhd_lr, cond_hf):
        return tuple(b.data for b in cshr_restore(vhd_lr, cond_hf, self.params, self.cfg))


def _shape_of(x):
    return x.data.shape if isinstance(x, Tensor) else np.asarray(x).shape


def _const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


# -- time embedding ----------------------------------------------------------------


def sinusoidal_embedding(t: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Classic sin/cos features of the integer step index."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = float(t) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(dtype)


def _time_bias(ps: ParamStore, name: str, temb: Tensor, width: int) -> Tensor:
    w = ps.param(f"{name}.tw", (temb.data.shape[1], width))
    b = ps.param(f"{name}.tb", (width,), init="zeros")
    return (temb @ w)[0] + b


# -- building blocks ---------------------------------------------------------------


def _conv(ps, name, x, cout, k: int = 3, dilation: int = 1, init="he"):
    cin = x.data.shape[2]
    w = ps.param(f"{name}.w", (k, k, cin, cout), init=init)
    b = ps.param(f"{name}.b", (cout,), init="zeros")
    return ad.conv2d(x, w, b, dilation=dilation)


def _dsconv(ps, name, x, cout):
    """Depthwise 3x3 followed by a pointwise projection."""
    cin = x.data.shape[2]
    dw = ps.param(f"{name}.dw", (3, 3, cin))
    db = ps.param(f"{name}.db", (cin,), init="zeros")
    h = ad.depthwise_conv2d(x, dw, db)
    return _conv(ps, f"{name}.pw", h, cout, k=1)


def _denoiser_block(ps, name, x, cout, temb):
    h = _conv(ps, f"{name}.c1", x, cout)
    h = h + _time_bias(ps, f"{name}.t", temb, cout)
    h = ad.silu(h)
    h = _conv(ps, f"{name}.c2", h, cout)
    return ad.silu(h)


def _dilation_resblock(ps, name, x):
    """Local conv, dilation 2 and 4 convs, local conv, residual add."""
    c = x.data.shape[2]
    h = ad.silu(_conv(ps, f"{name}.d1", x, c, dilation=1))
    h = ad.silu(_conv(ps, f"{name}.d2", h, c, dilation=2))
    h = ad.silu(_conv(ps, f"{name}.d4", h, c, dilation=4))
    h = _conv(ps, f"{name}.d1b", h, c, dilation=1)
    return ad.silu(h + x)


# -- conditional denoiser (U-shaped, 2 down / 2 up, skip connections) ------------------


def denoiser_forward(x_t, t: int, cond: Condition, params: ParamStore, cfg: NetConfig = None) -> Tensor:
    """Epsilon prediction for the noisy low-frequency band.

    The condition band is concatenated on the channel axis; the
    sinusoidal step embedding is added per level. The output head is
    zero-initialized, so an untrained denoiser predicts zero noise.
    """
    cfg = cfg or NetConfig()
    xs = _shape_of(x_t)
    cs = _shape_of(cond.lf)
    if xs != cs:
        raise ShapeError(f"denoiser: x_t shape {xs} != cond.lf shape {cs}")
    w = cfg.base_width
    c_img = xs[2]
    temb = _const(sinusoidal_embedding(t, cfg.emb_dim).reshape(1, -1))
    x = ad.concat([_const(x_t), _const(cond.lf)], axis=2)

    h = ad.silu(_conv(params, "den.stem", x, w))
    e0 = _denoiser_block(params, "den.e0", h, w, temb)
    e1 = _denoiser_block(params, "den.e1", ad.avg_pool2x(e0), 2 * w, temb)
    m = _denoiser_block(params, "den.mid", ad.avg_pool2x(e1), 2 * w, temb)
    d1 = _denoiser_block(
        params, "den.d1", ad.concat([ad.upsample_nearest2x(m), e1], axis=2), 2 * w, temb
    )
    d0 = _denoiser_block(
        params, "den.d0", ad.concat([ad.upsample_nearest2x(d1), e0], axis=2), w, temb
    )
    return _conv(params, "den.head", d0, c_img, init="zeros")


# -- cross attention ----------------------------------------------------------------


def cross_attention(q_src, kv_src, heads: int, params: ParamStore, prefix: str = "xattn") -> Tensor:
    """Multi-head softmax(Q K^T / sqrt(d)) V with output projection.

    Accepts (H,W,C) maps (flattened to spatial tokens and reshaped back)
    or already-flat (N,C) token matrices. Channel dims must be divisible
    by `heads`.
    """
    q_in = _const(q_src)
    kv_in = _const(kv_src)
    q_shape = q_in.data.shape
    cq = q_shape[-1]
    ck = kv_in.data.shape[-1]
    if cq % heads or ck % heads:
        raise ParamError(f"channel dims ({cq}, {ck}) must be divisible by heads={heads}")
    q = q_in.reshape(-1, cq) if q_in.data.ndim == 3 else q_in
    kv = kv_in.reshape(-1, ck) if kv_in.data.ndim == 3 else kv_in

    wq = params.param(f"{prefix}.wq", (cq, cq))
    wk = params.param(f"{prefix}.wk", (ck, cq))
    wv = params.param(f"{prefix}.wv", (ck, cq))
    wo = params.param(f"{prefix}.wo", (cq, cq))
    Q, K, V = q @ wq, kv @ wk, kv @ wv
    dh = cq // heads
    scale = 1.0 / np.sqrt(dh)
    outs = []
    for i in range(heads):
        sl = slice(i * dh, (i + 1) * dh)
        logits = (Q[:, sl] @ _transpose2d(K[:, sl])) * scale
        attn = ad.softmax(logits, axis=-1)
        outs.append(attn @ V[:, sl])
    out = ad.concat(outs, axis=1) @ wo
    if q_in.data.ndim == 3:
        out = out.reshape(q_shape[0], q_shape[1], cq)
    return out


def _transpose2d(x: Tensor) -> Tensor:
    out = ad._node(x.data.T, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g.T)

    out._backward = bw
    return out


# -- cross-scale condition encoder -----------------------------------------------------


def csp_encode(i_lr, i_ref, params: ParamStore, cfg: NetConfig = None) -> Condition:
    """Build the per-level condition from the current input and reference.

    The reference is bicubic-aligned to twice the input grid, both inputs
    pass through depthwise-separable feature extraction, the input
    features query the reference features through cross attention, and a
    progressive-dilation residual block fuses scales. Zero-initialized
    heads emit residuals over bicubic base tensors shaped like the SR
    target bands, so an untrained encoder reproduces the plain bicubic
    condition.
    """
    cfg = cfg or NetConfig()
    lr_np = i_lr.data if isinstance(i_lr, Tensor) else np.asarray(i_lr)
    ref_np = i_ref.data if isinstance(i_ref, Tensor) else np.asarray(i_ref)
    if not np.issubdtype(lr_np.dtype, np.floating):
        lr_np = lr_np.astype(np.float32)
    if not np.issubdtype(ref_np.dtype, np.floating):
        ref_np = ref_np.astype(np.float32)
    if lr_np.ndim != 3 or ref_np.ndim != 3:
        raise ShapeError(
            f"csp_encode expects (H,W,C) images, got {lr_np.shape} and {ref_np.shape}"
        )
    if ref_np.shape[0] < lr_np.shape[0] or ref_np.shape[1] < lr_np.shape[1]:
        raise ParamError(
            f"reference {ref_np.shape[:2]} must be at least input size {lr_np.shape[:2]}"
        )
    if lr_np.shape[0] % 2 or lr_np.shape[1] % 2:
        raise ShapeError(f"csp_encode needs even input dims, got {lr_np.shape[:2]}")
    H, W, _ = lr_np.shape
    u = cfg.csp_width

    # bases = wavelet decomposition of the plain SR-pipeline (bicubic) image,
    # i.e. the fixed condition the learned heads refine
    sr_bands = dwt2(bicubic_x2(lr_np))
    base_lf = sr_bands.a
    base_hf = sr_bands.detail()
    ref_al = bicubic_resize(ref_np, 2 * H, 2 * W)

    f_lr = ad.silu(_dsconv(params, "csp.inp1", _const(lr_np), u))
    f_lr = ad.silu(_dsconv(params, "csp.inp2", f_lr, u))
    f_ref = ad.silu(_dsconv(params, "csp.ref1", _const(ref_al), u))
    f_ref = ad.silu(_dsconv(params, "csp.ref2", f_ref, u))
    f_ref = ad.avg_pool2x(f_ref)

    attn = cross_attention(f_lr, f_ref, cfg.heads, params, prefix="csp.attn")
    fused = _dilation_resblock(params, "csp.res", f_lr + attn)

    lf = _conv(params, "csp.lf", fused, lr_np.shape[2], init="zeros") + _const(base_lf)
    hf = tuple(
        _conv(params, f"csp.hf{k}", fused, lr_np.shape[2], init="zeros") + _const(base_hf[j])
        for j, k in enumerate("vhd")
    )
    return Condition(lf=lf, hf=hf)


# -- cross-scale high-frequency restoration ---------------------------------------------


def cshr_restore(vhd_lr, cond_hf, params: ParamStore, cfg: NetConfig = None) -> tuple:
    """Predict the SR detail-band means from LR detail bands and the
    high-frequency condition triple.

    Per-band depthwise-separable streams, two cross-attention layers
    folding V- then H-stream information into the D stream, a
    progressive-dilation residual block, and a x2 sub-pixel shuffle.
    The final head is zero-initialized: untrained output is zero bands.
    """
    cfg = cfg or NetConfig()
    if len(vhd_lr) != 3 or (cond_hf is None or len(cond_hf) != 3):
        raise ShapeError("cshr_restore expects (V,H,D) input and condition triples")
    shapes = [_shape_of(b) for b in vhd_lr]
    if len(set(shapes)) != 1:
        raise ShapeError(f"LR detail bands must share one shape, got {shapes}")
    h2, w2, c = shapes[0]
    target = (2 * h2, 2 * w2, c)
    for k, cb in zip("vhd", cond_hf):
        cbs = _shape_of(cb)
        if cbs != target:
            raise ShapeError(f"cond_hf[{k}] shape {cbs} != target band shape {target}")
    v = cfg.csp_width

    streams = {}
    for k, band, cb in zip("vhd", vhd_lr, cond_hf):
        cb_small = ad.avg_pool2x(_const(cb))
        x = ad.concat([_const(band), cb_small], axis=2)
        x = ad.silu(_dsconv(params, f"cshr.{k}1", x, v))
        streams[k] = ad.silu(_dsconv(params, f"cshr.{k}2", x, v))

    d_feat = streams["d"]
    d_feat = d_feat + cross_attention(d_feat, streams["v"], cfg.heads, params, prefix="cshr.attnv")
    d_feat = d_feat + cross_attention(d_feat, streams["h"], cfg.heads, params, prefix="cshr.attnh")

    merged = _conv(params, "cshr.merge", ad.concat([streams["v"], streams["h"], d_feat], axis=2), v, k=1)
    merged = _dilation_resblock(params, "cshr.res", merged)
    up = ad.pixel_shuffle2(_conv(params, "cshr.up", merged, 4 * v))
    up = ad.silu(up)
    full = ad.concat([up] + [_const(cb) for cb in cond_hf], axis=2)
    out = _conv(params, "cshr.head", full, 3 * c, init="zeros")
    return tuple(out[:, :, i * c : (i + 1) * c] for i in range(3))


# -- non-learned high-frequency upscaler (baseline path) ----------------------------------


def upscale_hf(vhd_lr, sigma: float = 0.0, rng: np.random.Generator | None = None) -> tuple:
    """Bicubic x2 upscaling of each detail band, optionally perturbed by
    isotropic Gaussian noise of standard deviation `sigma`."""
    if len(vhd_lr) != 3:
        raise ShapeError("upscale_hf expects a (V,H,D) triple")
    shapes = [np.asarray(b).shape for b in vhd_lr]
    if len(set(shapes)) != 1:
        raise ShapeError(f"detail bands must share one shape, got {shapes}")
    h2, w2, _ = shapes[0]
    out = []
    for band in vhd_lr:
        up = bicubic_resize(np.asarray(band, dtype=np.float32), 2 * h2, 2 * w2, clamp=None)
        if sigma > 0.0:
            gen = rng if rng is not None else np.random.default_rng(0)
            up = up + gen.normal(0.0, sigma, size=up.shape).astype(np.float32)
        out.append(up)
    return tuple(out)


# -- gradient entry point -----------------------------------------------------------------


def backward(loss: Tensor, params: ParamStore | None = None) -> None:
    """Populate gradients of every parameter reachable from `loss`.

    Parameters detached from the loss graph keep zero gradients (that is
    the documented behavior, not an error).
    """
    if params is not None:
        params.zero_grads()
    ad.backward(loss)


# -- materialization ------------------------------------------------------------------------


def build_models(channels: int, cfg: NetConfig = None, seed: int = 0) -> Models:
    """Create a Models bundle and materialize every parameter by running
    tiny dummy forwards, so checkpoints can be diffed strictly."""
    cfg = cfg or NetConfig()
    models = Models(params=ParamStore(seed), cfg=cfg)
    lr = np.zeros((8, 8, channels), dtype=np.float32)
    ref = np.zeros((12, 12, channels), dtype=np.float32)
    cond = csp_encode(lr, ref, models.params, cfg)
    denoiser_forward(np.zeros((8, 8, channels), np.float32), 0, Condition(lf=cond.lf.data), models.params, cfg)
    bands = dwt2(lr)
    cshr_restore(bands.detail(), tuple(b.data for b in cond.hf), models.params, cfg)
    return models
