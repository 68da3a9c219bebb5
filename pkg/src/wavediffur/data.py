"""Degradation pipeline, procedural dataset generation, and persistence.

Bicubic resampling uses the Catmull-Rom kernel (a=-0.5) with edge
clamping; its polynomial-reproduction property (constants and ramps
survive resizing) is what the resampling tests lean on. Pixel-domain
results are clamped to [0,1]; wavelet-band callers pass clamp=None.

File formats:
  tensor     magic "WDTN", version u32, ndim u8, dims u32 each, f32 LE payload
  checkpoint magic "WDUR", version u32, tensor count u32, then per tensor
             name length u16 + UTF-8 name + ndim u8 + dims u32 + f32 LE data
Both round-trip bit-exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParamError, ShapeError

TENSOR_MAGIC = b"WDTN"
CHECKPOINT_MAGIC = b"WDUR"
FORMAT_VERSION = 1
REF_FACTOR = 1.5  # reference resolution relative to LR


@dataclass
class SamplePair:
    lr: np.ndarray
    ref: np.ndarray
    hr: np.ndarray
    id: str


# -- bicubic resampling -----------------------------------------------------------


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom kernel, a=-0.5."""
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    out[far] = a * t[far] ** 3 - 5.0 * a * t[far] ** 2 + 8.0 * a * t[far] - 4.0 * a
    return out


def _resample_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Dense (n_out, n_in) bicubic weight matrix with clamped edges."""
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(int)
    frac = src - base
    for k in range(-1, 3):
        idx = np.clip(base + k, 0, n_in - 1)
        weights = _catmull_rom(frac - k)
        np.add.at(w, (np.arange(n_out), idx), weights)
    return w


def bicubic_resize(img, out_h: int, out_w: int, clamp=(0.0, 1.0)) -> np.ndarray:
    """Separable Catmull-Rom resampling of an (H,W,C) image.

    `clamp` bounds the output (pixel-domain default [0,1]); pass None for
    unbounded wavelet-band data.
    """
    x = np.asarray(img, dtype=np.float32)
    if x.ndim != 3:
        raise ShapeError(f"bicubic_resize expects an (H,W,C) image, got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ParamError(f"output dims must be >= 1, got {out_h}x{out_w}")
    h, w, c = x.shape
    if (out_h, out_w) != (h, w):
        wh = _resample_matrix(out_h, h)
        ww = _resample_matrix(out_w, w)
        x = np.einsum("oh,hwc->owc", wh, x.astype(np.float64))
        x = np.einsum("pw,hwc->hpc", ww, x)
        x = x.astype(np.float32)
    else:
        x = x.copy()
    if clamp is not None:
        np.clip(x, clamp[0], clamp[1], out=x)
    return x


def bicubic_x2(img, clamp=(0.0, 1.0)) -> np.ndarray:
    h, w = np.asarray(img).shape[:2]
    return bicubic_resize(img, 2 * h, 2 * w, clamp=clamp)


# -- procedural dataset -----------------------------------------------------------


def _voronoi_layer(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    n_sites = int(rng.integers(4, 9))
    sites = rng.uniform(0, size, size=(n_sites, 2))
    values = rng.uniform(0.0, 1.0, size=(n_sites, channels))
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    d2 = (yy[..., None] - sites[:, 0]) ** 2 + (xx[..., None] - sites[:, 1]) ** 2
    return values[np.argmin(d2, axis=-1)].astype(np.float32)


def _sinusoid_layer(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    # absolute cycle counts, so the same scene stays representable across
    # scales; the Voronoi boundaries carry the genuine high frequencies
    n_waves = int(rng.integers(3, 7))
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    out = np.zeros((size, size, channels), dtype=np.float32)
    for _ in range(n_waves):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(1.5, 6.0)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.1, 0.5, size=channels)
        wave = np.sin(2 * np.pi * freq / size * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        out += wave[..., None].astype(np.float32) * amp.astype(np.float32)
    return out


def _synth_image(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    img = _voronoi_layer(rng, size, channels) + _sinusoid_layer(rng, size, channels)
    img += rng.normal(0.0, 0.01, size=img.shape).astype(np.float32)
    lo, hi = img.min(), img.max()
    return ((img - lo) / (hi - lo + 1e-8)).astype(np.float32)


def make_synthetic_dataset(
    seed: int, n: int, hr_size: int, d: int, channels: int = 3
) -> list[SamplePair]:
    """Procedural HR scenes degraded to (lr, ref, hr) triples.

    LR is hr_size / 2**d obtained by repeated bicubic x2 downscaling; ref
    sits at 1.5x the LR resolution. Fully determined by `seed`.
    """
    if n < 1:
        raise ParamError(f"need n >= 1 samples, got {n}")
    if d < 0:
        raise ParamError(f"need d >= 0 cascade steps, got {d}")
    lr_size = hr_size // (2**d)
    if lr_size * (2**d) != hr_size or lr_size < 2:
        raise ParamError(f"hr_size={hr_size} is not lr_size * 2^{d} with lr_size >= 2")
    ref_size = int(round(lr_size * REF_FACTOR))
    pairs = []
    seeds = np.random.SeedSequence(seed).spawn(n)
    for i in range(n):
        rng = np.random.default_rng(seeds[i])
        hr = _synth_image(rng, hr_size, channels)
        lr = hr
        while lr.shape[0] > lr_size:
            lr = bicubic_resize(lr, lr.shape[0] // 2, lr.shape[1] // 2)
        ref = bicubic_resize(hr, ref_size, ref_size)
        pairs.append(SamplePair(lr=lr, ref=ref, hr=hr, id=f"synth{i:04d}"))
    return pairs


# -- raw tensor persistence ---------------------------------------------------------


def save_tensor(path, tensor: np.ndarray) -> None:
    x = np.ascontiguousarray(tensor, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", x.ndim))
        for dim in x.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(x.astype("<f4").tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(
            f"truncated file while reading {what}: expected {count} bytes at offset "
            f"{fh.tell() - len(buf)}, got {len(buf)}"
        )
    return buf


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != TENSOR_MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0, expected {TENSOR_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported tensor format version {version} at offset 4")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
        dims = [struct.unpack("<I", _read_exact(fh, 4, f"dim {i}"))[0] for i in range(ndim)]
        count = int(np.prod(dims)) if dims else 1
        payload = _read_exact(fh, 4 * count, "payload")
        extra = fh.read(1)
        if extra:
            raise FormatError(f"trailing bytes at offset {fh.tell() - 1}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# -- checkpoint persistence ----------------------------------------------------------


def save_checkpoint(path, params) -> None:
    """Serialize named parameter tensors (a ParamStore or a name->array map)."""
    state = params.state_dict() if hasattr(params, "state_dict") else dict(params)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            x = np.ascontiguousarray(state[name], dtype=np.float32)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", x.ndim))
            for dim in x.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(x.astype("<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as a name -> float32 array mapping."""
    state: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version} at offset 4")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            dims = [struct.unpack("<I", _read_exact(fh, 4, "dim"))[0] for i in range(ndim)]
            n = int(np.prod(dims)) if dims else 1
            payload = _read_exact(fh, 4 * n, f"payload of {name}")
            state[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return state


# -- PNG import/export ----------------------------------------------------------------


def save_png(path, img: np.ndarray) -> None:
    """8-bit PNG export; values scaled by 255 with round-half-up."""
    from PIL import Image

    x = np.asarray(img, dtype=np.float32)
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise ShapeError(f"save_png expects (H,W,1) or (H,W,3), got shape {x.shape}")
    q = np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(q, mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def load_image(path) -> np.ndarray:
    """Dispatch on extension: .wdtn raw tensor or .png pixel image."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".png":
        return load_png(path)
    return load_tensor(path)


def save_image(path, img: np.ndarray) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".png":
        save_png(path, img)
    else:
        save_tensor(path, img)


# -- dataset directory layout: <root>/<id>/{lr,ref,hr}.wdtn ------------------------------


def save_dataset(root, pairs) -> None:
    for pair in pairs:
        pdir = os.path.join(root, pair.id)
        os.makedirs(pdir, exist_ok=True)
        save_tensor(os.path.join(pdir, "lr.wdtn"), pair.lr)
        save_tensor(os.path.join(pdir, "ref.wdtn"), pair.ref)
        save_tensor(os.path.join(pdir, "hr.wdtn"), pair.hr)


def load_dataset(root) -> list[SamplePair]:
    pairs = []
    for name in sorted(os.listdir(root)):
        pdir = os.path.join(root, name)
        if not os.path.isdir(pdir):
            continue
        pairs.append(
            SamplePair(
                lr=load_tensor(os.path.join(pdir, "lr.wdtn")),
                ref=load_tensor(os.path.join(pdir, "ref.wdtn")),
                hr=load_tensor(os.path.join(pdir, "hr.wdtn")),
                id=name,
            )
        )
    if not pairs:
        raise FormatError(f"no sample directories found under {root}")
    return pairs
