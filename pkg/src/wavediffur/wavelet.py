"""Single-level 2D Haar analysis and synthesis.

The orthonormal filter pair (coefficient 1/sqrt(2) per 1D stage, hence a
net 1/2 per 2D block) is used so that the four sub-bands conserve the
energy of the source image. Band orientation convention: `v` carries
row-direction differences, `h` column-direction differences, pinned by
the 2x2 block formulas below.

Both transforms run on plain numpy arrays and on autodiff `Tensor`s, so
the same code path serves inference and training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, interleave2x2
from .errors import DimensionError, ShapeError


@dataclass
class WaveletBands:
    """Approximation (a) plus vertical/horizontal/diagonal detail bands."""

    a: object  # ndarray or Tensor, each (H/2, W/2, C)
    v: object
    h: object
    d: object

    def detail(self):
        return (self.v, self.h, self.d)


def _shape_of(x):
    return x.data.shape if isinstance(x, Tensor) else np.asarray(x).shape


def dwt2(img) -> WaveletBands:
    """Decompose an even-dimensioned (H,W,C) image into four half-size bands.

    For a 2x2 block [[p,q],[r,s]]: a=(p+q+r+s)/2, h=(p-q+r-s)/2,
    v=(p+q-r-s)/2, d=(p-q-r+s)/2.
    """
    shape = _shape_of(img)
    if len(shape) != 3:
        raise ShapeError(f"dwt2 expects an (H,W,C) image, got shape {shape}")
    H, W, _ = shape
    if H < 2 or H % 2:
        raise DimensionError(f"dwt2 requires even height >= 2, got height={H}")
    if W < 2 or W % 2:
        raise DimensionError(f"dwt2 requires even width >= 2, got width={W}")
    p = img[0::2, 0::2]
    q = img[0::2, 1::2]
    r = img[1::2, 0::2]
    s = img[1::2, 1::2]
    a = (p + q + r + s) * 0.5
    h = (p - q + r - s) * 0.5
    v = (p + q - r - s) * 0.5
    d = (p - q - r + s) * 0.5
    return WaveletBands(a=a, v=v, h=h, d=d)


def idwt2(bands: WaveletBands):
    """Exact inverse of `dwt2` up to float round-off."""
    shapes = [_shape_of(x) for x in (bands.a, bands.v, bands.h, bands.d)]
    if len(set(shapes)) != 1:
        raise ShapeError(f"idwt2 requires four equally shaped bands, got {shapes}")
    a, v, h, d = bands.a, bands.v, bands.h, bands.d
    p = (a + h + v + d) * 0.5
    q = (a - h + v - d) * 0.5
    r = (a + h - v - d) * 0.5
    s = (a - h - v + d) * 0.5
    if isinstance(p, Tensor):
        return interleave2x2(p, q, r, s)
    H, W, C = p.shape
    out = np.empty((2 * H, 2 * W, C), dtype=p.dtype)
    out[0::2, 0::2] = p
    out[0::2, 1::2] = q
    out[1::2, 0::2] = r
    out[1::2, 1::2] = s
    return out
