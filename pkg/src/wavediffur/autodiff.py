"""Reverse-mode automatic differentiation over numpy arrays.

A forward pass records an operation graph of `Tensor` nodes; `backward`
walks the graph in reverse topological order and accumulates exact
gradients into every reachable node with `requires_grad`. Heavy image
primitives (convolutions, pooling, pixel shuffle, softmax) carry
hand-written adjoints so graphs stay small and fast.

Forward dtype follows the inputs (float32 in production, float64 for
finite-difference checks).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the recorded operation graph wrapping an ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    # keep numpy from consuming mixed expressions so ndarray <op> Tensor
    # falls through to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data, dtype=grad.dtype)
        self.grad += grad

    # -- elementwise arithmetic ------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _node(self.data + other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _node(-self.data, (self,))
        out._backward = lambda g: self.requires_grad and self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = _node(self.data * other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = _node(self.data / other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        out._backward = bw
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        out = _node(self.data @ other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        out._backward = bw
        return out

    def __getitem__(self, key):
        out = _node(self.data[key], (self,))

        def bw(g):
            if self.requires_grad:
                full = np.zeros_like(self.data, dtype=g.dtype)
                np.add.at(full, key, g)
                self._accumulate(full)

        out._backward = bw
        return out

    # -- reductions and shaping --------------------------------------------------

    def sum(self):
        out = _node(np.asarray(self.data.sum()), (self,))
        out._backward = lambda g: self.requires_grad and self._accumulate(
            np.broadcast_to(g, self.data.shape).astype(g.dtype)
        )
        return out

    def mean(self):
        n = self.data.size
        out = _node(np.asarray(self.data.mean()), (self,))
        out._backward = lambda g: self.requires_grad and self._accumulate(
            np.broadcast_to(g / n, self.data.shape).astype(g.dtype)
        )
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = _node(self.data.reshape(shape), (self,))
        out._backward = lambda g: self.requires_grad and self._accumulate(g.reshape(old))
        return out

    def abs(self):
        out = _node(np.abs(self.data), (self,))
        out._backward = lambda g: self.requires_grad and self._accumulate(g * np.sign(self.data))
        return out

    def item(self) -> float:
        return float(self.data)


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    out._parents = tuple(p for p in parents if isinstance(p, Tensor))
    out.requires_grad = any(p.requires_grad for p in out._parents)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- nonlinearities --------------------------------------------------------------


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = _node(x.data * s, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * (s * (1.0 + x.data * (1.0 - s))))

    out._backward = bw
    return out


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0.0), (x,))
    out._backward = lambda g: x.requires_grad and x._accumulate(g * (x.data > 0))
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _node(y, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    out._backward = bw
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(p)

    out._backward = bw
    return out


# -- image primitives (H, W, C layout) ---------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-padded 2D convolution; x (H,W,Cin), w (kh,kw,Cin,Cout), b (Cout)."""
    xd, wd = x.data, w.data
    if xd.ndim != 3 or wd.ndim != 4 or xd.shape[2] != wd.shape[2]:
        raise ShapeError(
            f"conv2d expects x (H,W,Cin) and w (kh,kw,Cin,Cout) with matching Cin, "
            f"got {xd.shape} and {wd.shape}"
        )
    kh, kw = wd.shape[0], wd.shape[1]
    ph, pw = dilation * (kh - 1) // 2, dilation * (kw - 1) // 2
    H, W, cin = xd.shape
    cout = wd.shape[3]
    xp = np.pad(xd, ((ph, ph), (pw, pw), (0, 0)))
    y = np.zeros((H, W, cout), dtype=np.result_type(xd, wd))
    for u in range(kh):
        for v in range(kw):
            sl = xp[u * dilation : u * dilation + H, v * dilation : v * dilation + W, :]
            y += (sl.reshape(H * W, cin) @ wd[u, v]).reshape(H, W, cout)
    if b is not None:
        y += b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _node(y, parents)

    def bw(g):
        g2 = g.reshape(H * W, cout)
        if x.requires_grad:
            gxp = np.zeros_like(xp, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    gxp[u * dilation : u * dilation + H, v * dilation : v * dilation + W, :] += (
                        g2 @ wd[u, v].T
                    ).reshape(H, W, cin)
            x._accumulate(gxp[ph : ph + H, pw : pw + W, :])
        if w.requires_grad:
            gw = np.zeros_like(wd, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    sl = xp[u * dilation : u * dilation + H, v * dilation : v * dilation + W, :]
                    gw[u, v] = sl.reshape(H * W, cin).T @ g2
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1)))

    out._backward = bw
    return out


def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded per-channel convolution; x (H,W,C), w (kh,kw,C)."""
    xd, wd = x.data, w.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[2] != wd.shape[2]:
        raise ShapeError(
            f"depthwise_conv2d expects x (H,W,C) and w (kh,kw,C), got {xd.shape} and {wd.shape}"
        )
    kh, kw = wd.shape[0], wd.shape[1]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    H, W, C = xd.shape
    xp = np.pad(xd, ((ph, ph), (pw, pw), (0, 0)))
    y = np.zeros(xd.shape, dtype=np.result_type(xd, wd))
    for u in range(kh):
        for v in range(kw):
            y += xp[u : u + H, v : v + W, :] * wd[u, v]
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _node(y, parents)

    def bw(g):
        if x.requires_grad:
            gxp = np.zeros_like(xp, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    gxp[u : u + H, v : v + W, :] += g * wd[u, v]
            x._accumulate(gxp[ph : ph + H, pw : pw + W, :])
        if w.requires_grad:
            gw = np.zeros_like(wd, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    gw[u, v] = (xp[u : u + H, v : v + W, :] * g).sum(axis=(0, 1))
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1)))

    out._backward = bw
    return out


def avg_pool2x(x: Tensor) -> Tensor:
    """2x2 mean pooling; requires even spatial dims."""
    H, W, C = x.data.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2x requires even dims, got {H}x{W}")
    d = x.data
    y = 0.25 * (d[0::2, 0::2] + d[0::2, 1::2] + d[1::2, 0::2] + d[1::2, 1::2])
    out = _node(y, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(np.repeat(np.repeat(g, 2, axis=0), 2, axis=1) * 0.25)

    out._backward = bw
    return out


def upsample_nearest2x(x: Tensor) -> Tensor:
    y = np.repeat(np.repeat(x.data, 2, axis=0), 2, axis=1)
    out = _node(y, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g[0::2, 0::2] + g[0::2, 1::2] + g[1::2, 0::2] + g[1::2, 1::2])

    out._backward = bw
    return out


def pixel_shuffle2(x: Tensor) -> Tensor:
    """(H,W,4C) -> (2H,2W,C) sub-pixel rearrangement."""
    H, W, C4 = x.data.shape
    if C4 % 4:
        raise ShapeError(f"pixel_shuffle2 needs channels divisible by 4, got {C4}")
    C = C4 // 4
    y = (
        x.data.reshape(H, W, 2, 2, C)
        .transpose(0, 2, 1, 3, 4)
        .reshape(2 * H, 2 * W, C)
    )
    out = _node(y, (x,))

    def bw(g):
        if x.requires_grad:
            x._accumulate(
                g.reshape(H, 2, W, 2, C).transpose(0, 2, 1, 3, 4).reshape(H, W, C4)
            )

    out._backward = bw
    return out


def interleave2x2(a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
    """Assemble (2H,2W,C) from four (H,W,C) quarters laid out per 2x2 block:
    a top-left, b top-right, c bottom-left, d bottom-right."""
    a, b, c, d = map(as_tensor, (a, b, c, d))
    H, W, C = a.data.shape
    y = np.empty((2 * H, 2 * W, C), dtype=a.data.dtype)
    y[0::2, 0::2] = a.data
    y[0::2, 1::2] = b.data
    y[1::2, 0::2] = c.data
    y[1::2, 1::2] = d.data
    out = _node(y, (a, b, c, d))

    def bw(g):
        for t, sl in ((a, g[0::2, 0::2]), (b, g[0::2, 1::2]), (c, g[1::2, 0::2]), (d, g[1::2, 1::2])):
            if t.requires_grad:
                t._accumulate(sl)

    out._backward = bw
    return out


# -- graph traversal ------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into `.grad` of every reachable node."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
