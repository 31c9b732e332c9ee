"""Reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable quantity in this library is a :class:`Tensor`: a numpy
array plus a gradient slot and enough provenance (parent tensors and a
backward closure) to replay the chain rule in reverse topological order.
The engine is deliberately small: first-order gradients only, CPU only,
float64 only.

Thread safety: a graph is single-owner while it is being built and while
``backward`` runs.  Graphs built on different threads share no state (the
grad-enabled flag is thread-local), and finished ``.grad`` arrays may be
read from any thread.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradCheckReport",
    "as_tensor",
    "backward",
    "grad_check",
    "no_grad",
]

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class no_grad:
    """Context manager that disables graph recording (forward values only)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.enabled = False
        return self

    def __exit__(self, *exc):
        _state.enabled = self._prev
        return False


class Tensor:
    """A float64 array with a gradient slot and backward provenance."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    # make ndarray <op> Tensor defer to the reflected Tensor operators
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: Callable | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], bwd: Callable) -> Tensor:
    """Wrap an op result, recording provenance only when gradients are on."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    """Elementwise x**p for a constant real exponent."""
    a = as_tensor(a)
    p = float(exponent)
    out = a.data ** p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), lambda g: (g * -np.sin(a.data),))


def arccos(a) -> Tensor:
    a = as_tensor(a)
    out = np.arccos(a.data)
    return _make(out, (a,), lambda g: (-g / np.sqrt(1.0 - a.data * a.data),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(-np.abs(a.data))  # stable in both tails
    out = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def absolute(a) -> Tensor:
    """Elementwise |x|; subgradient 0 at x = 0."""
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def maximum(a, other) -> Tensor:
    """Elementwise max; `other` may be a scalar constant or a Tensor.

    Ties route the gradient to the first operand.
    """
    a = as_tensor(a)
    if isinstance(other, Tensor):
        b = other
        mask = a.data >= b.data
        return _make(
            np.where(mask, a.data, b.data),
            (a, b),
            lambda g: (
                _unbroadcast(g * mask, a.data.shape),
                _unbroadcast(g * ~mask, b.data.shape),
            ),
        )
    c = float(other)
    mask = a.data >= c
    return _make(np.maximum(a.data, c), (a,), lambda g: (g * mask,))


def minimum(a, other) -> Tensor:
    """Elementwise min; ties route the gradient to the first operand."""
    a = as_tensor(a)
    if isinstance(other, Tensor):
        b = other
        mask = a.data <= b.data
        return _make(
            np.where(mask, a.data, b.data),
            (a, b),
            lambda g: (
                _unbroadcast(g * mask, a.data.shape),
                _unbroadcast(g * ~mask, b.data.shape),
            ),
        )
    c = float(other)
    mask = a.data <= c
    return _make(np.minimum(a.data, c), (a,), lambda g: (g * mask,))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; zero subgradient outside the interval."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean mask (the mask itself is not differentiated)."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    return _make(
        np.where(mask, a.data, b.data),
        (a, b),
        lambda g: (
            _unbroadcast(g * mask, a.data.shape),
            _unbroadcast(g * ~mask, b.data.shape),
        ),
    )


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product with numpy stacking semantics ((..., n, m) @ (..., m, k))."""
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        if a.ndim == 1 and b.ndim == 1:
            return g * b.data, g * a.data
        ad = a.data if a.ndim > 1 else a.data[None, :]
        bd = b.data if b.ndim > 1 else b.data[:, None]
        gg = g
        if a.ndim == 1:
            gg = gg[..., None, :]
        if b.ndim == 1:
            gg = gg[..., :, None]
        ga = gg @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ gg
        if a.ndim == 1:
            ga = ga[..., 0, :]
        if b.ndim == 1:
            gb = gb[..., :, 0]
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(a.data @ b.data, (a, b), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concatenate(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    return _make(
        np.stack([p.data for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.moveaxis(g, axis, 0)),
    )


def getitem(a, key) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(a.data[key], (a,), bwd)


def gather(a, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Take rows/elements along an axis by an integer index array."""
    a = as_tensor(a)
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= a.data.shape[axis]):
        raise IndexError("gather index out of range")

    def bwd(g):
        ga = np.zeros_like(a.data)
        moved = np.moveaxis(ga, axis, 0)
        np.add.at(moved, indices.ravel(),
                  np.moveaxis(g, axis, 0).reshape((indices.size,) + moved.shape[1:]))
        return (ga,)

    return _make(np.take(a.data, indices, axis=axis), (a,), bwd)


def index_add(num: int, indices: np.ndarray, values) -> Tensor:
    """Scatter-add `values` into a fresh array of leading size `num`.

    out[j] = sum of values[i] over all i with indices[i] == j.
    """
    values = as_tensor(values)
    indices = np.asarray(indices)
    if indices.ndim != 1 or indices.shape[0] != values.data.shape[0]:
        raise ValueError("indices must be 1-D and match the leading axis of values")
    if indices.size and (indices.min() < 0 or indices.max() >= num):
        raise IndexError("index_add index out of range")
    out = np.zeros((num,) + values.data.shape[1:])
    np.add.at(out, indices, values.data)
    return _make(out, (values,), lambda g: (g[indices],))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg / n, a.data.shape).copy(),)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd)


def _extreme(a, axis, keepdims, argfn, valfn):
    """Shared min/max reduction with the first-extremum subgradient."""
    a = as_tensor(a)
    if axis is None:
        idx = argfn(a.data)
        out = a.data.ravel()[idx]

        def bwd(g):
            ga = np.zeros_like(a.data)
            ga.ravel()[idx] = g
            return (ga,)

        return _make(np.asarray(out), (a,), bwd)

    idx = argfn(a.data, axis=axis)
    out = valfn(a.data, axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), gg, axis=axis)
        return (ga,)

    return _make(out, (a,), bwd)


def tmin(a, axis=None, keepdims=False) -> Tensor:
    """Min reduction; ties send the gradient to the first minimum."""
    return _extreme(a, axis, keepdims, np.argmin, np.min)


def tmax(a, axis=None, keepdims=False) -> Tensor:
    """Max reduction; ties send the gradient to the first maximum."""
    return _extreme(a, axis, keepdims, np.argmax, np.max)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------------
# bilinear sampling
# ---------------------------------------------------------------------------

def bilinear_sample(img, x, y) -> Tensor:
    """Sample an (H, W, C) image at fractional pixel coordinates.

    `x` and `y` share an arbitrary shape S; the result has shape S + (C,).
    Pixel centers sit at integer coordinates; coordinates are clamped to the
    image border (zero gradient to a coordinate once it is clamped).
    Differentiable with respect to the image and to both coordinate arrays.
    """
    img, x, y = as_tensor(img), as_tensor(x), as_tensor(y)
    H, W = img.data.shape[:2]
    xd = np.clip(x.data, 0.0, W - 1.0)
    yd = np.clip(y.data, 0.0, H - 1.0)
    x0 = np.floor(xd).astype(np.intp)
    y0 = np.floor(yd).astype(np.intp)
    x0 = np.minimum(x0, max(W - 2, 0))
    y0 = np.minimum(y0, max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xd - x0
    fy = yd - y0
    # coordinate gradient is live only where the raw coordinate was not clamped
    live_x = ((x.data > 0.0) & (x.data < W - 1.0)) if W > 1 else np.zeros_like(xd, bool)
    live_y = ((y.data > 0.0) & (y.data < H - 1.0)) if H > 1 else np.zeros_like(yd, bool)

    c00 = img.data[y0, x0]
    c01 = img.data[y0, x1]
    c10 = img.data[y1, x0]
    c11 = img.data[y1, x1]
    wx, wy = fx[..., None], fy[..., None]
    out = (c00 * (1 - wy) * (1 - wx) + c01 * (1 - wy) * wx
           + c10 * wy * (1 - wx) + c11 * wy * wx)

    def bwd(g):
        H_, W_ = img.data.shape[:2]
        C = img.data.shape[2]
        gimg = np.zeros_like(img.data)
        flat = gimg.reshape(-1, C)
        for yy, xx, ww in ((y0, x0, (1 - wy) * (1 - wx)), (y0, x1, (1 - wy) * wx),
                           (y1, x0, wy * (1 - wx)), (y1, x1, wy * wx)):
            idx = (yy * W_ + xx).ravel()
            contrib = (g * ww).reshape(-1, C)
            for c in range(C):
                flat[:, c] += np.bincount(idx, weights=contrib[:, c],
                                          minlength=H_ * W_)
        dx = ((1 - wy) * (c01 - c00) + wy * (c11 - c10))
        dy = ((1 - wx) * (c10 - c00) + wx * (c11 - c01))
        gx = (g * dx).sum(axis=-1) * live_x
        gy = (g * dy).sum(axis=-1) * live_y
        return gimg, gx, gy

    return _make(out, (img, x, y), bwd)


def weighted_blend_sample(img, x, y, w) -> Tensor:
    """Per-face weighted sum of bilinear texture samples, fused.

    out[b, h, w, :] = sum_f w[b, f, h, w] * bilinear(img; x, y)[b, f, h, w, :]

    Equivalent to ``tsum(reshape(w, w.shape + (1,)) * bilinear_sample(img, x,
    y), axis=1)`` but never materializes the per-face color array; the
    channel and corner loops run on (B, F, H, W) scalars instead.
    """
    img, x, y, w = as_tensor(img), as_tensor(x), as_tensor(y), as_tensor(w)
    H, W, C = img.data.shape
    xd = np.clip(x.data, 0.0, W - 1.0)
    yd = np.clip(y.data, 0.0, H - 1.0)
    x0 = np.minimum(np.floor(xd).astype(np.intp), max(W - 2, 0))
    y0 = np.minimum(np.floor(yd).astype(np.intp), max(H - 2, 0))
    fx = xd - x0
    fy = yd - y0
    live_x = ((x.data > 0.0) & (x.data < W - 1.0)) if W > 1 else np.zeros_like(xd, bool)
    live_y = ((y.data > 0.0) & (y.data < H - 1.0)) if H > 1 else np.zeros_like(yd, bool)
    base = y0 * W + x0
    corner_idx = (base, base + 1, base + W, base + W + 1)
    corner_wgt = ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)
    tex_flat = img.data.reshape(-1, C)

    batch = x.data.shape[0]
    out_shape = (batch,) + x.data.shape[2:] + (C,)
    out = np.empty(out_shape)
    colors = []
    for c in range(C):
        acc = corner_wgt[0] * np.take(tex_flat[:, c], corner_idx[0])
        for k in range(1, 4):
            acc += corner_wgt[k] * np.take(tex_flat[:, c], corner_idx[k])
        colors.append(acc)
        out[..., c] = (w.data * acc).sum(axis=1)

    def bwd(g):
        gimg = np.zeros_like(tex_flat)
        for k in range(4):
            idx = corner_idx[k].ravel()
            for c in range(C):
                contrib = (w.data * corner_wgt[k] * g[:, None, ..., c]).ravel()
                gimg[:, c] += np.bincount(idx, weights=contrib, minlength=H * W)
        gw = np.zeros_like(w.data)
        for c in range(C):
            gw += colors[c] * g[:, None, ..., c]
        # per-corner scalars s_k = sum_c tex_c[idx_k] * g_c * w
        s = []
        for k in range(4):
            acc = np.take(tex_flat[:, 0], corner_idx[k]) * g[:, None, ..., 0]
            for c in range(1, C):
                acc += np.take(tex_flat[:, c], corner_idx[k]) * g[:, None, ..., c]
            s.append(acc * w.data)
        gx = ((s[1] - s[0]) * (1 - fy) + (s[3] - s[2]) * fy) * live_x
        gy = ((s[2] - s[0]) * (1 - fx) + (s[3] - s[1]) * fx) * live_y
        return gimg.reshape(img.data.shape), gx, gy, gw

    return _make(out, (img, x, y, w), bwd)


# ---------------------------------------------------------------------------
# backward traversal and gradient checking
# ---------------------------------------------------------------------------

def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Populate `.grad` on every tensor the root depends on.

    The root must be scalar unless an explicit `seed` (d(loss)/d(root)) is
    given.  Each node is visited exactly once, in reverse topological order;
    fan-out accumulates gradients additively.  Interior gradients are freed
    as soon as they have been consumed; leaves keep theirs.
    """
    if not root.requires_grad:
        raise ValueError("root does not require gradients")
    if seed is None:
        if root.data.size != 1:
            raise ValueError("backward root must be scalar (or pass an explicit seed)")
        seed = np.ones_like(root.data)
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != root.data.shape:
            raise ValueError("seed shape does not match root shape")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    for node in topo:
        node.grad = None
    root.grad = seed.copy()

    for node in reversed(topo):
        if node._bwd is None or node.grad is None:
            continue
        grads = node._bwd(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g)  # defensive copy: g may be shared
            else:
                parent.grad += g
        if node._parents:
            node.grad = None  # interior node: free as soon as consumed


REL_ERROR_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    """Comparison of backward gradients against central finite differences."""

    max_rel_error: float
    per_param_errors: np.ndarray
    step: float
    nonfinite_evals: int = 0

    def ok(self, tol: float) -> bool:
        return np.isfinite(self.max_rel_error) and self.max_rel_error < tol


def grad_check(fn: Callable[[Tensor], Tensor], point, step: float = 1e-5,
               indices: Sequence[int] | None = None) -> GradCheckReport:
    """Check d(fn)/d(point) against (f(x+h) - f(x-h)) / 2h, componentwise.

    `fn` maps a single Tensor parameter to a scalar Tensor.  `indices`
    restricts the (flattened) components that are probed numerically; the
    analytic gradient is always computed in full.  Non-finite function
    values are reported through `nonfinite_evals` and as infinite errors,
    never silently dropped.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=np.float64)
    p = Tensor(point, requires_grad=True)
    out = fn(p)
    if out.data.size != 1:
        raise ValueError("grad_check target must be scalar")
    backward(out)
    analytic = (p.grad if p.grad is not None else np.zeros_like(point)).ravel()

    flat = point.ravel()
    check = range(flat.size) if indices is None else indices
    errors = np.full(flat.size, np.nan)
    nonfinite = 0
    with no_grad():
        for i in check:
            probe = flat.copy()
            probe[i] = flat[i] + step
            fp = float(fn(Tensor(probe.reshape(point.shape))).data)
            probe[i] = flat[i] - step
            fm = float(fn(Tensor(probe.reshape(point.shape))).data)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                nonfinite += 1
                errors[i] = np.inf
                continue
            numeric = (fp - fm) / (2.0 * step)
            scale = max(abs(analytic[i]), abs(numeric), REL_ERROR_FLOOR)
            rel = abs(analytic[i] - numeric) / scale
            # a non-finite analytic gradient is an error, never "unchecked"
            errors[i] = rel if np.isfinite(rel) else np.inf
    checked = errors[~np.isnan(errors)]
    max_err = float(checked.max()) if checked.size else 0.0
    return GradCheckReport(
        max_rel_error=max_err,
        per_param_errors=errors.reshape(point.shape),
        step=step,
        nonfinite_evals=nonfinite,
    )
