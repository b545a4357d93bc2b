"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run tape: each primitive records its parents and a pullback
closure; `backward` walks the graph in reverse topological order with a
deterministic accumulation order so repeated runs are bit-identical.
Primitives never mutate their inputs. Arrays are float64 in test mode and
may be float32 in training; result dtypes follow the inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NanGradientError, ShapeError


class Tensor:
    """Dense array node. `grad` accumulates additively during backward."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_pullback", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._pullback = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if like is not None and arr.dtype != like.dtype:
        arr = arr.astype(like.dtype)
    return Tensor(arr)


def make_node(data, parents, pullback, op: str) -> Tensor:
    """Record a primitive result. `pullback(grad) -> per-parent gradients`.

    The pullback may return None in a slot whose parent does not require a
    gradient. Nodes whose parents all skip gradients degrade to leaves.
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._pullback = pullback
        out._op = op
    return out


def _topo_order(root: Tensor) -> list:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        # reversed keeps child visitation order equal to recorded parent order
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-accumulate gradients of a scalar loss into reachable tensors."""
    if loss.data.ndim != 0:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise NanGradientError("loss is non-finite before backward")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring gradients")

    order = _topo_order(loss)
    grads = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._pullback is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._pullback(g)):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NanGradientError(f"non-finite gradient produced by op {node._op!r}")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_data(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _broadcast_data("add", a, b)

    def pullback(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), pullback, "add")


def sub(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _broadcast_data("sub", a, b)

    def pullback(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), pullback, "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _broadcast_data("mul", a, b)
    ad, bd = a.data, b.data

    def pullback(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return make_node(ad * bd, (a, b), pullback, "mul")


def div(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _broadcast_data("div", a, b)
    ad, bd = a.data, b.data

    def pullback(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return make_node(ad / bd, (a, b), pullback, "div")


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


# ---------------------------------------------------------------------------
# matmul and shape ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def pullback(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), b.shape)
        return ga, gb

    return make_node(np.matmul(ad, bd), (a, b), pullback, "matmul")


def transpose(a: Tensor, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def pullback(g):
        return (np.transpose(g, inverse),)

    return make_node(np.transpose(a.data, axes), (a,), pullback, "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    original = a.shape

    def pullback(g):
        return (g.reshape(original),)

    return make_node(a.data.reshape(shape), (a,), pullback, "reshape")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def pullback(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), pullback, "concat"
    )


def take_slice(a: Tensor, key) -> Tensor:
    a = as_tensor(a)

    def pullback(g):
        out = np.zeros_like(a.data)
        out[key] = g
        return (out,)

    return make_node(a.data[key], (a,), pullback, "slice")


def embedding(table: Tensor, indices) -> Tensor:
    """Row lookup with scatter-add backward; indices are a constant int array."""
    table = as_tensor(table)
    idx = np.asarray(indices)

    def pullback(g):
        out = np.zeros_like(table.data)
        np.add.at(out, idx, g)
        return (out,)

    return make_node(table.data[idx], (table,), pullback, "embedding")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def pullback(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,), pullback, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    count = a.data.size if axis is None else np.prod([shape[i] for i in np.atleast_1d(axis)])

    def pullback(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return make_node(a.data.mean(axis=axis, keepdims=keepdims), (a,), pullback, "mean")


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    return make_node(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return make_node(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def swish(a: Tensor) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    y = a.data * s
    return make_node(y, (a,), lambda g: (g * (s + y * (1.0 - s)),), "swish")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return make_node(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return make_node(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return make_node(y, (a,), lambda g: (g * 0.5 / y,), "sqrt")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Hard clamp; gradient is identity strictly inside [lo, hi], zero outside."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return make_node(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,), "clip")


def glu(a: Tensor, axis: int = -1) -> Tensor:
    """Gated linear unit: split in half along axis, first half gated by sigmoid of second."""
    a = as_tensor(a)
    size = a.shape[axis]
    if size % 2 != 0:
        raise ShapeError("glu", a.shape, f"axis {axis} must be even")
    half = size // 2
    x, gate = np.split(a.data, 2, axis=axis)
    s = 1.0 / (1.0 + np.exp(-gate))

    def pullback(g):
        return (np.concatenate([g * s, g * x * s * (1.0 - s)], axis=axis),)

    return make_node(x * s, (a,), pullback, "glu")


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0. Mask drawn once at forward time."""
    a = as_tensor(a)
    if p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability {p} outside [0, 1)")
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / (1.0 - p)
    return make_node(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# normalization and softmax
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def pullback(g):
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dbeta = g.sum(axis=reduce_axes)
        dxhat = g * gd
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return make_node(gd * xhat + beta.data, (x, gamma, beta), pullback, "layer_norm")


def batch_norm_inference(
    x: Tensor, gamma: Tensor, beta: Tensor, running_mean, running_var, eps: float = 1e-5
) -> Tensor:
    """Batch norm folded to its inference affine form; statistics are constants."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mean_ = np.asarray(running_mean, dtype=x.dtype)
    var_ = np.asarray(running_var, dtype=x.dtype)
    inv = 1.0 / np.sqrt(var_ + eps)
    xhat = (x.data - mean_) * inv
    gd = gamma.data

    def pullback(g):
        reduce_axes = tuple(range(g.ndim - 1))
        return g * gd * inv, (g * xhat).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return make_node(gd * xhat + beta.data, (x, gamma, beta), pullback, "batch_norm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def pullback(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), pullback, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    sm = np.exp(y)

    def pullback(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return make_node(y, (x,), pullback, "log_softmax")


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

_CONV2D_INDEX_CACHE: dict = {}


def _conv2d_indices(h: int, w: int, kh: int, kw: int, stride: int, pad: int):
    key = (h, w, kh, kw, stride, pad)
    cached = _CONV2D_INDEX_CACHE.get(key)
    if cached is None:
        ho = (h + 2 * pad - kh) // stride + 1
        wo = (w + 2 * pad - kw) // stride + 1
        ii = (np.arange(ho) * stride)[:, None, None, None] + np.arange(kh)[None, None, :, None]
        jj = (np.arange(wo) * stride)[None, :, None, None] + np.arange(kw)[None, None, None, :]
        cached = (ho, wo, np.broadcast_to(ii, (ho, wo, kh, kw)), np.broadcast_to(jj, (ho, wo, kh, kw)))
        _CONV2D_INDEX_CACHE[key] = cached
    return cached


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 2, pad: int = 1) -> Tensor:
    """Strided 2D convolution. x: (H, W, Cin); w: (kh, kw, Cin, Cout); b: (Cout,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 3 or w.ndim != 4 or x.shape[2] != w.shape[2]:
        raise ShapeError("conv2d", x.shape, w.shape)
    h, width, cin = x.shape
    kh, kw, _, cout = w.shape
    ho, wo, ii, jj = _conv2d_indices(h, width, kh, kw, stride, pad)

    xp = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    col = xp[ii, jj, :].reshape(ho * wo, kh * kw * cin)
    w2 = w.data.reshape(kh * kw * cin, cout)
    y = (col @ w2 + b.data).reshape(ho, wo, cout)

    def pullback(g):
        g2 = g.reshape(ho * wo, cout)
        dw = (col.T @ g2).reshape(w.shape)
        db = g2.sum(axis=0)
        dcol = (g2 @ w2.T).reshape(ho, wo, kh, kw, cin)
        dxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                dxp[di : di + stride * ho : stride, dj : dj + stride * wo : stride, :] += dcol[
                    :, :, di, dj, :
                ]
        return dxp[pad : pad + h, pad : pad + width, :], dw, db

    return make_node(y, (x, w, b), pullback, "conv2d")


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Dense 1D convolution over time with 'same' padding, stride 1.

    x: (T, Cin); w: (K, Cin, Cout) with K odd; b: (Cout,).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 3 or x.shape[1] != w.shape[1] or w.shape[0] % 2 == 0:
        raise ShapeError("conv1d", x.shape, w.shape)
    t, cin = x.shape
    k, _, cout = w.shape
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (T, Cin, K)
    col = windows.transpose(0, 2, 1).reshape(t, k * cin)
    w2 = w.data.reshape(k * cin, cout)
    y = col @ w2 + b.data

    def pullback(g):
        dw = (col.T @ g).reshape(w.shape)
        db = g.sum(axis=0)
        dcol = (g @ w2.T).reshape(t, k, cin)
        dxp = np.zeros_like(xp)
        for dk in range(k):
            dxp[dk : dk + t, :] += dcol[:, dk, :]
        return dxp[pad : pad + t, :], dw, db

    return make_node(y, (x, w, b), pullback, "conv1d")


def conv1d_depthwise(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-channel 1D convolution with 'same' padding. x: (T, C); w: (K, C); b: (C,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or w.shape[0] % 2 == 0:
        raise ShapeError("conv1d_depthwise", x.shape, w.shape)
    t, c = x.shape
    k = w.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((pad, pad), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (T, C, K)
    wd = w.data
    y = np.einsum("tck,kc->tc", windows, wd) + b.data

    def pullback(g):
        dw = np.einsum("tck,tc->kc", windows, g)
        db = g.sum(axis=0)
        dxp = np.zeros_like(xp)
        for dk in range(k):
            dxp[dk : dk + t, :] += g * wd[dk]
        return dxp[pad : pad + t, :], dw, db

    return make_node(y, (x, w, b), pullback, "conv1d_depthwise")
