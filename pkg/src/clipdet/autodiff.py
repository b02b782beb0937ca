"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

The engine is define-by-run: executing an op on tensors that require
gradients appends a node to the active tape. ``backward`` on a scalar walks
the tape in reverse append order, which is a valid topological order by
construction, and accumulates gradients additively into every leaf that
requires them. The tape is discarded after one backward pass; the next
forward pass records a fresh one.

All data is stored row-major as ``numpy.float64``. Debug mode (see
``set_debug_checks``) verifies after every op that outputs are finite and
that softmax slices are normalized; it is off by default because the checks
cost a full pass over every intermediate.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GraphError",
    "NumericsError",
    "ShapeError",
    "backward",
    "concat",
    "conv2d",
    "debug_checks_enabled",
    "linear",
    "matmul",
    "maximum",
    "minimum",
    "narrow",
    "no_grad",
    "parameter",
    "reshape",
    "set_debug_checks",
    "softmax",
    "standardize",
    "transpose",
]


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an op's contract."""


class GraphError(RuntimeError):
    """Raised on misuse of the recording tape (e.g. backward twice)."""


class NumericsError(ArithmeticError):
    """Raised by debug-mode guards when an op produces non-finite values."""


class _Node:
    __slots__ = ("op", "inputs", "out", "backward_fn", "graph")

    def __init__(self, op, inputs, out, backward_fn, graph):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn
        self.graph = graph


class _Graph:
    """Append-only record of executed ops; reverse append order is the
    backward traversal order."""

    __slots__ = ("nodes", "consumed")

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False


_graph = _Graph()
_grad_enabled = True
_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Globally enable or disable per-op finiteness/normalization guards."""
    global _debug_checks
    _debug_checks = bool(enabled)


def debug_checks_enabled() -> bool:
    return _debug_checks


@contextmanager
def no_grad():
    """Context manager that disables tape recording."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _guard(op: str, data: np.ndarray) -> None:
    if _debug_checks and not np.all(np.isfinite(data)):
        raise NumericsError(f"{op} produced non-finite values")


class Tensor:
    """Dense n-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        # asarray keeps 0-d inputs 0-d (ascontiguousarray would promote them)
        arr = np.asarray(data, dtype=np.float64, order="C")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method forms of common ops -------------------------------------

    def reshape(self, new_shape) -> "Tensor":
        return reshape(self, new_shape)

    def transpose(self, axes=None) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce_mean(self, axis, keepdims)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sqrt(self) -> "Tensor":
        return power(self, 0.5)

    def abs(self) -> "Tensor":
        return absolute(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(data, requires_grad=True)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _make(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    _guard(op, data)
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = _Node(op, inputs, out, backward_fn, _graph)
        _graph.nodes.append(node)
        out.node = node
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g)  # copy: g may be a view or shared with siblings
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    ``loss`` must be a scalar recorded on the active tape. The tape is
    consumed: a second backward without re-running the forward pass raises
    ``GraphError``. Non-leaf gradients are released after the walk.
    """
    global _graph
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad:
            _accumulate(loss, np.ones_like(loss.data))
            return
        raise GraphError("loss is not connected to any recorded graph")
    if loss.node.graph is not _graph or _graph.consumed:
        raise GraphError("backward called twice; re-run the forward pass to rebuild the graph")

    graph = _graph
    graph.consumed = True
    _graph = _Graph()

    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        g = node.out.grad
        if g is None:
            continue
        node.backward_fn(g)
    for node in graph.nodes:
        node.out.grad = None
        node.backward_fn = None  # free saved activations
    graph.nodes.clear()


# ---------------------------------------------------------------------------
# elementwise arithmetic (with numpy broadcasting)
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make("add", data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make("sub", data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make("mul", data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make("div", data, (a, b), bwd)


def power(a, exponent: float) -> Tensor:
    a = _as_tensor(a)
    p = float(exponent)
    data = a.data**p

    def bwd(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))

    return _make("pow", data, (a,), bwd)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def bwd(g):
        _accumulate(a, g * data)

    return _make("exp", data, (a,), bwd)


def log(a) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def bwd(g):
        _accumulate(a, g / a.data)

    return _make("log", data, (a,), bwd)


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    data = np.abs(a.data)

    def bwd(g):
        _accumulate(a, g * np.sign(a.data))

    return _make("abs", data, (a,), bwd)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    data = np.where(mask, a.data, 0.0)

    def bwd(g):
        _accumulate(a, g * mask)

    return _make("relu", data, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # split by sign so exp never overflows
    data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                    np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def bwd(g):
        _accumulate(a, g * data * (1.0 - data))

    return _make("sigmoid", data, (a,), bwd)


def maximum(a, b) -> Tensor:
    """Elementwise max; at ties the gradient goes to the first argument."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def bwd(g):
        _accumulate(a, _unbroadcast(g * take_a, a.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.shape))

    return _make("maximum", data, (a, b), bwd)


def minimum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def bwd(g):
        _accumulate(a, _unbroadcast(g * take_a, a.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.shape))

    return _make("minimum", data, (a, b), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _reduce_sum(a: Tensor, axis, keepdims: bool) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make("sum", data, (a,), bwd)


def _reduce_mean(a: Tensor, axis, keepdims: bool) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = math.prod(a.shape[ax] for ax in axes) if a.ndim else 1
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape) / count)

    return _make("mean", data, (a,), bwd)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def reshape(a, new_shape) -> Tensor:
    a = _as_tensor(a)
    new_shape = tuple(int(n) for n in new_shape)
    if math.prod(new_shape) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} elements) to {new_shape}")
    data = a.data.reshape(new_shape)

    def bwd(g):
        _accumulate(a, g.reshape(a.shape))

    return _make("reshape", data, (a,), bwd)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.ascontiguousarray(a.data.transpose(axes))

    def bwd(g):
        _accumulate(a, g.transpose(inverse))

    return _make("transpose", data, (a,), bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` elements along ``axis``."""
    a = _as_tensor(a)
    axis = axis % a.ndim
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow range [{start}, {start + length}) exceeds axis {axis} of shape {a.shape}"
        )
    key = tuple(slice(None) if i != axis else slice(start, start + length) for i in range(a.ndim))
    data = np.ascontiguousarray(a.data[key])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] = g
            _accumulate(a, full)

    return _make("narrow", data, (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat needs at least one tensor")
    axis = axis % ts[0].ndim
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            key = tuple(
                slice(None) if i != axis else slice(lo, hi) for i in range(t.ndim)
            )
            _accumulate(t, g[key])

    return _make("concat", data, tuple(ts), bwd)


# ---------------------------------------------------------------------------
# linear algebra and network primitives
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make("matmul", data, (a, b), bwd)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map along the last axis: ``x [.. x d_in] -> [.. x d_out]``."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if weight.ndim != 2:
        raise ShapeError(f"linear weight must be 2-D, got {weight.shape}")
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeError(f"linear input last dim {x.shape[-1]} != weight d_in {d_in}")
    lead = x.shape[:-1]
    xm = x.data.reshape(-1, d_in)
    data = xm @ weight.data
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (d_out,):
            raise ShapeError(f"linear bias shape {bias.shape} != ({d_out},)")
        data = data + bias.data
    data = data.reshape(*lead, d_out)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gm = g.reshape(-1, d_out)
        if x.requires_grad:
            _accumulate(x, (gm @ weight.data.T).reshape(x.shape))
        if weight.requires_grad:
            _accumulate(weight, xm.T @ gm)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, gm.sum(axis=0))

    return _make("linear", data, inputs, bwd)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``; slices sum to 1."""
    x = _as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)
    if _debug_checks:
        sums = data.sum(axis=axis)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise NumericsError("softmax slices do not sum to 1")
        if not np.all(data > 0.0):
            raise NumericsError("softmax produced non-positive probabilities")

    def bwd(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(x, data * (g - inner))

    return _make("softmax", data, (x,), bwd)


def standardize(x, axis, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over ``axis`` (no parameters)."""
    x = _as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    data = (x.data - mu) * inv

    def bwd(g):
        g_mean = g.mean(axis=axes, keepdims=True)
        gz_mean = (g * data).mean(axis=axes, keepdims=True)
        _accumulate(x, (g - g_mean - data * gz_mean) * inv)

    return _make("standardize", data, (x,), bwd)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """View of all kernel windows, shape (cin*kh*kw, oh*ow)."""
    cin = xp.shape[0]
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(cin, kh, kw, oh, ow),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
        writeable=False,
    )
    return windows.reshape(cin * kh * kw, oh * ow)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of one image: ``x [cin,h,w] -> [cout,h',w']``.

    Output spatial size is ``floor((n + 2*padding - k) / stride) + 1``.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects x [cin,h,w] and weight [cout,cin,kh,kw], got {x.shape} and {weight.shape}")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1

    if padding:
        xp = np.zeros((cin, h + 2 * padding, w + 2 * padding))
        xp[:, padding:padding + h, padding:padding + w] = x.data
    else:
        xp = x.data
    cols = np.ascontiguousarray(_im2col(xp, kh, kw, stride, oh, ow))
    wmat = weight.data.reshape(cout, cin * kh * kw)
    data = (wmat @ cols).reshape(cout, oh, ow)
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d bias shape {bias.shape} != ({cout},)")
        data = data + bias.data[:, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gm = g.reshape(cout, oh * ow)
        if weight.requires_grad:
            _accumulate(weight, (gm @ cols.T).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, gm.sum(axis=1))
        if x.requires_grad:
            dcols = (wmat.T @ gm).reshape(cin, kh, kw, oh, ow)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + oh * stride:stride, j:j + ow * stride:stride] += dcols[:, i, j]
            if padding:
                dxp = dxp[:, padding:padding + h, padding:padding + w]
            _accumulate(x, dxp)

    return _make("conv2d", data, inputs, bwd)
