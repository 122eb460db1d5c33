"""Define-by-run differentiation engine over float64 numpy arrays.

Every primitive records its parents and a backward rule written in terms of
other primitives, so a reverse sweep run with ``create_graph=True`` is itself
recorded and can be differentiated again. Forward-mode tangents ride along on
``Tensor.tangent`` and are likewise built from recorded primitives.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "NonFiniteError",
    "as_tensor",
    "no_grad",
    "grad",
    "memory_meter",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "linear",
    "transpose",
    "relu",
    "sum",
    "sqrt",
    "norm",
    "inner",
    "reshape",
    "broadcast_to",
    "sum_to",
    "take",
    "scatter",
    "linear_map",
]


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


class _State(threading.local):
    def __init__(self):
        self.record = True
        self.tapes = []


_state = _State()

_mem_lock = threading.Lock()
_mem = {"live": 0, "peak": 0}


class _MemoryMeter:
    def __init__(self):
        self.baseline = 0
        self.peak_bytes = 0


@contextlib.contextmanager
def memory_meter():
    """Track peak bytes held by tensor buffers allocated inside the block.

    The reported ``peak_bytes`` is relative to the live total on entry.
    """
    meter = _MemoryMeter()
    with _mem_lock:
        meter.baseline = _mem["live"]
        _mem["peak"] = _mem["live"]
    try:
        yield meter
    finally:
        with _mem_lock:
            meter.peak_bytes = _mem["peak"] - meter.baseline


@contextlib.contextmanager
def no_grad():
    """Disable graph recording. Forward-mode tangents are still propagated."""
    prev = _state.record
    _state.record = False
    try:
        yield
    finally:
        _state.record = prev


@contextlib.contextmanager
def _recording(flag):
    prev = _state.record
    _state.record = flag
    try:
        yield
    finally:
        _state.record = prev


class Tape:
    """Ordered record of the primitives executed while the tape is active.

    ``replay`` re-executes every recorded node from its parents' current
    values, which reproduces the recorded values exactly when nothing changed.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _state.tapes.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def replay(self):
        out = []
        for node in self.nodes:
            out.append(node._fwd(*[p.data for p in node.parents]))
        return out


class Tensor:
    __slots__ = (
        "data",
        "parents",
        "requires_grad",
        "tangent",
        "op",
        "_backward",
        "_fwd",
        "_nbytes",
        "__weakref__",
    )

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.parents = ()
        self.requires_grad = requires_grad
        self.tangent = None
        self.op = "leaf"
        self._backward = None
        self._fwd = None
        self._nbytes = arr.nbytes
        with _mem_lock:
            live = _mem["live"] + self._nbytes
            _mem["live"] = live
            if live > _mem["peak"]:
                _mem["peak"] = live

    def __del__(self):
        try:
            with _mem_lock:
                _mem["live"] -= self._nbytes
        except Exception:  # interpreter shutdown
            pass

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(fwd, parents, backward, tangent_fn, op):
    with np.errstate(all="ignore"):
        data = fwd(*[p.data for p in parents])
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by '{op}'")
    out = Tensor(data)
    out.op = op
    if _state.record and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out._backward = backward
        out._fwd = fwd
        for tape in _state.tapes:
            tape.nodes.append(out)
    if any(p.tangent is not None for p in parents):
        out.tangent = tangent_fn()
    return out


def _tsum(*terms):
    acc = None
    for t in terms:
        if t is None:
            continue
        acc = t if acc is None else add(acc, t)
    return acc


# ---------------------------------------------------------------------------
# shape plumbing


def _unbroadcast_axes(shape, target):
    ndiff = len(shape) - len(target)
    axes = list(range(ndiff))
    for i, s in enumerate(target):
        if s == 1 and shape[ndiff + i] != 1:
            axes.append(ndiff + i)
    return tuple(axes)


def sum_to(a, shape):
    """Sum ``a`` down to ``shape`` (inverse of broadcasting)."""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    axes = _unbroadcast_axes(a.shape, shape)

    def fwd(x):
        return np.sum(x, axis=axes, keepdims=True).reshape(shape)

    def backward(g, needs):
        return (broadcast_to(g, a.shape),)

    return _make(fwd, (a,), backward, lambda: sum_to(a.tangent, shape), "sum_to")


def broadcast_to(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a

    def fwd(x):
        return np.broadcast_to(x, shape).copy()

    def backward(g, needs):
        return (sum_to(g, a.shape),)

    return _make(fwd, (a,), backward, lambda: broadcast_to(a.tangent, shape), "broadcast_to")


def _bshape(a, b):
    return np.broadcast_shapes(a.shape, b.shape)


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)
    old = a.shape

    def fwd(x):
        return x.reshape(shape)

    def backward(g, needs):
        return (reshape(g, old),)

    return _make(fwd, (a,), backward, lambda: reshape(a.tangent, shape), "reshape")


def transpose(a):
    a = as_tensor(a)

    def fwd(x):
        return x.T.copy()

    def backward(g, needs):
        return (transpose(g),)

    return _make(fwd, (a,), backward, lambda: transpose(a.tangent), "transpose")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (
            sum_to(g, a.shape) if needs[0] else None,
            sum_to(g, b.shape) if needs[1] else None,
        )

    def tangent():
        shape = _bshape(a, b)
        ta = broadcast_to(a.tangent, shape) if a.tangent is not None else None
        tb = broadcast_to(b.tangent, shape) if b.tangent is not None else None
        return _tsum(ta, tb)

    return _make(np.add, (a, b), backward, tangent, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (
            sum_to(g, a.shape) if needs[0] else None,
            neg(sum_to(g, b.shape)) if needs[1] else None,
        )

    def tangent():
        shape = _bshape(a, b)
        ta = broadcast_to(a.tangent, shape) if a.tangent is not None else None
        tb = neg(broadcast_to(b.tangent, shape)) if b.tangent is not None else None
        return _tsum(ta, tb)

    return _make(np.subtract, (a, b), backward, tangent, "sub")


def neg(a):
    a = as_tensor(a)

    def backward(g, needs):
        return (neg(g),)

    return _make(np.negative, (a,), backward, lambda: neg(a.tangent), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (
            sum_to(mul(g, b), a.shape) if needs[0] else None,
            sum_to(mul(g, a), b.shape) if needs[1] else None,
        )

    def tangent():
        ta = mul(a.tangent, b) if a.tangent is not None else None
        tb = mul(a, b.tangent) if b.tangent is not None else None
        return broadcast_to(_tsum(ta, tb), _bshape(a, b))

    return _make(np.multiply, (a, b), backward, tangent, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        ga = sum_to(div(g, b), a.shape) if needs[0] else None
        gb = None
        if needs[1]:
            gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape)
        return ga, gb

    def tangent():
        ta = div(a.tangent, b) if a.tangent is not None else None
        tb = None
        if b.tangent is not None:
            tb = neg(div(mul(a, b.tangent), mul(b, b)))
        return broadcast_to(_tsum(ta, tb), _bshape(a, b))

    return _make(np.divide, (a, b), backward, tangent, "div")


def sqrt(a):
    a = as_tensor(a)
    out = None

    def backward(g, needs):
        return (div(g, mul(2.0, out)),)

    def tangent():
        return div(a.tangent, mul(2.0, out))

    out = _make(np.sqrt, (a,), backward, lambda: None, "sqrt")
    if a.tangent is not None:
        out.tangent = tangent()
    return out


def relu(a):
    """Rectifier with derivative 0 at exactly 0."""
    a = as_tensor(a)
    mask = Tensor((a.data > 0).astype(np.float64))

    def fwd(x):
        return np.maximum(x, 0.0)

    def backward(g, needs):
        return (mul(g, mask),)

    return _make(fwd, (a,), backward, lambda: mul(a.tangent, mask), "relu")


# ---------------------------------------------------------------------------
# reductions and linear algebra


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    in_shape = a.shape

    def fwd(x):
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(g, needs):
        if axis is None:
            kept = (1,) * len(in_shape)
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            axes = tuple(ax % len(in_shape) for ax in axes)
            kept = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
        return (broadcast_to(reshape(g, kept), in_shape),)

    return _make(fwd, (a,), backward, lambda: sum(a.tangent, axis=axis, keepdims=keepdims), "sum")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def backward(g, needs):
        return (
            matmul(g, transpose(b)) if needs[0] else None,
            matmul(transpose(a), g) if needs[1] else None,
        )

    def tangent():
        ta = matmul(a.tangent, b) if a.tangent is not None else None
        tb = matmul(a, b.tangent) if b.tangent is not None else None
        return _tsum(ta, tb)

    return _make(np.matmul, (a, b), backward, tangent, "matmul")


def linear(h, w, b=None):
    """Affine layer ``h @ w.T + b`` for a batch ``h`` (B, in) and weight ``w`` (out, in)."""
    h, w = as_tensor(h), as_tensor(w)
    if h.ndim != 2 or w.ndim != 2 or h.shape[1] != w.shape[1]:
        raise ValueError(f"linear dimension mismatch: {h.shape} with weight {w.shape}")
    parents = (h, w) if b is None else (h, w, as_tensor(b))

    def fwd(x, wd, bd=None):
        out = x @ wd.T
        if bd is not None:
            out += bd
        return out

    def backward(g, needs):
        grads = [
            matmul(g, w) if needs[0] else None,
            matmul(transpose(g), h) if needs[1] else None,
        ]
        if b is not None:
            grads.append(sum_to(g, parents[2].shape) if needs[2] else None)
        return tuple(grads)

    def tangent():
        th = linear(h.tangent, w) if h.tangent is not None else None
        tw = linear(h, w.tangent) if w.tangent is not None else None
        tb = None
        if b is not None and parents[2].tangent is not None:
            tb = broadcast_to(parents[2].tangent, (h.shape[0], w.shape[0]))
        return _tsum(th, tw, tb)

    return _make(fwd, parents, backward, tangent, "linear")


def _safe_div_np(x, n):
    out = np.zeros(np.broadcast_shapes(x.shape, n.shape))
    np.divide(x, n, out=out, where=np.broadcast_to(n != 0, out.shape))
    return out


def norm(a, axis=-1, keepdims=False):
    """Euclidean norm along ``axis``; the (sub)gradient at the origin is 0."""
    a = as_tensor(a)
    out = None

    def fwd(x):
        return np.sqrt(np.sum(x * x, axis=axis, keepdims=keepdims))

    def backward(g, needs):
        gk = g if keepdims else _expand(g, axis, a.ndim)
        nk = out if keepdims else _expand(out, axis, a.ndim)
        return (mul(a, _safe_div(gk, nk)),)

    def tangent():
        nk = out if keepdims else _expand(out, axis, a.ndim)
        return sum(mul(a.tangent, _safe_div(a, nk)), axis=axis, keepdims=keepdims)

    out = _make(fwd, (a,), backward, lambda: None, "norm")
    if a.tangent is not None:
        out.tangent = tangent()
    return out


def _expand(t, axis, ndim):
    shape = list(t.shape)
    ax = axis % ndim
    shape.insert(ax, 1)
    return reshape(t, shape)


def _safe_div(a, b):
    """a / b with 0 wherever b == 0 (b is treated as nonzero there by the rule)."""
    a, b = as_tensor(a), as_tensor(b)
    nz = Tensor((b.data != 0).astype(np.float64))
    b_safe = add(b, Tensor((b.data == 0).astype(np.float64)))
    return mul(div(a, b_safe), nz)


def inner(a, b, axis=-1):
    """Row-wise inner product along ``axis``."""
    return sum(mul(a, b), axis=axis)


def take(a, idx):
    """Select ``a[idx]`` (basic or integer-array indexing)."""
    a = as_tensor(a)
    in_shape = a.shape

    def fwd(x):
        return np.array(x[idx], dtype=np.float64)

    def backward(g, needs):
        return (scatter(g, idx, in_shape),)

    return _make(fwd, (a,), backward, lambda: take(a.tangent, idx), "take")


def scatter(g, idx, shape):
    """Zeros of ``shape`` with ``g`` accumulated at ``idx`` (adjoint of take)."""
    g = as_tensor(g)

    def fwd(x):
        out = np.zeros(shape)
        np.add.at(out, idx, x)
        return out

    def backward(h, needs):
        return (take(h, idx),)

    return _make(fwd, (g,), backward, lambda: scatter(g.tangent, idx, shape), "scatter")


def linear_map(a, forward, adjoint, out_last=None, name="linear_map"):
    """Apply a fixed linear map along the last axis of ``a``.

    ``forward`` and ``adjoint`` act on numpy arrays of shape (..., n) and must
    be exact transposes of each other.
    """
    a = as_tensor(a)

    def backward(g, needs):
        return (linear_map(g, adjoint, forward, name=name + "^T"),)

    return _make(
        forward, (a,), backward, lambda: linear_map(a.tangent, forward, adjoint, name=name), name
    )


# ---------------------------------------------------------------------------
# reverse sweep


def _topo(outputs):
    order, seen = [], set()
    for root in outputs:
        if id(root) in seen or not root.requires_grad:
            continue
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def grad(outputs, inputs, grad_outputs=None, create_graph=False, allow_unused=True):
    """Reverse-mode gradients of ``outputs`` w.r.t. ``inputs``.

    With ``create_graph=True`` the sweep is recorded, so the returned tensors
    can be differentiated again. Unreached inputs get zero gradients.
    """
    if isinstance(outputs, Tensor):
        outputs = [outputs]
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    if grad_outputs is None:
        grad_outputs = [None] * len(outputs)
    elif isinstance(grad_outputs, (Tensor, np.ndarray)):
        grad_outputs = [grad_outputs]

    seeds = []
    for out, g in zip(outputs, grad_outputs):
        if g is None:
            if out.size != 1:
                raise ValueError("grad_outputs required for non-scalar outputs")
            g = np.ones(out.shape)
        g = as_tensor(g)
        if g.shape != out.shape:
            raise ValueError(f"grad_output shape {g.shape} does not match output {out.shape}")
        seeds.append((out, g))

    order = _topo([o for o, _ in seeds])
    targets = {id(t) for t in inputs}
    # nodes with a path to some requested input
    relevant = set()
    for node in order:
        if id(node) in targets or any(id(p) in relevant for p in node.parents):
            relevant.add(id(node))

    grads = {}
    with _recording(create_graph):
        for out, g in seeds:
            if id(out) in relevant:
                grads[id(out)] = g if id(out) not in grads else add(grads[id(out)], g)
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            needs = tuple(id(p) in relevant for p in node.parents)
            if not any(needs):
                continue
            pgrads = node._backward(g, needs)
            for p, pg, need in zip(node.parents, pgrads, needs):
                if not need or pg is None:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else add(grads[key], pg)

    result = []
    for t in inputs:
        g = grads.get(id(t))
        if g is None:
            if not allow_unused:
                raise ValueError("an input was not reached from the outputs")
            g = Tensor(np.zeros(t.shape))
        result.append(g)
    return result
