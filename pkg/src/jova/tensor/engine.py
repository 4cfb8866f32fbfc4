"""Dense tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active (``with Tape() as tape``)
and touching at least one tensor that requires gradients are recorded in
execution order. ``tape.backward(loss)`` walks the record in reverse,
visiting each node once, and accumulates into ``Parameter.grad``. Outside a
tape, operations only compute values, which is how inference runs.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from jova.errors import NumericalOverflow, ShapeMismatch

_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def get_default_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(np.float32))


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 are supported")
    _local.dtype = dtype


@contextmanager
def default_dtype(dtype):
    """Temporarily switch the precision used for new tensors and parameters."""
    old = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


class Tensor:
    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(get_default_dtype())
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A learned tensor. ``grad`` always has the value's shape."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True,
                         dtype=dtype if dtype is not None else get_default_dtype())
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    forward: Callable
    backward: Callable
    kwargs: dict = field(default_factory=dict)


class Tape:
    """Ordered record of differentiable operations for one training step."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ValueError("tape is empty; nothing to differentiate")
        if not np.all(np.isfinite(loss.data)):
            raise NumericalOverflow(f"loss is not finite: {loss.item()}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            needs = tuple(t.requires_grad for t in node.inputs)
            input_grads = node.backward(g, needs)
            for t, gi in zip(node.inputs, input_grads):
                if gi is None or not t.requires_grad:
                    continue
                if isinstance(t, Parameter):
                    if not np.all(np.isfinite(gi)):
                        raise NumericalOverflow(f"non-finite gradient for {t.name}")
                    t.grad += gi
                elif id(t) in grads:
                    grads[id(t)] = grads[id(t)] + gi
                else:
                    grads[id(t)] = gi

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded node from its inputs, in order.

        Returns the recomputed outputs without touching the originals.
        """
        values: dict[int, np.ndarray] = {}
        out = []
        for node in self.nodes:
            arrays = [values.get(id(t), t.data) for t in node.inputs]
            value, _ = node.forward(*arrays, **node.kwargs)
            values[id(node.output)] = value
            out.append(value)
        return out


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype if dtype is not None else get_default_dtype())


def _apply(op: str, forward: Callable, inputs, **kwargs) -> Tensor:
    out, backward = forward(*[t.data for t in inputs], **kwargs)
    requires = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=requires, dtype=out.dtype)
    tape = current_tape()
    if requires and tape is not None:
        tape.nodes.append(Node(op, tuple(inputs), result, forward, backward, kwargs))
    return result


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(b, dtype=a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(a, dtype=b.dtype)
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# --- elementwise --------------------------------------------------------------

def _add_fwd(a, b):
    return a + b, lambda g, needs: (unbroadcast(g, a.shape) if needs[0] else None,
                                    unbroadcast(g, b.shape) if needs[1] else None)


def _sub_fwd(a, b):
    return a - b, lambda g, needs: (unbroadcast(g, a.shape) if needs[0] else None,
                                    unbroadcast(-g, b.shape) if needs[1] else None)


def _mul_fwd(a, b):
    return a * b, lambda g, needs: (unbroadcast(g * b, a.shape) if needs[0] else None,
                                    unbroadcast(g * a, b.shape) if needs[1] else None)


def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting (e.g. a bias over rows)."""
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    return _apply("add", _add_fwd, (a, b))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    return _apply("sub", _sub_fwd, (a, b))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")
    return _apply("mul", _mul_fwd, (a, b))


def _relu_fwd(x):
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype), lambda g, needs: (g * mask,)


def relu(x: Tensor) -> Tensor:
    return _apply("relu", _relu_fwd, (x,))


def _sigmoid_fwd(x):
    # split by sign so exp never overflows
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, lambda g, needs: (g * y * (1 - y),)


def sigmoid(x: Tensor) -> Tensor:
    return _apply("sigmoid", _sigmoid_fwd, (x,))


def _tanh_fwd(x):
    y = np.tanh(x)
    return y, lambda g, needs: (g * (1 - y * y),)


def tanh(x: Tensor) -> Tensor:
    return _apply("tanh", _tanh_fwd, (x,))


# --- linear algebra and shape ----------------------------------------------

def _matmul_fwd(a, b):
    out = np.matmul(a, b)

    def backward(g, needs):
        ga = gb = None
        if needs[0]:
            ga = unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
        if needs[1]:
            if b.ndim == 2:
                gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
        return ga, gb

    return out, backward


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch(f"matmul: batch dims {a.shape} vs {b.shape}") from None
    return _apply("matmul", _matmul_fwd, (a, b))


def _transpose_fwd(x, axes):
    inverse = np.argsort(axes)
    return np.transpose(x, axes), lambda g, needs: (np.transpose(g, inverse),)


def transpose(x: Tensor, axes) -> Tensor:
    return _apply("transpose", _transpose_fwd, (x,), axes=tuple(axes))


def _reshape_fwd(x, shape):
    return x.reshape(shape), lambda g, needs: (g.reshape(x.shape),)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        np.empty(x.shape, dtype=np.bool_).reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {x.shape} -> {shape}") from None
    return _apply("reshape", _reshape_fwd, (x,), shape=shape)


def _getitem_fwd(x, index):
    out = x[index]

    basic = all(isinstance(i, (int, slice)) or i is None or i is Ellipsis
                for i in (index if isinstance(index, tuple) else (index,)))

    def backward(g, needs):
        gx = np.zeros_like(x)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return np.array(out, copy=True), backward


def getitem(x: Tensor, index) -> Tensor:
    return _apply("getitem", _getitem_fwd, (x,), index=index)


def _concat_fwd(*xs, axis):
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return np.concatenate(xs, axis=axis), lambda g, needs: tuple(np.split(g, sizes, axis=axis))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise ShapeMismatch(f"concat: {ref} vs {t.shape} along axis {axis}")
    return _apply("concat", _concat_fwd, tuple(tensors), axis=axis)


def _stack_fwd(*xs, axis):
    n = len(xs)
    return np.stack(xs, axis=axis), lambda g, needs: tuple(
        np.take(g, i, axis=axis) for i in range(n))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ShapeMismatch("stack: all tensors must share a shape")
    return _apply("stack", _stack_fwd, tuple(tensors), axis=axis)


def _sum_fwd(x, axis, keepdims):
    out = np.sum(x, axis=axis, keepdims=keepdims)

    def backward(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return np.asarray(out, dtype=x.dtype), backward


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _apply("sum", _sum_fwd, (x,), axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# --- neural-network primitives ------------------------------------------------

def _masked_softmax_fwd(x, mask):
    if mask is None:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(mask, x.shape)
        masked = np.where(mask, x, -np.inf)
        top = masked.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0)
        e = np.where(mask, np.exp(np.where(mask, x, top) - top), 0).astype(x.dtype)
    total = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, total, out=np.zeros_like(e), where=total > 0)

    def backward(g, needs):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return y, backward


def masked_softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; positions where ``mask`` is False get 0.

    ``mask`` broadcasts against ``x`` (typically one flag per key). A row
    with no unmasked position produces all zeros.
    """
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        try:
            np.broadcast_shapes(mask.shape, x.shape)
        except ValueError:
            raise ShapeMismatch(f"mask {mask.shape} vs scores {x.shape}") from None
    return _apply("masked_softmax", _masked_softmax_fwd, (x,), mask=mask)


LAYER_NORM_EPS = 1e-5


def _layer_norm_fwd(x, gamma, beta, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma + beta

    def backward(g, needs):
        gg = gb = gx = None
        if needs[1]:
            gg = unbroadcast(g * xhat, gamma.shape)
        if needs[2]:
            gb = unbroadcast(g, beta.shape)
        if needs[0]:
            d = g * gamma
            gx = inv * (d - d.mean(axis=-1, keepdims=True)
                        - xhat * (d * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return out.astype(x.dtype, copy=False), backward


def layer_norm(x: Tensor, gamma=None, beta=None, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis, then apply the optional affine map."""
    d = x.shape[-1]
    gamma = as_tensor(np.ones(d), dtype=x.dtype) if gamma is None else gamma
    beta = as_tensor(np.zeros(d), dtype=x.dtype) if beta is None else beta
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm affine params must have shape ({d},)")
    return _apply("layer_norm", _layer_norm_fwd, (x, gamma, beta), eps=eps)


def _embedding_fwd(table, indices):
    def backward(g, needs):
        gt = np.zeros_like(table)
        np.add.at(gt, indices, g)
        return (gt,)

    return table[indices], backward


def embedding_lookup(table: Tensor, indices) -> Tensor:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ShapeMismatch("embedding index out of range")
    return _apply("embedding", _embedding_fwd, (table,), indices=indices)


def _gather_rows_fwd(x, index, valid):
    batch = np.arange(x.shape[0])[:, None]
    out = x[batch, index] * valid[..., None].astype(x.dtype)

    def backward(g, needs):
        gx = np.zeros_like(x)
        np.add.at(gx, (batch, index), g * valid[..., None])
        return (gx,)

    return out, backward


def gather_rows(x: Tensor, index, valid) -> Tensor:
    """``out[n, k] = x[n, index[n, k]]`` where ``valid[n, k]``, else a zero row."""
    index = np.asarray(index, dtype=np.int64)
    valid = np.asarray(valid, dtype=bool)
    if x.ndim != 3 or index.shape != valid.shape or index.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"gather_rows: x {x.shape}, index {index.shape}")
    return _apply("gather_rows", _gather_rows_fwd, (x,), index=index, valid=valid)


def _mse_fwd(pred, target):
    with np.errstate(over="ignore", invalid="ignore"):
        diff = pred - target
        out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)
    n = diff.size

    def backward(g, needs):
        gp = g * (2.0 / n) * diff
        return gp.astype(pred.dtype), (-gp).astype(target.dtype)

    return out, backward


def mse_loss(pred: Tensor, target) -> Tensor:
    pred, target = _pair(pred, target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse_loss: {pred.shape} vs {target.shape}")
    if pred.data.size == 0:
        raise ShapeMismatch("mse_loss on empty input")
    out = _apply("mse", _mse_fwd, (pred, target))
    if not np.isfinite(out.data):
        raise NumericalOverflow("loss became non-finite")
    return out


def recurrent_step(x_gates, h: Tensor, u_z, u_r, u_n) -> Tensor:
    """One gated recurrent update.

    ``x_gates`` holds the input contributions ``(x W_z + b_z, x W_r + b_r,
    x W_n + b_n)`` for this step; ``u_*`` are the recurrent matrices.
    """
    xz, xr, xn = x_gates
    z = sigmoid(add(xz, matmul(h, u_z)))
    r = sigmoid(add(xr, matmul(h, u_r)))
    n = tanh(add(xn, matmul(mul(r, h), u_n)))
    # h' = (1 - z) * n + z * h
    return add(n, mul(z, sub(h, n)))
