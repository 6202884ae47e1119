"""Differentiable primitives over :class:`Tensor`."""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Op, Tensor, apply


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(name, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{name}: cannot broadcast {a.shape} with {b.shape}") from None


class Add(Op):
    name = "add"

    @staticmethod
    def forward(a, b):
        _check_broadcast("add", a, b)
        return a + b, None

    @staticmethod
    def backward(ctx, g, a, b):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


class Sub(Op):
    name = "sub"

    @staticmethod
    def forward(a, b):
        _check_broadcast("sub", a, b)
        return a - b, None

    @staticmethod
    def backward(ctx, g, a, b):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


class Mul(Op):
    name = "mul"

    @staticmethod
    def forward(a, b):
        _check_broadcast("mul", a, b)
        return a * b, None

    @staticmethod
    def backward(ctx, g, a, b):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


class Neg(Op):
    name = "neg"

    @staticmethod
    def forward(a):
        return -a, None

    @staticmethod
    def backward(ctx, g, a):
        return (-g,)


class MatMul(Op):
    name = "matmul"

    @staticmethod
    def forward(a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise DimensionError(f"matmul: batch dims of {a.shape} and {b.shape} differ") from None
        return np.matmul(a, b), None

    @staticmethod
    def backward(ctx, g, a, b):
        ga = np.matmul(g, np.swapaxes(b, -1, -2))
        gb = np.matmul(np.swapaxes(a, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


class Transpose(Op):
    name = "transpose"

    @staticmethod
    def forward(a):
        return np.swapaxes(a, -1, -2), None

    @staticmethod
    def backward(ctx, g, a):
        return (np.swapaxes(g, -1, -2),)


class Reshape(Op):
    name = "reshape"

    @staticmethod
    def forward(a, shape):
        return a.reshape(shape), None

    @staticmethod
    def backward(ctx, g, a, shape):
        return (g.reshape(a.shape),)


class Concat(Op):
    name = "concat"

    @staticmethod
    def forward(*arrays, axis):
        return np.concatenate(arrays, axis=axis), None

    @staticmethod
    def backward(ctx, g, *arrays, axis):
        bounds = np.cumsum([x.shape[axis] for x in arrays])[:-1]
        return tuple(np.split(g, bounds, axis=axis))


class GetItem(Op):
    name = "getitem"

    @staticmethod
    def forward(a, index):
        return a[index], None

    @staticmethod
    def backward(ctx, g, a, index):
        out = np.zeros_like(a)
        if _is_basic(index):
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)


class Take(Op):
    """Row gather: ``table[ids]`` for an integer array ``ids``."""

    name = "take"

    @staticmethod
    def forward(table, ids):
        return table[ids], None

    @staticmethod
    def backward(ctx, g, table, ids):
        out = np.zeros_like(table)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (out,)


class Sum(Op):
    name = "sum"

    @staticmethod
    def forward(a, axis, keepdims):
        return np.sum(a, axis=axis, keepdims=keepdims), None

    @staticmethod
    def backward(ctx, g, a, axis, keepdims):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)


class Max(Op):
    """Max along one axis, optionally restricted to ``mask``; gradient goes to
    the first maximiser."""

    name = "max"

    @staticmethod
    def forward(a, axis, mask):
        x = a if mask is None else np.where(mask, a, -np.inf)
        idx = np.argmax(x, axis=axis)
        out = np.take_along_axis(a, np.expand_dims(idx, axis), axis=axis)
        return np.squeeze(out, axis=axis), idx

    @staticmethod
    def backward(idx, g, a, axis, mask):
        out = np.zeros_like(a)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)


class Exp(Op):
    name = "exp"

    @staticmethod
    def forward(a):
        y = np.exp(a)
        return y, y

    @staticmethod
    def backward(y, g, a):
        return (g * y,)


class Log(Op):
    name = "log"

    @staticmethod
    def forward(a):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a), None

    @staticmethod
    def backward(ctx, g, a):
        return (g / a,)


class Relu(Op):
    name = "relu"

    @staticmethod
    def forward(a):
        return np.maximum(a, 0.0), None

    @staticmethod
    def backward(ctx, g, a):
        return (g * (a > 0),)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * np.tanh(0.5 * x) + 0.5


class Sigmoid(Op):
    name = "sigmoid"

    @staticmethod
    def forward(a):
        y = _sigmoid(a)
        return y, y

    @staticmethod
    def backward(y, g, a):
        return (g * y * (1.0 - y),)


class Tanh(Op):
    name = "tanh"

    @staticmethod
    def forward(a):
        y = np.tanh(a)
        return y, y

    @staticmethod
    def backward(y, g, a):
        return (g * (1.0 - y * y),)


def softmax_array(x: np.ndarray, axis: int = -1, mask=None) -> np.ndarray:
    """Max-shifted softmax; masked-out entries get exactly 0."""
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


class Softmax(Op):
    name = "softmax"

    @staticmethod
    def forward(a, axis, mask):
        y = softmax_array(a, axis, mask)
        return y, y

    @staticmethod
    def backward(y, g, a, axis, mask):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)


class LogSumExp(Op):
    name = "logsumexp"

    @staticmethod
    def forward(a, axis, mask):
        x = a if mask is None else np.where(mask, a, -np.inf)
        m = np.max(x, axis=axis, keepdims=True)
        e = np.exp(x - m)
        s = np.sum(e, axis=axis, keepdims=True)
        out = np.squeeze(m + np.log(s), axis=axis)
        return out, e / s

    @staticmethod
    def backward(p, g, a, axis, mask):
        return (p * np.expand_dims(g, axis),)


# ---------------------------------------------------------------- functional API


def add(a, b) -> Tensor:
    return apply(Add, a, b)


def sub(a, b) -> Tensor:
    return apply(Sub, a, b)


def mul(a, b) -> Tensor:
    return apply(Mul, a, b)


def neg(a) -> Tensor:
    return apply(Neg, a)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, with broadcast batch axes."""
    return apply(MatMul, a, b)


def transpose(a) -> Tensor:
    return apply(Transpose, a)


def reshape(a, shape) -> Tensor:
    return apply(Reshape, a, shape=tuple(shape))


def concat(tensors, axis: int = -1) -> Tensor:
    return apply(Concat, *tensors, axis=axis)


def getitem(a, index) -> Tensor:
    return apply(GetItem, a, index=index)


def take(table, ids) -> Tensor:
    return apply(Take, table, ids=np.asarray(ids, dtype=np.int64))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply(Sum, a, axis=axis, keepdims=keepdims)


def max(a, axis: int = -1, mask=None) -> Tensor:  # noqa: A001
    return apply(Max, a, axis=axis, mask=None if mask is None else np.asarray(mask, bool))


def exp(a) -> Tensor:
    return apply(Exp, a)


def log(a) -> Tensor:
    return apply(Log, a)


def relu(a) -> Tensor:
    return apply(Relu, a)


def sigmoid(a) -> Tensor:
    return apply(Sigmoid, a)


def tanh(a) -> Tensor:
    return apply(Tanh, a)


def softmax(a, axis: int = -1, mask=None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` (boolean, broadcastable) excludes entries, which receive
    probability 0. Every slice must keep at least one entry.
    """
    a = a if isinstance(a, Tensor) else Tensor(a)
    if a.data.size == 0 or a.shape[axis] == 0:
        raise ValueError("softmax of an empty tensor")
    return apply(Softmax, a, axis=axis, mask=None if mask is None else np.asarray(mask, bool))


def logsumexp(a, axis: int = -1, mask=None) -> Tensor:
    return apply(LogSumExp, a, axis=axis, mask=None if mask is None else np.asarray(mask, bool))


def mean(a, axis=None) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def dropout(x, rate: float, gen: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``gen`` is None or ``rate`` is 0."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if gen is None or rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    keep = (gen.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)
