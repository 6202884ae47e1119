"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed inside a ``with Tape() as tape:`` block are recorded;
``backward(tape, loss)`` walks the record in reverse. Outside a tape,
operations run forward only.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericalError(ArithmeticError):
    """A forward value became NaN or infinite."""


class Tensor:
    """Immutable-by-convention dense array of doubles.

    The wrapped array is marked read-only. Parameters are rebound to fresh
    arrays by the optimizer, never written in place.
    """

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    @property
    def T(self):
        from . import ops
        return ops.transpose(self)


def _not_scalar(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def detach(t: Tensor) -> Tensor:
    return Tensor(t.data)


class Op:
    """A differentiable primitive.

    ``forward(*arrays, **kw)`` returns ``(out, ctx)``;
    ``backward(ctx, grad, *arrays, **kw)`` returns one gradient (or None)
    per input array.
    """

    name = "op"

    @staticmethod
    def forward(*arrays, **kw):
        raise NotImplementedError

    @staticmethod
    def backward(ctx, grad, *arrays, **kw):
        raise NotImplementedError


@dataclass
class Record:
    op: type[Op]
    inputs: tuple[Tensor, ...]
    output: Tensor
    kwargs: dict[str, Any]
    ctx: Any


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Inputs of every record are leaves or outputs of earlier records, so the
    list is already in topological order.
    """

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _stack().pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.records)

    def replay(self) -> None:
        """Recompute every recorded output from current input values."""
        for rec in self.records:
            out, ctx = rec.op.forward(*(t.data for t in rec.inputs), **rec.kwargs)
            out = np.asarray(out, dtype=np.float64)
            _check_finite(rec.op, out)
            out.flags.writeable = False
            rec.output.data = out
            rec.ctx = ctx


_local = threading.local()


def _stack() -> list[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def _check_finite(op, out: np.ndarray) -> None:
    if not np.isfinite(out).all():
        raise NumericalError(f"non-finite value produced by {op.name}")


def apply(op: type[Op], *inputs, **kwargs) -> Tensor:
    inputs = tuple(as_tensor(t) for t in inputs)
    out, ctx = op.forward(*(t.data for t in inputs), **kwargs)
    out = np.asarray(out, dtype=np.float64)
    _check_finite(op, out)
    result = Tensor.__new__(Tensor)
    out.flags.writeable = False
    result.data = out
    result.name = None
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        tape.records.append(Record(op, inputs, result, kwargs, ctx))
    else:
        result.requires_grad = False
    return result


def backward(tape: Tape, loss: Tensor, params=None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` w.r.t. every leaf that
    requires grad and is reachable from it.

    If ``params`` (an iterable of leaves) is given, the result has exactly
    those keys, with zero arrays for leaves the loss does not depend on.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    produced = {id(rec.output) for rec in tape.records}
    if loss.requires_grad and id(loss) not in produced:
        leaves[id(loss)] = loss
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.op.backward(rec.ctx, g, *(t.data for t in rec.inputs), **rec.kwargs)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64)
            if key not in produced:
                leaves[key] = t
    found = {t: grads[k] for k, t in leaves.items() if k in grads}
    if params is None:
        return found
    return {p: found.get(p, np.zeros_like(p.data)) for p in params}
