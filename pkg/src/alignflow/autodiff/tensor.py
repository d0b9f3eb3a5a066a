"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations run eagerly on numpy arrays. While a :class:`Tape` is active,
every op whose inputs require gradients appends a node to it; because
nodes are appended as they are computed, the tape is always in
topological order and the backward pass is a single reverse sweep.

    >>> w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    >>> tape.gradient(loss, [w])[w]
    array([2., 4., 6.])
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "AutodiffError",
    "ShapeError",
    "DomainError",
    "Tensor",
    "Tape",
    "as_tensor",
    "backward",
    "no_tape",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "sum",
    "mean",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "leaky_relu",
    "where",
    "concat",
    "getitem",
    "clip",
    "abs",
    "square",
]


class AutodiffError(ValueError):
    pass


class ShapeError(AutodiffError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        shown = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class DomainError(AutodiffError):
    pass


_tape_ids = itertools.count()
_local = threading.local()


def _stack() -> list:
    # one tape stack per thread
    try:
        return _local.stack
    except AttributeError:
        _local.stack = []
        return _local.stack


class Tape:
    """Records differentiable operations for one reverse sweep.

    Use as a context manager; nested tapes are allowed and only the
    innermost records.
    """

    def __init__(self):
        self.uid = next(_tape_ids)
        self.nodes: list[tuple[str, "Tensor", tuple, Callable]] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().remove(self)
        return False

    def record(self, kind, out, inputs, backward_fn):
        out.tape_id = (self.uid, len(self.nodes))
        self.nodes.append((kind, out, inputs, backward_fn))

    def gradient(self, loss: "Tensor", params: Iterable["Tensor"]) -> dict:
        return backward(loss, params, tape=self)


class _Suspend:
    def __enter__(self):
        stack = _stack()
        self._saved = list(stack)
        stack.clear()

    def __exit__(self, *exc):
        _stack().extend(self._saved)
        return False


def no_tape():
    """Context manager that suspends recording (inference fast path)."""
    return _Suspend()


class Tensor:
    __slots__ = ("data", "requires_grad", "tape_id", "__weakref__")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.tape_id = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __rmatmul__ = lambda self, other: matmul(other, self)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(kind: str, data: np.ndarray, inputs: tuple, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.tape_id = None
    out.requires_grad = False
    stack = _stack()
    if stack and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        stack[-1].record(kind, out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _binary_shapes(op, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(op, a.data.shape, b.data.shape) from None


# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)
    sa, sb = a.data.shape, b.data.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)
    sa, sb = a.data.shape, b.data.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("div", a, b)
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    ad, bd = a.data, b.data
    out = ad / bd
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * out / bd, bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make("square", ad * ad, (a,), lambda g: (2.0 * ad * g,))


def abs(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make("abs", np.abs(ad), (a,), lambda g: (np.sign(ad) * g,))


# linear algebra and reductions


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError("matmul", ad.shape, bd.shape)
    return _make("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def sum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make("sum", np.asarray(a.data.sum(axis=axis)), (a,), back)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]
    if count == 0:
        raise ShapeError("mean", shape)

    def back(g):
        g = g / count
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make("mean", np.asarray(a.data.mean(axis=axis)), (a,), back)


# pointwise nonlinearities


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    if np.any(ad <= 0):
        raise DomainError(f"log: non-positive input (min {ad.min():.3g})")
    return _make("log", np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split form keeps exp() from overflowing on either tail
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    factor = np.where(pos, 1.0, slope)
    return _make("leaky_relu", a.data * factor, (a,), lambda g: (g * factor,))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# structural


def where(mask, a, b) -> Tensor:
    """Select ``a`` where ``mask`` is true, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=bool)
    try:
        shape = np.broadcast_shapes(m.shape, a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError("where", m.shape, a.data.shape, b.data.shape) from None
    sa, sb = a.data.shape, b.data.shape
    return _make("where", np.where(m, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(np.where(m, g, 0.0), sa),
                            _unbroadcast(np.where(m, 0.0, g), sb)))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.data.shape for t in ts)) from None
    bounds = np.cumsum([t.data.shape[axis] for t in ts])[:-1]
    return _make("concat", out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.intp)
    try:
        out = a.data[idx]
    except IndexError as e:
        raise ShapeError(f"slice[{e}]", a.data.shape) from None
    shape = a.data.shape

    fancy = _is_fancy(idx)

    def back(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        return (full,)

    return _make("slice", np.array(out, dtype=np.float64), (a,), back)


def _is_fancy(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return any(not isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)


# reverse sweep


def backward(loss: Tensor, params: Iterable[Tensor], tape: Tape | None = None) -> dict:
    """Gradient of a scalar ``loss`` with respect to each of ``params``.

    Returns a dict keyed by the parameter tensors themselves. Parameters
    that ``loss`` does not depend on get a zero array.
    """
    params = list(params)
    if loss.data.size != 1:
        raise AutodiffError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if tape is None:
        if loss.tape_id is None:
            raise AutodiffError("backward: loss is not recorded on any tape")
        tape = _find_tape(loss.tape_id[0])
    if loss.tape_id is None or loss.tape_id[0] != tape.uid:
        raise AutodiffError("backward: loss is detached from this tape")

    end = loss.tape_id[1]
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    wanted = {id(p) for p in params}
    for kind, out, inputs, fn in reversed(tape.nodes[: end + 1]):
        key = id(out)
        g = grads.get(key)
        if g is None:
            continue
        if key not in wanted:
            del grads[key]
        for inp, ig in zip(inputs, fn(g)):
            if not inp.requires_grad:
                continue
            k = id(inp)
            prev = grads.get(k)
            grads[k] = ig if prev is None else prev + ig
    return {p: grads.get(id(p), np.zeros_like(p.data)).reshape(p.data.shape) for p in params}


def _find_tape(uid: int) -> Tape:
    for t in _stack():
        if t.uid == uid:
            return t
    raise AutodiffError("backward: tape for this loss is no longer reachable; pass tape=")
