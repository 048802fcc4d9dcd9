"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation is a module-level function. When a :class:`Tape` is active
(entered as a context manager), each op appends a node holding the output,
the input tensors, a forward closure (for replay checks) and a vector-Jacobian
product. :func:`backward` walks the tape in reverse, visiting each node once.

Shapes are plain numpy shapes; model code keeps everything 2-D and represents
vectors as single-column matrices.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UsageError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """A dense float64 array. Data may be mutated in place only between
    tapes (the optimizer does this); never during a recorded forward pass."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def copy(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape))


class _Node:
    __slots__ = ("out", "inputs", "fwd", "vjp")

    def __init__(self, out, inputs, fwd, vjp):
        self.out = out
        self.inputs = inputs
        self.fwd = fwd
        self.vjp = vjp


class Tape:
    """Ordered record of primitive operations, in execution (= topological)
    order. Confined to one thread of execution."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def replay(self) -> bool:
        """Recompute every recorded op from its inputs; True iff all outputs
        reproduce bit-identically."""
        return all(np.array_equal(n.fwd(), n.out.data) for n in self.nodes)


def _record(out, inputs, fwd, vjp):
    if _TAPE_STACK:
        _TAPE_STACK[-1].nodes.append(_Node(out, inputs, fwd, vjp))
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record(
        out, (a, b),
        lambda: a.data @ b.data,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def _binary(a, b, fn, name):
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape}, {b.shape}") from None
    del shape
    return Tensor(fn(a.data, b.data))


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _binary(a, b, np.add, "add")
    return _record(
        out, (a, b),
        lambda: a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _binary(a, b, np.subtract, "sub")
    return _record(
        out, (a, b),
        lambda: a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _binary(a, b, np.multiply, "mul")
    return _record(
        out, (a, b),
        lambda: a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)
    return _record(out, (x,), lambda: -x.data, lambda g: (-g,))


def mul_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c)
    return _record(out, (x,), lambda: x.data * c, lambda g: (g * c,))


def tanh(x: Tensor) -> Tensor:
    out = Tensor(np.tanh(x.data))
    return _record(
        out, (x,),
        lambda: np.tanh(x.data),
        lambda g: (g * (1.0 - out.data ** 2),),
    )


def _sigmoid(a):
    # split by sign to avoid exp overflow
    pos = a >= 0
    z = np.empty_like(a)
    z[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    z[~pos] = e / (1.0 + e)
    return z


def sigmoid(x: Tensor) -> Tensor:
    out = Tensor(_sigmoid(x.data))
    return _record(
        out, (x,),
        lambda: _sigmoid(x.data),
        lambda g: (g * out.data * (1.0 - out.data),),
    )


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    return _record(
        out, (x,),
        lambda: np.maximum(x.data, 0.0),
        lambda g: (g * (x.data > 0.0),),
    )


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data))
    return _record(out, (x,), lambda: np.exp(x.data), lambda g: (g * out.data,))


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))
    return _record(out, (x,), lambda: np.log(x.data), lambda g: (g / x.data,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    out = Tensor(np.maximum(x.data, floor))
    return _record(
        out, (x,),
        lambda: np.maximum(x.data, floor),
        lambda g: (g * (x.data > floor),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise UsageError("concat of zero tensors")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeError(
                f"concat: rank mismatch {[t.shape for t in tensors]}")
        for ax in range(ndim):
            if ax != axis % ndim and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(
                    f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis % ndim] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors),
                   lambda: np.concatenate([t.data for t in tensors], axis=axis),
                   vjp)


def _axis_index(axis: str, name: str) -> int:
    # convention: the named slices are operated on ("rows" -> within each row)
    if axis == "rows":
        return 1
    if axis == "cols":
        return 0
    raise UsageError(f"{name}: axis must be 'rows' or 'cols', got {axis!r}")


def mean_axis(x: Tensor, axis: str) -> Tensor:
    """Mean within each row (axis='rows', output m x 1) or within each
    column (axis='cols', output 1 x n)."""
    ax = _axis_index(axis, "mean_axis")
    out = Tensor(x.data.mean(axis=ax, keepdims=True))
    n = x.shape[ax]
    return _record(
        out, (x,),
        lambda: x.data.mean(axis=ax, keepdims=True),
        lambda g: (np.broadcast_to(g / n, x.shape).copy(),),
    )


def max_axis(x: Tensor, axis: str) -> Tensor:
    """Max within each row or column; gradient routes to the first argmax."""
    ax = _axis_index(axis, "max_axis")
    out = Tensor(x.data.max(axis=ax, keepdims=True))
    idx = x.data.argmax(axis=ax, keepdims=True)

    def vjp(g):
        z = np.zeros_like(x.data)
        np.put_along_axis(z, idx, g, axis=ax)
        return (z,)

    return _record(out, (x,), lambda: x.data.max(axis=ax, keepdims=True), vjp)


def transpose(x: Tensor) -> Tensor:
    out = Tensor(x.data.T.copy())
    return _record(out, (x,), lambda: x.data.T.copy(), lambda g: (g.T,))


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= x.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {x.shape}")
    out = Tensor(x.data[start:stop].copy())

    def vjp(g):
        z = np.zeros_like(x.data)
        z[start:stop] = g
        return (z,)

    return _record(out, (x,), lambda: x.data[start:stop].copy(), vjp)


def gather_rows(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(table.data[idx])

    def vjp(g):
        z = np.zeros_like(table.data)
        np.add.at(z, idx, g)
        return (z,)

    return _record(out, (table,), lambda: table.data[idx], vjp)


def softmax_axis(x: Tensor, axis: str) -> Tensor:
    """Numerically stabilized softmax; each row (axis='rows') or each column
    (axis='cols') becomes a probability distribution."""
    ax = _axis_index(axis, "softmax_axis")

    def fwd():
        shifted = x.data - x.data.max(axis=ax, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=ax, keepdims=True)

    out = Tensor(fwd())

    def vjp(g):
        s = out.data
        dot = (g * s).sum(axis=ax, keepdims=True)
        return (s * (g - dot),)

    return _record(out, (x,), fwd, vjp)


def add_n(tensors) -> Tensor:
    """Sum of same-shaped tensors as one tape node."""
    tensors = list(tensors)
    if not tensors:
        raise UsageError("add_n of zero tensors")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"add_n: mixed shapes {[t.shape for t in tensors]}")

    def fwd():
        acc = tensors[0].data.copy()
        for t in tensors[1:]:
            acc += t.data
        return acc

    out = Tensor(fwd())
    return _record(out, tuple(tensors), fwd, lambda g: tuple(g for _ in tensors))


_POINTWISE = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "add": add,
    "mul": mul,
    "concat": concat,
    "mean_axis": mean_axis,
}


def pointwise(op: str, *inputs, **kwargs) -> Tensor:
    """Dispatch by op name; the named set covers what the models need."""
    try:
        fn = _POINTWISE[op]
    except KeyError:
        raise UsageError(f"unknown pointwise op {op!r}") from None
    if op == "concat":
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# reverse pass


class Gradients:
    """Gradient lookup keyed by tensor identity; missing tensors read as
    zero (unreached parameters)."""

    def __init__(self, by_id):
        self._by_id = by_id

    def wrt(self, t: Tensor) -> np.ndarray:
        g = self._by_id.get(id(t))
        return np.zeros_like(t.data) if g is None else g

    def for_store(self, store) -> dict:
        """Gradients keyed like the ParamStore's trainable entries."""
        return {name: self.wrt(t) for name, t in store.trainable_items()}


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Exact reverse-mode gradients of a scalar loss recorded on `tape`."""
    if loss.data.size != 1:
        raise UsageError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not any(n.out is loss for n in tape.nodes):
        raise UsageError("backward: loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.out))
        if g_out is None:
            continue
        for t, g in zip(node.inputs, node.vjp(g_out)):
            if g is None:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = g if prev is None else prev + g
    return Gradients(grads)
