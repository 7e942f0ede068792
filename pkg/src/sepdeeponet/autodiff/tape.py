"""Array-level reverse-mode differentiation on an append-only tape.

Every primitive below accepts plain ``numpy`` arrays or :class:`Var` nodes.
When no operand is a :class:`Var` the primitive simply evaluates with numpy,
so model code written against these functions runs unchanged both for fast
inference and for gradient recording.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from ..errors import NumericError, ShapeError, UnsupportedOperationError


@dataclass
class Node:
    op: str
    parents: tuple  # node index per operand, None for constants
    consts: tuple  # constant operand values, None where the operand is a node
    forward: Callable | None
    vjp: Callable | None
    value: np.ndarray


class Tape:
    """Append-only record of primitive applications.

    Nodes are stored in creation order, which is a topological order of the
    computation graph; :meth:`backward` therefore sweeps indices downward.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: str = "") -> "Var":
        value = np.array(value, dtype=np.float64)
        self.nodes.append(Node(f"leaf:{name}" if name else "leaf", (), (), None, None, value))
        return Var(self, len(self.nodes) - 1, value)

    def _append(self, op, args, forward, vjp, value) -> "Var":
        parents = tuple(a.index if isinstance(a, Var) else None for a in args)
        consts = tuple(None if isinstance(a, Var) else a for a in args)
        self.nodes.append(Node(op, parents, consts, forward, vjp, value))
        return Var(self, len(self.nodes) - 1, value)

    def _operands(self, node: Node, values: Sequence[np.ndarray]) -> list:
        return [values[p] if p is not None else c for p, c in zip(node.parents, node.consts)]

    def first_nonfinite(self) -> int | None:
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.value)):
                return i
        return None

    def backward(self, out: "Var", seed: np.ndarray | None = None) -> list[np.ndarray | None]:
        """Accumulate adjoints of ``out`` into every node; returns one entry per node."""
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        nodes = self.nodes
        values = [n.value for n in nodes]
        grads: list[np.ndarray | None] = [None] * len(nodes)
        grads[out.index] = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for i in range(out.index, -1, -1):
            g = grads[i]
            node = nodes[i]
            if g is None or node.vjp is None:
                continue
            needs = tuple(p is not None for p in node.parents)
            partials = node.vjp(g, node.value, self._operands(node, values), needs)
            for p, gp in zip(node.parents, partials):
                if p is None or gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
            if node.parents:
                grads[i] = None  # interior adjoints are no longer needed
        return grads

    def gradient(self, out: "Var", wrt: Sequence["Var"]) -> list[np.ndarray]:
        leaf_ids = {w.index for w in wrt}
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        nodes = self.nodes
        values = [n.value for n in nodes]
        grads: list[np.ndarray | None] = [None] * len(nodes)
        grads[out.index] = np.ones_like(out.value)
        for i in range(out.index, -1, -1):
            g = grads[i]
            node = nodes[i]
            if g is None or node.vjp is None:
                continue
            needs = tuple(p is not None for p in node.parents)
            partials = node.vjp(g, node.value, self._operands(node, values), needs)
            for p, gp in zip(node.parents, partials):
                if p is None or gp is None:
                    continue
                grads[p] = gp if grads[p] is None else grads[p] + gp
            if i not in leaf_ids:
                grads[i] = None
        return [grads[w.index] if grads[w.index] is not None else np.zeros_like(w.value) for w in wrt]

    def replay(self) -> list[np.ndarray]:
        """Re-run every recorded primitive from the stored leaf values."""
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.forward is None:
                values.append(node.value)
            else:
                values.append(node.forward(*self._operands(node, values)))
        return values


class Var:
    """Handle to a tape node; behaves like a read-only float64 array."""

    __slots__ = ("tape", "index", "value")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, index: int, value: np.ndarray) -> None:
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self) -> str:
        return f"Var(#{self.index}, shape={self.value.shape})"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __len__(self) -> int:
        return len(self.value)

    def __float__(self) -> float:
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, n):
        return power(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            raise UnsupportedOperationError(f"{ufunc.__name__}.{method} is not differentiable here")
        fn = _UFUNCS.get(ufunc)
        if fn is None:
            raise UnsupportedOperationError(f"unsupported primitive: {ufunc.__name__}")
        return fn(*inputs)

    def __array__(self, dtype=None, copy=None):
        raise UnsupportedOperationError(
            "implicit conversion of a recorded value to ndarray would detach it; use .value"
        )


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _apply(op: str, forward: Callable, vjp: Callable, *args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands were recorded on different tapes")
    vals = [a.value if isinstance(a, Var) else a for a in args]
    out = forward(*vals)
    if tape is None:
        return out
    return tape._append(op, args, forward, vjp, np.asarray(out, dtype=np.float64))


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ---------------------------------------------------------------


def _add_vjp(g, out, vals, needs):
    a, b = vals
    return (
        unbroadcast(g, np.shape(a)) if needs[0] else None,
        unbroadcast(g, np.shape(b)) if needs[1] else None,
    )


def add(a, b):
    return _apply("add", np.add, _add_vjp, a, b)


def _sub_vjp(g, out, vals, needs):
    a, b = vals
    return (
        unbroadcast(g, np.shape(a)) if needs[0] else None,
        unbroadcast(-g, np.shape(b)) if needs[1] else None,
    )


def subtract(a, b):
    return _apply("sub", np.subtract, _sub_vjp, a, b)


def _mul_vjp(g, out, vals, needs):
    a, b = vals
    return (
        unbroadcast(g * b, np.shape(a)) if needs[0] else None,
        unbroadcast(g * a, np.shape(b)) if needs[1] else None,
    )


def multiply(a, b):
    return _apply("mul", np.multiply, _mul_vjp, a, b)


def _checked_divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise NumericError("division by a zero value")
    return np.divide(a, b)


def _div_vjp(g, out, vals, needs):
    a, b = vals
    return (
        unbroadcast(g / b, np.shape(a)) if needs[0] else None,
        unbroadcast(-g * out / b, np.shape(b)) if needs[1] else None,
    )


def divide(a, b):
    return _apply("div", _checked_divide, _div_vjp, a, b)


def negative(a):
    return _apply("neg", np.negative, lambda g, out, vals, needs: (-g,), a)


def _tanh_vjp(g, out, vals, needs):
    return (g * (1.0 - out * out),)


def tanh(a):
    return _apply("tanh", np.tanh, _tanh_vjp, a)


def exp(a):
    return _apply("exp", np.exp, lambda g, out, vals, needs: (g * out,), a)


def sin(a):
    return _apply("sin", np.sin, lambda g, out, vals, needs: (g * np.cos(vals[0]),), a)


def cos(a):
    return _apply("cos", np.cos, lambda g, out, vals, needs: (-g * np.sin(vals[0]),), a)


def power(a, n):
    if isinstance(n, Var) or not float(n).is_integer():
        raise UnsupportedOperationError("only constant integer powers are supported")
    n = int(n)
    if n == 0:
        return np.ones_like(value_of(a))
    if n < 0:
        return divide(1.0, power(a, -n))

    def fwd(x):
        return x**n

    def vjp(g, out, vals, needs):
        return (g * n * vals[0] ** (n - 1),)

    return _apply(f"pow{n}", fwd, vjp, a)


def square(a):
    return power(a, 2)


# -- linear algebra and structure --------------------------------------------


def _matmul_vjp(g, out, vals, needs):
    a, b = vals
    ga = gb = None
    if needs[0]:
        ga = unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), np.shape(a))
    if needs[1]:
        gb = unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), np.shape(b))
    return ga, gb


def _matmul(a, b):
    if np.ndim(a) < 2 or np.ndim(b) < 2:
        raise ShapeError("matmul operands must have at least two axes")
    return np.matmul(a, b)


def matmul(a, b):
    return _apply("matmul", _matmul, _matmul_vjp, a, b)


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims=False):
    shape = np.shape(value_of(a))
    axes = _norm_axis(axis, len(shape))

    def fwd(x):
        return np.sum(x, axis=axes, keepdims=keepdims)

    def vjp(g, out, vals, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _apply("sum", fwd, vjp, a)


def mean(a, axis=None, keepdims=False):
    shape = np.shape(value_of(a))
    axes = _norm_axis(axis, len(shape))
    count = int(np.prod([shape[ax] for ax in axes])) if axes else 1
    return multiply(sum_(a, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    orig = np.shape(value_of(a))
    return _apply(
        "reshape",
        lambda x: np.reshape(x, shape),
        lambda g, out, vals, needs: (np.reshape(g, orig),),
        a,
    )


def transpose(a, axes=None):
    nd = np.ndim(value_of(a))
    perm = tuple(range(nd))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(perm))
    return _apply(
        "transpose",
        lambda x: np.transpose(x, perm),
        lambda g, out, vals, needs: (np.transpose(g, inv),),
        a,
    )


def _has_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(a, idx):
    shape = np.shape(value_of(a))
    fancy = _has_fancy(idx)

    def vjp(g, out, vals, needs):
        z = np.zeros(shape)
        if fancy:
            np.add.at(z, idx, g)
        else:
            z[idx] += g
        return (z,)

    return _apply("getitem", lambda x: x[idx], vjp, a)


def broadcast_to(a, shape):
    shape = tuple(shape)
    orig = np.shape(value_of(a))
    return _apply(
        "broadcast",
        lambda x: np.broadcast_to(x, shape),
        lambda g, out, vals, needs: (unbroadcast(g, orig),),
        a,
    )


def concatenate(arrays: Sequence, axis: int = 0):
    sizes = [np.shape(value_of(x))[axis] for x in arrays]
    cuts = np.cumsum(sizes)[:-1]

    def fwd(*xs):
        return np.concatenate(xs, axis=axis)

    def vjp(g, out, vals, needs):
        return tuple(np.split(g, cuts, axis=axis))

    return _apply("concat", fwd, vjp, *arrays)


def expand_dims(a, axis):
    shape = list(np.shape(value_of(a)))
    for ax in sorted(_norm_axis(axis, len(shape) + (1 if isinstance(axis, int) else len(axis)))):
        shape.insert(ax, 1)
    return reshape(a, tuple(shape))


_UFUNCS: dict[Any, Callable] = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.tanh: tanh,
    np.exp: exp,
    np.sin: sin,
    np.cos: cos,
    np.square: square,
    np.power: power,
    np.matmul: matmul,
}


# -- gradient drivers ----------------------------------------------------------


def _flatten(params) -> tuple[list, Callable]:
    if isinstance(params, dict):
        keys = list(params)
        return [params[k] for k in keys], lambda xs: dict(zip(keys, xs))
    if isinstance(params, (list, tuple)):
        kind = type(params)
        return list(params), lambda xs: kind(xs)
    return [params], lambda xs: xs[0]


def value_and_grad(loss: Callable, params, *, aux: bool = False):
    """Evaluate ``loss(params)`` on a fresh tape and return ``(value, grads)``.

    ``params`` may be a single array, a list/tuple or a dict of arrays; the
    gradient mirrors that structure. With ``aux=True`` the loss returns
    ``(scalar, extra)`` and ``extra`` is passed back untouched as a third item.
    """
    flat, rebuild = _flatten(params)
    tape = Tape()
    leaves = [tape.leaf(p, name=str(i)) for i, p in enumerate(flat)]
    result = loss(rebuild(leaves))
    extra = None
    if aux:
        result, extra = result
    if not isinstance(result, Var):
        value = float(np.asarray(result))
        grads = rebuild([np.zeros(np.shape(p)) for p in flat])
        return (value, grads, extra) if aux else (value, grads)
    if result.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {result.value.shape}")
    if not np.isfinite(result.value).all():
        bad = tape.first_nonfinite()
        node = tape.nodes[bad]
        raise NumericError(f"non-finite loss; first non-finite value at tape node {bad} ({node.op})")
    grads = tape.gradient(result.reshape(()) if result.value.shape else result, leaves)
    value = float(result.value)
    return (value, rebuild(grads), extra) if aux else (value, rebuild(grads))


def grad_params(loss: Callable, params):
    """Exact reverse-mode gradient of a scalar ``loss`` with respect to ``params``."""
    return value_and_grad(loss, params)[1]
