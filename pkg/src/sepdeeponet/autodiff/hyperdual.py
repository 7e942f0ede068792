"""Hyper-dual numbers: exact first, second and mixed directional derivatives.

A hyper-dual value carries ``v + d1*e1 + d2*e2 + d12*e1e2`` with
``e1**2 = e2**2 = 0``. Components may be numpy arrays or tape :class:`Var`
nodes (reverse-over-forward), or ``None`` for an identically-zero tangent,
which lets constant inputs skip work. When ``d1 is d2`` the two tangents are
known to be equal and are computed once.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError, ShapeError, UnsupportedOperationError
from . import tape as T


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return T.add(a, b)


def _mul(a, b):
    if a is None or b is None:
        return None
    return T.multiply(a, b)


def _neg(a):
    return None if a is None else T.negative(a)


def _sum(*terms):
    out = None
    for t in terms:
        out = _add(out, t)
    return out


def _linear(fn, x):
    return None if x is None else fn(x)


class HyperDual:
    __slots__ = ("v", "d1", "d2", "d12")
    __array_priority__ = 2000

    def __init__(self, v, d1=None, d2=None, d12=None) -> None:
        self.v = v
        self.d1 = d1
        self.d2 = d2
        self.d12 = d12

    def __repr__(self) -> str:
        return f"HyperDual(v={self.v!r}, d1={self.d1!r}, d2={self.d2!r}, d12={self.d12!r})"

    @property
    def diagonal(self) -> bool:
        return self.d1 is self.d2

    @property
    def shape(self) -> tuple:
        return np.shape(T.value_of(self.v))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def components(self) -> tuple:
        return self.v, self.d1, self.d2, self.d12

    def map_linear(self, fn: Callable) -> "HyperDual":
        """Apply a linear map (reshape, slice, sum, right-multiplication) to every component."""
        d1 = _linear(fn, self.d1)
        d2 = d1 if self.diagonal else _linear(fn, self.d2)
        return HyperDual(fn(self.v), d1, d2, _linear(fn, self.d12))

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        o = lift(other)
        d1 = _add(self.d1, o.d1)
        d2 = d1 if (self.diagonal and o.diagonal) else _add(self.d2, o.d2)
        return HyperDual(T.add(self.v, o.v), d1, d2, _add(self.d12, o.d12))

    __radd__ = __add__

    def __neg__(self):
        d1 = _neg(self.d1)
        d2 = d1 if self.diagonal else _neg(self.d2)
        return HyperDual(T.negative(self.v), d1, d2, _neg(self.d12))

    def __sub__(self, other):
        return self + (-lift(other))

    def __rsub__(self, other):
        return lift(other) + (-self)

    def __mul__(self, other):
        a, b = self, lift(other)
        d1 = _add(_mul(a.v, b.d1), _mul(a.d1, b.v))
        if a.diagonal and b.diagonal:
            d2 = d1
            cross = _mul(a.d1, b.d1)
            cross = None if cross is None else T.multiply(cross, 2.0)
        else:
            d2 = _add(_mul(a.v, b.d2), _mul(a.d2, b.v))
            cross = _add(_mul(a.d1, b.d2), _mul(a.d2, b.d1))
        d12 = _sum(_mul(a.v, b.d12), cross, _mul(a.d12, b.v))
        return HyperDual(T.multiply(a.v, b.v), d1, d2, d12)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * reciprocal(lift(other))

    def __rtruediv__(self, other):
        return lift(other) * reciprocal(self)

    def __pow__(self, n):
        return power(self, n)

    def __matmul__(self, other):
        if isinstance(other, HyperDual):
            return _bilinear(T.matmul, self, other)
        return self.map_linear(lambda c: T.matmul(c, other))

    def __rmatmul__(self, other):
        return self.map_linear(lambda c: T.matmul(other, c))

    def __getitem__(self, idx):
        return self.map_linear(lambda c: T.getitem(c, idx))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.map_linear(lambda c: T.reshape(c, shape))

    def sum(self, axis=None, keepdims=False):
        return self.map_linear(lambda c: T.sum_(c, axis=axis, keepdims=keepdims))

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs:
            raise UnsupportedOperationError(f"{ufunc.__name__}.{method} is not supported on hyper-duals")
        fn = _UFUNCS.get(ufunc)
        if fn is None:
            raise UnsupportedOperationError(f"unsupported primitive: {ufunc.__name__}")
        return fn(*inputs)


def lift(x) -> HyperDual:
    """Constant embedding: zero tangents."""
    return x if isinstance(x, HyperDual) else HyperDual(x)


def _bilinear(op, a: HyperDual, b: HyperDual) -> HyperDual:
    d1 = _add(_op(op, a.v, b.d1), _op(op, a.d1, b.v))
    d2 = d1 if (a.diagonal and b.diagonal) else _add(_op(op, a.v, b.d2), _op(op, a.d2, b.v))
    d12 = _sum(_op(op, a.v, b.d12), _op(op, a.d1, b.d2), _op(op, a.d2, b.d1), _op(op, a.d12, b.v))
    return HyperDual(op(a.v, b.v), d1, d2, d12)


def _op(op, a, b):
    if a is None or b is None:
        return None
    return op(a, b)


def _chain(x: HyperDual, value, first, second: Callable) -> HyperDual:
    """Compose a scalar function with derivative ``first`` and lazy ``second``."""
    d1 = _mul(first, x.d1)
    d2 = d1 if x.diagonal else _mul(first, x.d2)
    d12 = _mul(first, x.d12)
    if x.d1 is not None and x.d2 is not None:
        tt = _mul(x.d1, x.d1) if x.diagonal else _mul(x.d1, x.d2)
        d12 = _add(d12, _mul(second(), tt))
    return HyperDual(value, d1, d2, d12)


def tanh(x):
    if not isinstance(x, HyperDual):
        return T.tanh(x)
    t = T.tanh(x.v)
    if x.d1 is None and x.d2 is None and x.d12 is None:
        return HyperDual(t)
    slope = T.subtract(1.0, T.multiply(t, t))
    return _chain(x, t, slope, lambda: T.multiply(T.multiply(t, -2.0), slope))


def exp(x):
    if not isinstance(x, HyperDual):
        return T.exp(x)
    e = T.exp(x.v)
    return _chain(x, e, e, lambda: e)


def sin(x):
    if not isinstance(x, HyperDual):
        return T.sin(x)
    s = T.sin(x.v)
    return _chain(x, s, T.cos(x.v), lambda: T.negative(s))


def cos(x):
    if not isinstance(x, HyperDual):
        return T.cos(x)
    c = T.cos(x.v)
    return _chain(x, c, T.negative(T.sin(x.v)), lambda: T.negative(c))


def reciprocal(x: HyperDual) -> HyperDual:
    if np.any(np.asarray(T.value_of(x.v)) == 0):
        raise NumericError("division by a hyper-dual with zero value")
    r = T.divide(1.0, x.v)
    r2 = T.multiply(r, r)
    return _chain(x, r, T.negative(r2), lambda: T.multiply(T.multiply(r2, r), 2.0))


def power(x, n):
    if isinstance(n, HyperDual) or not float(n).is_integer():
        raise UnsupportedOperationError("only constant integer powers are supported")
    n = int(n)
    if not isinstance(x, HyperDual):
        return T.power(x, n)
    if n == 0:
        return HyperDual(np.ones_like(T.value_of(x.v)))
    if n < 0:
        return reciprocal(power(x, -n))
    if n == 1:
        return x
    value = T.power(x.v, n)
    first = T.multiply(T.power(x.v, n - 1), float(n))
    second = (
        (lambda: T.multiply(T.power(x.v, n - 2), float(n * (n - 1))))
        if n > 2
        else (lambda: np.full(x.shape, 2.0))
    )
    return _chain(x, value, first, second)


_UFUNCS = {
    np.add: lambda a, b: lift(a) + b,
    np.subtract: lambda a, b: lift(a) - b,
    np.multiply: lambda a, b: lift(a) * b,
    np.true_divide: lambda a, b: lift(a) / b,
    np.negative: lambda a: -a,
    np.tanh: tanh,
    np.exp: exp,
    np.sin: sin,
    np.cos: cos,
    np.square: lambda a: power(a, 2),
    np.power: power,
    np.matmul: lambda a, b: a @ b if isinstance(a, HyperDual) else b.__rmatmul__(a),
}


def _zeros_like(v):
    return np.zeros(np.shape(T.value_of(v)))


def jvp2(f: Callable, x, dir1, dir2):
    """Value, two directional derivatives and the mixed second derivative of ``f`` at ``x``.

    Returns ``(f(x), D_dir1 f, D_dir2 f, D_dir1 D_dir2 f)``. Passing the same
    direction twice gives the pure second directional derivative.
    """
    if not isinstance(x, T.Var):
        x = np.asarray(x, dtype=np.float64)
    shape = np.shape(T.value_of(x))
    u1 = np.asarray(dir1, dtype=np.float64)
    u2 = np.asarray(dir2, dtype=np.float64)
    if u1.shape != shape or u2.shape != shape:
        raise ShapeError(f"directions {u1.shape}, {u2.shape} do not match point shape {shape}")
    same = dir1 is dir2 or np.array_equal(u1, u2)
    y = f(HyperDual(x, u1, u1 if same else u2))
    if not isinstance(y, HyperDual):
        y = lift(y)
    comps = [y.v, y.d1, y.d2, y.d12]
    return tuple(_zeros_like(y.v) if c is None else c for c in comps)
