"""Lattice contraction kernels shared by both DeepONet variants.

Tensors are plain row-major ``float64`` numpy arrays. The kernels are
written against :mod:`sepdeeponet.autodiff.ops` so the same code records on a
tape when any operand is a :class:`~sepdeeponet.autodiff.Var`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import ops
from .errors import ShapeError


def _shape(x) -> tuple:
    return np.shape(ops.value_of(x))


def outer_combine(parts: Sequence) -> np.ndarray:
    """Rank-r outer product of per-axis features.

    ``parts[j]`` has shape ``[n_j, p, r]``; the result has shape
    ``[n_1, ..., n_d, p]`` with
    ``out[i_1..i_d, k] = sum_r prod_j parts[j][i_j, k, r]``.
    """
    if len(parts) == 0:
        raise ValueError("outer_combine needs at least one part")
    shapes = [_shape(p) for p in parts]
    for s in shapes:
        if len(s) != 3:
            raise ShapeError(f"each part must be [n, p, r], got {s}")
    p, r = shapes[0][1:]
    if any(s[1:] != (p, r) for s in shapes):
        raise ShapeError(f"parts disagree on (p, r): {[s[1:] for s in shapes]}")
    if len(parts) == 1:
        return ops.sum_(parts[0], axis=2)
    # fold left to right: acc[M, p, r] holds the running product over leading axes
    acc = parts[0]
    m = shapes[0][0]
    for part, s in zip(parts[1:-1], shapes[1:-1]):
        n = s[0]
        prod = ops.multiply(ops.reshape(acc, (m, 1, p, r)), ops.reshape(part, (1, n, p, r)))
        m *= n
        acc = ops.reshape(prod, (m, p, r))
    last = parts[-1]
    n = shapes[-1][0]
    # contract the rank axis per latent index with batched GEMM: [p, M, r] @ [p, r, n]
    out = ops.matmul(ops.transpose(acc, (1, 0, 2)), ops.transpose(last, (1, 2, 0)))
    out = ops.transpose(out, (1, 2, 0))  # [M, n, p]
    return ops.reshape(out, tuple(s[0] for s in shapes) + (p,))


def branch_trunk_contract(branch, trunk, bias=0.0) -> np.ndarray:
    """``out[s, idx] = bias + sum_k branch[s, k] * trunk[idx, k]``."""
    bs = _shape(branch)
    ts = _shape(trunk)
    if len(bs) != 2:
        raise ShapeError(f"branch must be [N, p], got {bs}")
    if len(ts) < 1 or ts[-1] != bs[1]:
        raise ShapeError(f"latent width mismatch: branch {bs}, trunk {ts}")
    lattice = ts[:-1]
    flat = ops.reshape(trunk, (int(np.prod(lattice, dtype=np.int64)), bs[1]))
    out = ops.matmul(branch, ops.transpose(flat))
    out = ops.reshape(out, (bs[0],) + lattice)
    if isinstance(bias, (int, float)) and bias == 0.0:
        return out
    return ops.add(out, bias)


def meshgrid_points(axes: Sequence) -> np.ndarray:
    """Cartesian product of coordinate vectors, last axis varying fastest."""
    if len(axes) == 0:
        raise ValueError("need at least one axis")
    arrs = [np.asarray(a, dtype=np.float64).reshape(-1) for a in axes]
    if any(a.size == 0 for a in arrs):
        raise ValueError("coordinate axes must be non-empty")
    grids = np.meshgrid(*arrs, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)
