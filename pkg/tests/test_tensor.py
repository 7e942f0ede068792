from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepdeeponet.errors import ShapeError
from sepdeeponet.tensor import branch_trunk_contract, meshgrid_points, outer_combine


def _loop_combine(parts):
    ns = [p.shape[0] for p in parts]
    p_dim, r_dim = parts[0].shape[1:]
    out = np.zeros(ns + [p_dim])
    for idx in itertools.product(*[range(n) for n in ns]):
        for k in range(p_dim):
            for r in range(r_dim):
                prod = 1.0
                for j, i in enumerate(idx):
                    prod *= parts[j][i, k, r]
                out[idx + (k,)] += prod
    return out


@settings(max_examples=25, deadline=None)
@given(
    ns=st.lists(st.integers(1, 4), min_size=1, max_size=4),
    p=st.integers(1, 3),
    r=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_outer_combine_matches_loops(ns, p, r, seed):
    rng = np.random.default_rng(seed)
    parts = [rng.normal(size=(n, p, r)) for n in ns]
    np.testing.assert_allclose(outer_combine(parts), _loop_combine(parts), rtol=0, atol=1e-12)


def test_outer_combine_rank_one_is_plain_outer_product():
    a = np.array([1.0, 2.0]).reshape(2, 1, 1)
    b = np.array([3.0, 4.0, 5.0]).reshape(3, 1, 1)
    out = outer_combine([a, b])
    np.testing.assert_array_equal(out[..., 0], np.outer([1, 2], [3, 4, 5]))


def test_outer_combine_single_axis_sums_rank():
    x = np.arange(12.0).reshape(2, 2, 3)
    np.testing.assert_array_equal(outer_combine([x]), x.sum(axis=2))


def test_outer_combine_validates_shapes():
    with pytest.raises(ShapeError):
        outer_combine([np.zeros((2, 3, 4)), np.zeros((2, 3, 5))])
    with pytest.raises(ShapeError):
        outer_combine([np.zeros((2, 3))])
    with pytest.raises(ValueError):
        outer_combine([])


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 4), ns=st.lists(st.integers(1, 4), min_size=1, max_size=3), p=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
)
def test_contract_matches_loops(n, ns, p, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n, p))
    t = rng.normal(size=tuple(ns) + (p,))
    out = branch_trunk_contract(b, t, 0.25)
    for s in range(n):
        for idx in itertools.product(*[range(k) for k in ns]):
            assert abs(out[(s,) + idx] - (0.25 + b[s] @ t[idx])) < 1e-12


def test_contract_latent_mismatch():
    with pytest.raises(ShapeError):
        branch_trunk_contract(np.zeros((2, 3)), np.zeros((4, 5)))


def test_meshgrid_last_axis_fastest():
    pts = meshgrid_points([np.array([0.0, 1.0]), np.array([10.0, 20.0, 30.0])])
    assert pts.shape == (6, 2)
    np.testing.assert_array_equal(pts[:3, 0], 0.0)
    np.testing.assert_array_equal(pts[:3, 1], [10, 20, 30])


def test_meshgrid_rejects_empty():
    with pytest.raises(ValueError):
        meshgrid_points([])
    with pytest.raises(ValueError):
        meshgrid_points([np.array([])])
