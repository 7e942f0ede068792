from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepdeeponet.bench import (
    SWEEP_COLUMNS,
    count_passes,
    growth_exponent,
    jacobian_dims,
    scaling_sweep,
    sweep_exponents,
    write_sweep_csv,
)
from sepdeeponet.data import sampling_plan
from sepdeeponet.physics import ProblemSpec


def test_burgers_worked_example():
    plan = sampling_plan(ProblemSpec.burgers())
    sep = count_passes(plan, "separable", 1000)
    van = count_passes(plan, "vanilla", 1000)
    assert sep["branch_passes"] == 1000
    assert sep["trunk_passes_by_term"] == {"residual": 100, "ic": 102, "bc": 102}
    assert sep["total"] == 1304
    assert van["trunk_passes_by_term"] == {"residual": 2_500_000, "ic": 101_000, "bc": 100_000}
    assert van["total"] == 2_701_000
    assert round(van["total"] / sep["total"]) == 2071
    assert round(van["total"] / 1300) == 2078


def test_single_point_single_function():
    plan = {"residual": [np.array([0.5])]}
    assert count_passes(plan, "separable", 1)["total"] == 2
    assert count_passes(plan, "vanilla", 1)["total"] == 1


def test_unknown_variant():
    with pytest.raises(ValueError):
        count_passes({"residual": [np.zeros(2)]}, "stacked", 1)
    with pytest.raises(ValueError):
        jacobian_dims([3], "stacked")


def test_jacobian_examples():
    assert jacobian_dims([50, 50], "separable") == (100, 2500)
    assert jacobian_dims([50, 50], "vanilla") == (2500, 2500)
    assert jacobian_dims([31] * 4, "separable") == (124, 923_521)
    assert jacobian_dims([7], "separable") == jacobian_dims([7], "vanilla") == (7, 7)
    assert jacobian_dims([np.zeros(3), np.zeros(4)], "separable") == (7, 12)


@settings(max_examples=50, deadline=None)
@given(
    sizes=st.lists(st.lists(st.integers(2, 30), min_size=1, max_size=4), min_size=1, max_size=3),
    n=st.integers(1, 50),
)
def test_separable_never_needs_more_trunk_passes(sizes, n):
    # holds whenever every axis has at least two points (sum <= product)
    plan = {f"residual{i}": [np.zeros(s) for s in axes] for i, axes in enumerate(sizes)}
    sep = count_passes(plan, "separable", n)
    van = count_passes(plan, "vanilla", n)
    assert sum(sep["trunk_passes_by_term"].values()) <= sum(van["trunk_passes_by_term"].values())
    assert sep["total"] == n + sum(sum(axes) for axes in sizes)


def test_length_one_axis_counterexample():
    # a single-function IC lattice is cheaper pointwise: 101 * 1 < 101 + 1
    plan = {"ic": [np.zeros(101), np.zeros(1)]}
    assert count_passes(plan, "separable", 1)["trunk_passes_by_term"]["ic"] == 102
    assert count_passes(plan, "vanilla", 1)["trunk_passes_by_term"]["ic"] == 101


def test_growth_exponent_on_power_laws():
    ns = np.array([10, 20, 40, 80])
    assert growth_exponent(ns, 3 * ns**1.0) == pytest.approx(1.0)
    assert growth_exponent(ns, 0.1 * ns**2.0) == pytest.approx(2.0)


def test_small_sweep_rows_and_csv(tmp_path):
    rows = scaling_sweep(ProblemSpec.burgers(), [4, 6], ["separable", "vanilla"], iters=1, warmup=0,
                         n_functions=2, width=4, depth=1, p=2, r=2)
    assert [(r["n"], r["variant"]) for r in rows] == [(4, "separable"), (6, "separable"), (4, "vanilla"), (6, "vanilla")]
    assert all(r["ms_per_iter"] > 0 for r in rows)
    assert rows[0]["jacobian_rows"] == 8 and rows[2]["jacobian_rows"] == 16
    path = write_sweep_csv(rows, tmp_path / "s" / "scaling.csv")
    with path.open() as fh:
        got = list(csv.DictReader(fh))
    assert len(got) == 4 and tuple(got[0]) == SWEEP_COLUMNS
    assert set(sweep_exponents(rows)) == {"separable", "vanilla"}


def test_sweep_rejects_other_problems():
    with pytest.raises(ValueError):
        scaling_sweep(ProblemSpec.heat(), [4], ["separable"], iters=1, warmup=0)
