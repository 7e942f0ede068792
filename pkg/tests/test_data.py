from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepdeeponet.data import (
    GPKernelSpec,
    build_axes,
    dataset_checksums,
    generate_dataset,
    load_dataset,
    sample_gp_periodic_spectral,
    sample_gp_rbf,
    sampling_plan,
    save_dataset,
)
from sepdeeponet.errors import CorruptionError, FormatError
from sepdeeponet.physics import ProblemSpec
from sepdeeponet.rng import rng_stream


@pytest.fixture(scope="module")
def spectral_samples():
    return sample_gp_periodic_spectral(GPKernelSpec(), 101, 10_000, seed=0)


@pytest.fixture(scope="module")
def rbf_samples():
    return sample_gp_rbf(GPKernelSpec(kind="rbf"), 101, 10_000, seed=0)


def test_spectral_samples_are_periodic(spectral_samples):
    assert np.max(np.abs(spectral_samples[:, 0] - spectral_samples[:, -1])) <= 1e-8


def test_spectral_mean_within_clt_bound(spectral_samples):
    mean = spectral_samples.mean(axis=0)
    std = spectral_samples.std(axis=0)
    assert np.all(np.abs(mean) <= 3 * std / 100)


def test_spectral_variance_matches_parseval(spectral_samples):
    target = GPKernelSpec().point_variance()
    var = spectral_samples.var(axis=0)
    assert np.all(np.abs(var / target - 1) <= 0.05)


def test_spectral_density_formula():
    spec = GPKernelSpec(sigma=2.0, tau=1.0, gamma=1.0)
    assert spec.spectral_density(0.0) == 4.0
    assert spec.spectral_density(1.0) == pytest.approx(4.0 / (1 + 4 * np.pi**2))


def test_rbf_variance_and_far_correlation(rbf_samples):
    var = rbf_samples.var(axis=0)
    assert np.all(np.abs(var / 0.2 - 1) <= 0.10)
    corr = np.corrcoef(rbf_samples[:, 0], rbf_samples[:, -1])[0, 1]
    assert abs(corr - np.exp(-1 / 0.1)) <= 3 / np.sqrt(10_000)


def test_samplers_are_deterministic():
    for fn, spec in [(sample_gp_rbf, GPKernelSpec(kind="rbf")), (sample_gp_periodic_spectral, GPKernelSpec(modes=64))]:
        a, b = fn(spec, 33, 4, seed=5), fn(spec, 33, 4, seed=5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, fn(spec, 33, 4, seed=6))


def test_sampler_argument_checks():
    with pytest.raises(ValueError):
        sample_gp_periodic_spectral(GPKernelSpec(), 1, 1)
    with pytest.raises(ValueError):
        sample_gp_rbf(GPKernelSpec(kind="rbf"), 600, 1)
    with pytest.raises(ValueError):
        GPKernelSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        GPKernelSpec(kind="matern")


def test_named_streams_are_independent():
    a = rng_stream(0, "init").standard_normal(5)
    b = rng_stream(0, "pairs").standard_normal(5)
    c = rng_stream(0, "init").standard_normal(5)
    assert np.array_equal(a, c) and not np.array_equal(a, b)


def test_axes_lengths():
    lens = lambda axes: tuple(len(a) for a in axes)
    burgers, heat = ProblemSpec.burgers(), ProblemSpec.heat()
    assert lens(build_axes(burgers, "residual")) == (50, 50)
    assert lens(build_axes(heat, "residual")) == (31, 31, 31, 31)
    assert lens(build_axes(burgers, "bc")) == (2, 100)
    assert lens(build_axes(burgers, "ic")) == (101, 1)
    assert lens(build_axes(heat, "ic")) == (51, 51, 1, 51)
    assert lens(build_axes(heat, "bc")) == (2, 51, 51, 51)
    assert lens(build_axes(heat, "bc_y")) == (51, 2, 51, 51)
    assert lens(build_axes(ProblemSpec.biot(), "bc")) == (2, 101)
    z, t = build_axes(ProblemSpec.biot(), "ic")
    assert len(z) == 101 and z[0] > 0 and z[-1] == 1.0 and t.tolist() == [0.0]
    with pytest.raises(ValueError):
        build_axes(burgers, "bc_y")


def test_axes_ranges():
    burgers = ProblemSpec.burgers()
    x, t = build_axes(burgers, "residual", seed=1)
    assert np.all(np.diff(x) >= 0) and 0 <= x.min() and x.max() <= 1
    assert np.array_equal(x, build_axes(burgers, "residual", seed=1)[0])
    c = build_axes(ProblemSpec.heat(), "residual")[3]
    assert c[0] == pytest.approx(0.1) and c[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(np.diff(c**2), np.diff(c**2)[0])


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_heat_ic_excludes_edges(seed):
    x, y, t, _ = sampling_plan(ProblemSpec.heat(ic_points=7), seed)["ic"]
    assert 0 < x.min() and x.max() < 1 and t.tolist() == [0.0]


@pytest.mark.parametrize("kind", ["burgers", "biot", "heat"])
def test_dataset_round_trip(tmp_path, kind):
    problem = getattr(ProblemSpec, kind)(test_points=(5, 4) if kind != "heat" else (5, 4, 3))
    ds = generate_dataset(problem, 3, 2, seed=1, kernel=GPKernelSpec(modes=64) if kind == "burgers" else None)
    assert ds.n_train == 3 and ds.n_test == 2
    assert not np.any([np.array_equal(a, b) for a in ds.branch_train for b in ds.branch_test])
    save_dataset(ds, tmp_path / kind)
    back = load_dataset(tmp_path / kind)
    assert back.kind == kind and back.seed == 1
    for name, arr in ds.arrays.items():
        assert np.array_equal(back[name], arr)
    if kind == "biot":
        assert back.extras()["g"].shape == (3, 101)


def test_dataset_is_deterministic(tmp_path):
    problem = ProblemSpec.heat(test_points=(3, 3, 3))
    save_dataset(generate_dataset(problem, 2, 2, seed=9), tmp_path / "a")
    save_dataset(generate_dataset(problem, 2, 2, seed=9), tmp_path / "b")
    assert dataset_checksums(tmp_path / "a") == dataset_checksums(tmp_path / "b")


def _saved(tmp_path):
    problem = ProblemSpec.heat(test_points=(3, 3, 3))
    return save_dataset(generate_dataset(problem, 2, 2, seed=0), tmp_path / "ds")


def test_truncated_blob_is_corruption(tmp_path):
    path = _saved(tmp_path)
    blob = path / "T_test.f64"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(CorruptionError):
        load_dataset(path)


def test_manifest_shape_mismatch_is_format_error(tmp_path):
    path = _saved(tmp_path)
    m = json.loads((path / "manifest.json").read_text())
    m["arrays"]["T_test"]["shape"] = [2, 3, 3, 4]
    (path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError):
        load_dataset(path)


def test_version_mismatch_is_format_error(tmp_path):
    path = _saved(tmp_path)
    m = json.loads((path / "manifest.json").read_text())
    m["version"] = 2
    (path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError):
        load_dataset(path)
