from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _scripted
from sepdeeponet import DeepONetConfig, init_params
from sepdeeponet.data import sampling_plan
from sepdeeponet.errors import NumericError, ShapeError
from sepdeeponet.oracles import biot_ramp_field, biot_ramp_solution, heat_field
from sepdeeponet.physics import (
    ClosedFormField,
    LossBreakdown,
    ModelField,
    ProblemSpec,
    Term,
    assemble,
    biot_losses,
    biot_residuals,
    burgers_losses,
    burgers_residual,
    burgers_terms,
    heat_losses,
    heat_residual,
    term_value,
    total_loss,
)
from sepdeeponet.tensor import meshgrid_points

G = np.linspace(0.0, 1.0, 5)
U2 = np.zeros((2, 101))


def _const(value):
    return ClosedFormField(lambda u, c: value + 0.0 * c[0])


def _small_model(kind, variant="separable", seed=0, scale=1.0):
    d, m, F = {"burgers": (2, 101, 1), "biot": (2, 101, 2), "heat": (4, 1, 1)}[kind]
    cfg = DeepONetConfig(variant, d, 3, m, (5, 5), (5, 5), r=2 if variant == "separable" else 1, n_fields=F)
    model = init_params(cfg, seed)
    model.params["bias"][:] = 0.1 * (np.arange(F) + 1)
    for k in model.params:
        model.params[k] = model.params[k] * scale
    return model


def _zero_model(kind):
    model = _small_model(kind)
    for k in model.params:
        if k.startswith("trunk") or k == "bias":
            model.params[k] = np.zeros_like(model.params[k])
    return model


# -- residual operators on closed-form fields ---------------------------------------


def test_burgers_residual_examples():
    assert not np.any(burgers_residual(_const(3.0), U2, G, G))
    r_t = burgers_residual(ClosedFormField(lambda u, c: c[1] * 1.0), U2, G, G)
    np.testing.assert_array_equal(r_t, np.ones((2, 5, 5)))
    r_x = burgers_residual(ClosedFormField(lambda u, c: c[0] * 1.0), U2, G, G)
    np.testing.assert_allclose(r_x, np.broadcast_to(G[None, :, None], (2, 5, 5)), atol=1e-15)


def cole_hopf_field(nu=0.01, a0=1.5, a1=1.0):
    def fn(u, c):
        x, t = c
        e = a1 * np.exp(t * (-4 * np.pi**2 * nu))
        return (e * np.sin(x * (2 * np.pi))) * (4 * np.pi * nu) / (e * np.cos(x * (2 * np.pi)) + a0)

    return ClosedFormField(fn)


def test_burgers_residual_vanishes_on_exact_solution():
    r = burgers_residual(cole_hopf_field(), np.zeros((1, 101)), np.linspace(0, 1, 21), np.linspace(0, 1, 21))
    assert float(np.mean(r**2)) <= 1e-6
    assert float(np.max(np.abs(r))) <= 1e-14


def test_biot_residual_examples():
    z = np.zeros((1, 101))
    r1, r2 = biot_residuals(ClosedFormField(lambda f, c: [c[0] * 0.0, c[1] * 0.0], 2), z, G, G)
    assert not np.any(r1) and not np.any(r2)
    r1, _ = biot_residuals(ClosedFormField(lambda f, c: [c[0] ** 2 + 0.0 * c[1], c[0] * 6.0], 2), z, G, G)
    np.testing.assert_allclose(r1, 0.0, atol=1e-14)
    _, r2 = biot_residuals(ClosedFormField(lambda f, c: [c[0] * c[1], c[0] ** 2 * 0.5], 2), z, G, G)
    np.testing.assert_allclose(r2, 0.0, atol=1e-14)


def test_heat_residual_examples():
    T0 = np.ones((1, 1))
    assert not np.any(heat_residual(_const(2.0), T0, G, G, G, G))
    r = heat_residual(ClosedFormField(lambda T, c: c[2] * 1.0), T0, G, G, G, G)
    np.testing.assert_array_equal(r, 1.0)

    def mode(T, c):
        x, y, t, cc = c
        return np.exp(cc * cc * t * (-2 * np.pi**2)) * np.sin(x * np.pi) * np.sin(y * np.pi)

    r = heat_residual(ClosedFormField(mode), T0, G, G, G, np.array([0.1, 0.5, 1.0]))
    assert float(np.mean(r**2)) <= 1e-10


def test_heat_series_passthrough():
    x = np.linspace(0.05, 0.95, 7)
    t = np.linspace(0.01, 1.0, 6)
    c = np.sqrt(np.array([0.01, 0.3, 1.0]))
    r = heat_residual(ClosedFormField(heat_field(199)), np.array([[0.2], [0.9]]), x, x, t, c)
    assert float(np.mean(r**2)) <= 1e-8


def test_biot_ramp_passthrough_all_terms():
    problem = ProblemSpec.biot(residual_points=(21, 21), bc_points=21, ic_points=21)
    plan = sampling_plan(problem)
    f = np.linspace(0, 1, 101)[None, :]
    _, t_bc = plan["bc"]
    g = biot_ramp_solution(np.zeros_like(t_bc), t_bc)[0][None, :]
    lb = biot_losses(ClosedFormField(biot_ramp_field(401), 2), f, g, plan, problem).as_floats()
    assert lb["physics"] <= 1e-6
    assert lb["ic"] <= 1e-6 and lb["bc"] <= 1e-6


def test_biot_missing_reference_boundary():
    problem = ProblemSpec.biot()
    with pytest.raises(ValueError):
        biot_losses(_small_model("biot"), np.zeros((1, 101)), None, sampling_plan(problem), problem)


def test_nonfinite_field_raises():
    with pytest.raises(NumericError):
        burgers_residual(ClosedFormField(lambda u, c: c[0] / 0.0 + c[1]), U2, G, G)


# -- loss assembly ----------------------------------------------------------------------


def test_zero_model_losses():
    bp = ProblemSpec.burgers()
    lb = burgers_losses(_zero_model("burgers"), np.zeros((3, 101)), sampling_plan(bp)).as_floats()
    assert lb == {"total": 0.0, "physics": 0.0, "ic": 0.0, "bc": 0.0}

    hp = ProblemSpec.heat(residual_points=(4, 4, 4, 4), ic_points=5, bc_points=5, alpha_points=3)
    plan = sampling_plan(hp)
    lb = heat_losses(_zero_model("heat"), np.zeros((2, 1)), plan, hp).as_floats()
    assert lb == {"total": 0.0, "physics": 0.0, "ic": 0.0, "bc": 0.0}
    lb = heat_losses(_zero_model("heat"), np.full((2, 1), 0.5), plan, hp).as_floats()
    assert lb["ic"] == pytest.approx(0.25, abs=1e-15) and lb["bc"] == 0.0

    op = ProblemSpec.biot(residual_points=(5, 5), bc_points=5, ic_points=5)
    lb = biot_losses(_zero_model("biot"), np.zeros((2, 101)), np.zeros((2, 5)), sampling_plan(op), op)
    assert float(lb.physics) == 0.0 and float(lb.bc) == 0.0


def test_burgers_interpolating_field_has_zero_ic():
    u = np.sin(2 * np.pi * np.linspace(0, 1, 101))[None, :]
    field = ClosedFormField(lambda u, c: np.sin(c[0] * (2 * np.pi)) * (c[1] + 1.0))
    lb = burgers_losses(field, u, sampling_plan(ProblemSpec.burgers())).as_floats()
    assert lb["ic"] <= 1e-30


@pytest.mark.parametrize("variant", ["separable", "vanilla"])
def test_burgers_matches_scripted_assembly(variant):
    problem = ProblemSpec.burgers(residual_points=(4, 3), bc_points=5)
    plan = sampling_plan(problem, seed=3)
    model = _small_model("burgers", variant, seed=1)
    u = np.random.default_rng(0).normal(size=(3, 101)) * 0.3
    got = burgers_losses(model, u, plan, problem).as_floats()
    ref = _scripted.burgers(model, u, plan)
    for k in ref:
        assert abs(got[k] - ref[k]) <= 1e-12 * max(1.0, abs(ref[k])), k


@pytest.mark.parametrize("variant", ["separable", "vanilla"])
def test_biot_matches_scripted_assembly(variant):
    problem = ProblemSpec.biot(residual_points=(4, 3), bc_points=5, ic_points=4)
    plan = sampling_plan(problem)
    model = _small_model("biot", variant, seed=2)
    rng = np.random.default_rng(1)
    f, g = rng.normal(size=(2, 101)), rng.normal(size=(2, 5))
    got = biot_losses(model, f, g, plan, problem).as_floats()
    ref = _scripted.biot(model, f, g, plan)
    for k in ref:
        assert abs(got[k] - ref[k]) <= 1e-12 * max(1.0, abs(ref[k])), k


@pytest.mark.parametrize("variant", ["separable", "vanilla"])
def test_heat_matches_scripted_assembly(variant):
    problem = ProblemSpec.heat(residual_points=(3, 2, 3, 2), ic_points=3, bc_points=3, alpha_points=2)
    plan = sampling_plan(problem)
    model = _small_model("heat", variant, seed=3)
    T0 = np.array([[0.2], [0.7]])
    got = heat_losses(model, T0, plan, problem).as_floats()
    ref = _scripted.heat(model, T0, plan)
    for k in ref:
        assert abs(got[k] - ref[k]) <= 1e-12 * max(1.0, abs(ref[k])), k


def test_vanilla_pair_mode_equals_lattice_mode():
    problem = ProblemSpec.burgers(residual_points=(4, 3), bc_points=5)
    plan = sampling_plan(problem)
    model = _small_model("burgers", "vanilla", seed=4)
    u = np.random.default_rng(2).normal(size=(3, 101))
    field = ModelField(model)
    for term in burgers_terms(problem, u, plan):
        full = float(term_value(field, u, term))
        n, P = u.shape[0], term.n_points
        s, q = np.divmod(np.arange(n * P), P)
        halves = [(s[:7], q[:7], n * P), (s[7:], q[7:], n * P)]
        paired = sum(float(term_value(field, u, term, h)) for h in halves)
        assert abs(full - paired) <= 1e-13 * max(1.0, full)


def test_term_requires_matching_views():
    with pytest.raises(ShapeError):
        Term("bc", [[G, G], [G[:2], G]], [()], lambda D, take: [])
    with pytest.raises(ValueError):
        Term("other", [[G]], [()], lambda D, take: [])


def test_single_point_error_squared():
    term = Term("ic", [[np.array([0.3]), np.array([0.0])]], [()], lambda D, take: [D[0][0][()] - 1.5])
    lb = assemble(_const(0.0), np.zeros((1, 101)), [term], {"physics": 1.0, "ic": 1.0, "bc": 1.0})
    assert float(lb.total) == 2.25


def test_total_loss_mean_semantics():
    mk = lambda v: LossBreakdown(0.0, 0.0, 0.0, v, {})
    assert float(total_loss([mk(3.0)])) == 3.0
    assert float(total_loss([mk(3.0), mk(3.0)])) == 3.0
    assert float(total_loss([mk(1.0), mk(3.0)])) == 2.0
    with pytest.raises(ValueError):
        total_loss([])


def test_burgers_weights_by_hand():
    problem = ProblemSpec.burgers(residual_points=(3, 3), bc_points=4)
    lb = burgers_losses(_small_model("burgers", seed=5), np.ones((2, 101)), sampling_plan(problem), problem)
    f = lb.as_floats()
    assert f["total"] == pytest.approx(f["physics"] + f["bc"] + 20 * f["ic"], rel=1e-15)


@settings(max_examples=10, deadline=None)
@given(w=st.floats(0.0, 10.0), seed=st.integers(0, 100))
def test_terms_nonnegative_and_weight_monotone(w, seed):
    problem = ProblemSpec.burgers(residual_points=(3, 3), bc_points=4)
    plan = sampling_plan(problem)
    model = _small_model("burgers", seed=seed)
    u = np.random.default_rng(seed).normal(size=(2, 101))
    terms = burgers_terms(problem, u, plan)
    base = {"physics": 1.0, "ic": 1.0, "bc": 1.0}
    lo = assemble(ModelField(model), u, terms, base).as_floats()
    hi = assemble(ModelField(model), u, terms, {**base, "ic": 1.0 + w}).as_floats()
    assert min(lo.values()) >= 0.0
    assert hi["total"] >= lo["total"]


def test_closed_form_lattice_and_pairs_agree():
    field = cole_hopf_field()
    u = np.zeros((2, 101))
    x, t = np.linspace(0, 1, 4), np.linspace(0, 1, 3)
    keys = [(), (0,), (1,), (0, 0), (0, 1)]
    lat = field.lattice(u, [x, t], keys)[0]
    pts = meshgrid_points([x, t])
    pairs = field.pairs(u[[0] * len(pts)], pts, keys)[0]
    for k in keys:
        np.testing.assert_allclose(pairs[k], lat[k][0].reshape(-1), atol=1e-15)
