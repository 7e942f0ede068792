"""PDE residuals and physics-informed loss assembly.

Losses are built from :class:`Term` objects. A term owns one or more
coordinate lattices ("views"), the derivative keys it needs there and a
function mapping those derivatives to error arrays. The same terms are
evaluated in two ways:

* lattice mode: every function is paired with every lattice point (separable
  models and closed-form fields);
* pair mode: an explicit list of (function, lattice point) pairs, used for
  mini-batched vanilla training.

Derivative keys are sorted tuples of axis indices, e.g. ``(0, 0)`` for the
second derivative along axis 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import HyperDual, ops
from .errors import NumericError, ShapeError
from .model import DeepONetModel, PassCounter, lattice_derivatives, pair_derivatives, plan_seeds
from .tensor import meshgrid_points

KINDS = ("burgers", "biot", "heat")
CATEGORIES = ("physics", "ic", "bc")


@dataclass(frozen=True)
class ProblemSpec:
    """Constants, domain and sampling plan for one benchmark.

    Point counts: ``residual_points`` per residual axis; ``bc_points`` and
    ``ic_points`` along each sampled boundary or initial axis; ``alpha_points``
    is the diffusivity grid of the heat IC and BC lattices.
    """

    kind: str
    n_sensors: int
    residual_points: tuple[int, ...]
    bc_points: int
    ic_points: int
    test_points: tuple[int, ...]
    residual_sampling: str = "uniform"
    weights: dict = field(default_factory=lambda: {"physics": 1.0, "ic": 1.0, "bc": 1.0})
    nu: float = 0.01
    lame_lambda: float = 1.0
    lame_mu: float = 1.0
    permeability: float = 1.0
    density: float = 1.0
    gravity: float = 1.0
    length: float = 1.0
    alpha_range: tuple[float, float] = (1e-2, 1.0)
    alpha_spacing: str = "linear"
    alpha_points: int = 51

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "residual_points", tuple(int(n) for n in self.residual_points))
        object.__setattr__(self, "test_points", tuple(int(n) for n in self.test_points))
        object.__setattr__(self, "alpha_range", tuple(float(a) for a in self.alpha_range))
        object.__setattr__(self, "weights", {k: float(self.weights.get(k, 1.0)) for k in CATEGORIES})
        consts = (self.nu, self.lame_lambda, self.lame_mu, self.permeability, self.density, self.gravity, self.length)
        if min(consts) <= 0:
            raise ValueError("physical constants must be positive")
        lo, hi = self.alpha_range
        if not 0 < lo < hi:
            raise ValueError(f"alpha range must satisfy 0 < lo < hi, got {self.alpha_range}")
        if self.residual_sampling not in ("uniform", "random"):
            raise ValueError("residual_sampling must be 'uniform' or 'random'")
        if self.alpha_spacing not in ("linear", "log"):
            raise ValueError("alpha_spacing must be 'linear' or 'log'")
        if len(self.residual_points) != self.d:
            raise ValueError(f"{self.kind} needs {self.d} residual axis sizes")
        if min(self.residual_points + (self.bc_points, self.ic_points, self.n_sensors)) < 1:
            raise ValueError("point counts must be positive")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def burgers(cls, **overrides) -> "ProblemSpec":
        base = dict(
            kind="burgers", n_sensors=101, residual_points=(50, 50), residual_sampling="random",
            bc_points=100, ic_points=101, test_points=(101, 101),
            weights={"physics": 1.0, "ic": 20.0, "bc": 1.0},
        )
        return cls(**{**base, **overrides})

    @classmethod
    def biot(cls, **overrides) -> "ProblemSpec":
        base = dict(
            kind="biot", n_sensors=101, residual_points=(101, 101),
            bc_points=101, ic_points=101, test_points=(101, 101),
        )
        return cls(**{**base, **overrides})

    @classmethod
    def heat(cls, **overrides) -> "ProblemSpec":
        base = dict(
            kind="heat", n_sensors=1, residual_points=(31, 31, 31, 31),
            bc_points=51, ic_points=51, alpha_points=51, test_points=(31, 31, 31),
        )
        return cls(**{**base, **overrides})

    @property
    def d(self) -> int:
        return 4 if self.kind == "heat" else 2

    @property
    def n_fields(self) -> int:
        return 2 if self.kind == "biot" else 1

    @property
    def axis_names(self) -> tuple[str, ...]:
        return {"burgers": ("x", "t"), "biot": ("z", "t"), "heat": ("x", "y", "t", "c")}[self.kind]

    @property
    def domain(self) -> list[tuple[float, float]]:
        if self.kind == "burgers":
            return [(0.0, 1.0), (0.0, 1.0)]
        if self.kind == "biot":
            return [(0.0, self.length), (0.0, 1.0)]
        lo, hi = self.alpha_range
        return [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (np.sqrt(lo), np.sqrt(hi))]

    @property
    def modulus(self) -> float:
        return self.lame_lambda + 2.0 * self.lame_mu

    @property
    def conductivity(self) -> float:
        return self.permeability / (self.density * self.gravity)

    def alpha_grid(self, n: int) -> np.ndarray:
        lo, hi = self.alpha_range
        if self.alpha_spacing == "log":
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)

    def c_grid(self, n: int) -> np.ndarray:
        return np.sqrt(self.alpha_grid(n))


@dataclass
class LossBreakdown:
    physics: object
    ic: object
    bc: object
    total: object
    weights: dict

    def as_floats(self) -> dict[str, float]:
        return {k: float(ops.value_of(getattr(self, k))) for k in ("total", "physics", "ic", "bc")}


# -- field evaluators -------------------------------------------------------------


class ModelField:
    """A DeepONet viewed as a differentiable field evaluator."""

    def __init__(self, model: DeepONetModel, counter: PassCounter | None = None) -> None:
        self.model = model
        self.counter = counter

    @property
    def n_fields(self) -> int:
        return self.model.config.n_fields

    def lattice(self, branch_in, axes, keys) -> list[dict]:
        return lattice_derivatives(self.model, branch_in, axes, keys, self.counter)

    def pairs(self, branch_rows, points, keys) -> list[dict]:
        return pair_derivatives(self.model, branch_rows, points, keys, self.counter)


class ClosedFormField:
    """Field given by a formula ``fn(branch_in, coords)``.

    ``coords`` is a list of per-axis coordinates (hyper-duals when
    derivatives are requested) that broadcast to the evaluation shape;
    ``fn`` returns one value or a list with one value per output field.
    """

    def __init__(self, fn: Callable, n_fields: int = 1) -> None:
        self.fn = fn
        self.n_fields = n_fields

    def _run(self, branch_in, coords: list[np.ndarray], keys, shape) -> list[dict]:
        keys = [tuple(sorted(k)) for k in keys]
        seeds, where = plan_seeds(keys)
        results = []
        for a, b in seeds:
            xs = []
            for j, c in enumerate(coords):
                one = np.ones_like(c)
                t1 = one if j == a else None
                t2 = t1 if (b == a and j == a) else (one if j == b else None)
                xs.append(HyperDual(c, t1, t2) if (t1 is not None or t2 is not None) else c)
            out = self.fn(branch_in, xs)
            results.append(list(out) if isinstance(out, (list, tuple)) else [out])
        derivs = [dict() for _ in range(self.n_fields)]
        for key in keys:
            i, comp = where[key]
            for f in range(self.n_fields):
                val = results[i][f]
                val = getattr(val, comp) if isinstance(val, HyperDual) else (val if comp == "v" else None)
                derivs[f][key] = np.zeros(shape) if val is None else np.broadcast_to(ops.value_of(val), shape)
        return derivs

    def lattice(self, branch_in, axes, keys) -> list[dict]:
        branch_in = np.asarray(branch_in, dtype=np.float64)
        d = len(axes)
        shape = (branch_in.shape[0],) + tuple(len(a) for a in axes)
        coords = []
        for j, a in enumerate(axes):
            s = [1] * (d + 1)
            s[j + 1] = len(a)
            coords.append(np.asarray(a, dtype=np.float64).reshape(s))
        return self._run(branch_in, coords, keys, shape)

    def pairs(self, branch_rows, points, keys) -> list[dict]:
        points = np.asarray(points, dtype=np.float64)
        coords = [points[:, j] for j in range(points.shape[1])]
        return self._run(np.asarray(branch_rows, dtype=np.float64), coords, keys, (points.shape[0],))


def as_field(model_or_field, counter: PassCounter | None = None):
    if isinstance(model_or_field, DeepONetModel):
        return ModelField(model_or_field, counter)
    return model_or_field


# -- terms ----------------------------------------------------------------------


@dataclass
class Term:
    """One loss category: its lattices, derivative keys and error map.

    ``errors(derivs, take)`` receives ``derivs[view][field][key]`` and a
    function ``take`` that brings a lattice-shaped constant (broadcastable to
    ``[N, n_1, ..., n_d]``) into the evaluation layout. It returns a list of
    error arrays; the term value is ``scale`` times the sum of their mean
    squares.
    """

    category: str
    views: list
    keys: list
    errors: Callable
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown loss category {self.category!r}")
        shapes = {tuple(len(a) for a in v) for v in self.views}
        if len(shapes) != 1:
            raise ShapeError("all views of a term must share one lattice shape")

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.views[0])

    @property
    def n_points(self) -> int:
        return int(np.prod(self.lattice_shape))


def _check_finite(arr, what: str) -> None:
    v = np.asarray(ops.value_of(arr))
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite values in {what}")


def term_value(field, branch_in, term: Term, select=None):
    """Mean-square value of one term.

    ``select=(s, q, denom)`` switches to pair mode: pair ``i`` couples
    function ``s[i]`` with flat lattice index ``q[i]`` and squared errors are
    summed and divided by ``denom`` (the size of the full mini-batch when the
    selection is one chunk of it).
    """
    n = np.shape(ops.value_of(branch_in))[0]
    shape = (n,) + term.lattice_shape
    if select is None:
        derivs = [field.lattice(branch_in, axes, term.keys) for axes in term.views]

        def take(a):
            return a

    else:
        s, q, denom = select
        rows = ops.getitem(branch_in, s) if isinstance(branch_in, ops.Var) else np.asarray(branch_in)[s]
        derivs = [field.pairs(rows, meshgrid_points(axes)[q], term.keys) for axes in term.views]

        def take(a):
            a = np.broadcast_to(np.asarray(a, dtype=np.float64), shape).reshape(n, -1)
            return a[s, q]

    errs = term.errors(derivs, take)
    parts = []
    for e in errs:
        _check_finite(e, f"{term.category} term")
        sq = ops.square(e)
        parts.append(ops.mean(sq) if select is None else ops.divide(ops.sum_(sq), float(select[2])))
    value = parts[0]
    for p in parts[1:]:
        value = ops.add(value, p)
    if term.scale != 1.0:
        value = ops.multiply(value, term.scale)
    return value


def assemble(field, branch_in, terms: Sequence[Term], weights: dict, selects=None) -> LossBreakdown:
    """Weighted sum of the terms, grouped by category."""
    cats = {c: 0.0 for c in CATEGORIES}
    for i, term in enumerate(terms):
        v = term_value(field, branch_in, term, None if selects is None else selects[i])
        cats[term.category] = ops.add(cats[term.category], v)
    total = 0.0
    for c in CATEGORIES:
        total = ops.add(total, ops.multiply(cats[c], weights[c]))
    return LossBreakdown(cats["physics"], cats["ic"], cats["bc"], total, dict(weights))


def total_loss(breakdowns: Sequence[LossBreakdown]):
    """Mean of per-batch totals (duplicating a batch leaves it unchanged)."""
    if not breakdowns:
        raise ValueError("need at least one breakdown")
    acc = 0.0
    for b in breakdowns:
        acc = ops.add(acc, b.total)
    return ops.multiply(acc, 1.0 / len(breakdowns))


def _lat(axis, j: int, d: int) -> np.ndarray:
    """Coordinate ``j`` of a ``d``-axis lattice, shaped to broadcast over ``[N, ...]``."""
    s = [1] * (d + 1)
    s[j + 1] = len(axis)
    return np.asarray(axis, dtype=np.float64).reshape(s)


def _resample(values, sensors, points) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(sensors) == len(points) and np.allclose(sensors, points):
        return values
    return np.stack([np.interp(points, sensors, row) for row in values])


# -- Burgers ---------------------------------------------------------------------

_BURGERS_KEYS = [(), (0,), (1,), (0, 0)]


def _burgers_r(D: dict, nu: float):
    s, s_x, s_t, s_xx = D[()], D[(0,)], D[(1,)], D[(0, 0)]
    return ops.subtract(ops.add(s_t, ops.multiply(s, s_x)), ops.multiply(s_xx, nu))


def burgers_residual(field, u_batch, x_axis, t_axis, nu: float = 0.01):
    """``s_t + s s_x - nu s_xx`` on the (x, t) lattice, shape ``[N, n_x, n_t]``."""
    D = as_field(field).lattice(u_batch, [x_axis, t_axis], _BURGERS_KEYS)[0]
    r = _burgers_r(D, nu)
    _check_finite(r, "Burgers residual")
    return r


def burgers_terms(problem: ProblemSpec, u_batch, plan: dict) -> list[Term]:
    sensors = np.linspace(0.0, 1.0, problem.n_sensors)
    x_ic, t0 = plan["ic"]
    target = _resample(u_batch, sensors, x_ic)[:, :, None]
    x_res, t_res = plan["residual"]
    _, t_bc = plan["bc"]
    nu = problem.nu
    return [
        Term("physics", [[x_res, t_res]], _BURGERS_KEYS, lambda D, take: [_burgers_r(D[0][0], nu)]),
        Term(
            "bc",
            [[np.array([0.0]), t_bc], [np.array([1.0]), t_bc]],
            [(), (0,)],
            lambda D, take: [
                ops.subtract(D[0][0][()], D[1][0][()]),
                ops.subtract(D[0][0][(0,)], D[1][0][(0,)]),
            ],
        ),
        Term("ic", [[x_ic, t0]], [()], lambda D, take: [ops.subtract(D[0][0][()], take(target))]),
    ]


def burgers_losses(model, u_batch, plan: dict, problem: ProblemSpec | None = None) -> LossBreakdown:
    """physics = MSE(residual); bc = periodicity of s and s_x; ic = MSE(s(x, 0) - u)."""
    problem = problem or ProblemSpec.burgers()
    return assemble(as_field(model), u_batch, burgers_terms(problem, u_batch, plan), problem.weights)


# -- consolidation -----------------------------------------------------------------

_BIOT_KEYS = [(0,), (0, 0), (0, 1)]


def _biot_r(U: dict, P: dict, modulus: float, conductivity: float):
    r1 = ops.subtract(ops.multiply(U[(0, 0)], modulus), P[(0,)])
    r2 = ops.subtract(U[(0, 1)], ops.multiply(P[(0, 0)], conductivity))
    return r1, r2


def biot_residuals(field, f_batch, z_axis, t_axis, problem: ProblemSpec | None = None):
    """``((lambda + 2 mu) u_zz - p_z, u_tz - k/(rho g) p_zz)`` on the (z, t) lattice.

    ``field`` has two outputs, displacement then pressure.
    """
    problem = problem or ProblemSpec.biot()
    U, P = as_field(field).lattice(f_batch, [z_axis, t_axis], _BIOT_KEYS)
    r1, r2 = _biot_r(U, P, problem.modulus, problem.conductivity)
    _check_finite(r1, "equilibrium residual")
    _check_finite(r2, "storage residual")
    return r1, r2


def biot_terms(problem: ProblemSpec, f_batch, g, plan: dict) -> list[Term]:
    if g is None:
        raise ValueError("surface displacement g(t) is required for the Dirichlet condition")
    f_batch = np.asarray(f_batch, dtype=np.float64)
    z_res, t_res = plan["residual"]
    z_ic, t0 = plan["ic"]
    _, t_bc = plan["bc"]
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (f_batch.shape[0], len(t_bc)):
        raise ShapeError(f"g must be [N, {len(t_bc)}], got {g.shape}")
    f0 = f_batch[:, 0].reshape(-1, 1, 1)
    g_lat = g[:, None, :]
    M, kappa = problem.modulus, problem.conductivity
    L = problem.length

    def physics(D, take):
        return list(_biot_r(D[0][0], D[0][1], M, kappa))

    def ic(D, take):
        U, P = D[0]
        return [U[()], ops.subtract(P[()], take(f0))]

    def bc(D, take):
        (U0, P0), (UL, PL) = D
        return [ops.subtract(U0[()], take(g_lat)), P0[()], UL[()], PL[(0,)]]

    return [
        Term("physics", [[z_res, t_res]], _BIOT_KEYS, physics),
        Term("ic", [[z_ic, t0]], [()], ic),
        Term("bc", [[np.array([0.0]), t_bc], [np.array([L]), t_bc]], [(), (0,)], bc),
    ]


def biot_losses(model, f_batch, g, plan: dict, problem: ProblemSpec | None = None) -> LossBreakdown:
    """Two residual MSEs plus six unweighted IC/BC mean squares."""
    problem = problem or ProblemSpec.biot()
    return assemble(as_field(model), f_batch, biot_terms(problem, f_batch, g, plan), problem.weights)


# -- heat ------------------------------------------------------------------------

_HEAT_KEYS = [(2,), (0, 0), (1, 1)]


def _heat_r(D: dict, c_lat):
    lap = ops.add(D[(0, 0)], D[(1, 1)])
    return ops.subtract(D[(2,)], ops.multiply(lap, np.square(c_lat)))


def heat_residual(field, T0_batch, x_axis, y_axis, t_axis, c_axis):
    """``T_t - c^2 (T_xx + T_yy)`` on the (x, y, t, c) lattice, ``[N, n_x, n_y, n_t, n_c]``."""
    D = as_field(field).lattice(T0_batch, [x_axis, y_axis, t_axis, c_axis], _HEAT_KEYS)[0]
    r = _heat_r(D, _lat(c_axis, 3, 4))
    _check_finite(r, "heat residual")
    return r


def heat_terms(problem: ProblemSpec, T0_batch, plan: dict) -> list[Term]:
    T0 = np.asarray(T0_batch, dtype=np.float64).reshape(-1, 1, 1, 1, 1)
    res = plan["residual"]
    c_lat = _lat(res[3], 3, 4)
    return [
        Term("physics", [res], _HEAT_KEYS, lambda D, take: [_heat_r(D[0][0], take(c_lat))]),
        Term("ic", [plan["ic"]], [()], lambda D, take: [ops.subtract(D[0][0][()], take(T0))]),
        # the two edge lattices have equal size, so half of each MSE is the pooled four-edge mean
        Term("bc", [plan["bc"]], [()], lambda D, take: [D[0][0][()]], scale=0.5),
        Term("bc", [plan["bc_y"]], [()], lambda D, take: [D[0][0][()]], scale=0.5),
    ]


def heat_losses(model, T0_batch, plan: dict, problem: ProblemSpec | None = None) -> LossBreakdown:
    """physics = MSE(residual); ic = MSE(T - T0) at t=0; bc = MSE(T) over all four edges."""
    problem = problem or ProblemSpec.heat()
    return assemble(as_field(model), T0_batch, heat_terms(problem, T0_batch, plan), problem.weights)


# -- dispatch ----------------------------------------------------------------------


def problem_terms(problem: ProblemSpec, branch_in, plan: dict, extras: dict | None = None) -> list[Term]:
    extras = extras or {}
    if problem.kind == "burgers":
        return burgers_terms(problem, branch_in, plan)
    if problem.kind == "biot":
        return biot_terms(problem, branch_in, extras.get("g"), plan)
    return heat_terms(problem, branch_in, plan)
