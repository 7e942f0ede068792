"""MLPs and the vanilla / separable DeepONet variants."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import HyperDual, ops
from .autodiff.hyperdual import tanh as hd_tanh
from .errors import CorruptionError, FormatError, ShapeError
from .rng import rng_stream
from .tensor import branch_trunk_contract, meshgrid_points, outer_combine

VARIANTS = ("vanilla", "separable")
CHECKPOINT_VERSION = 1

DerivKey = tuple  # sorted axis indices, length 0, 1 or 2


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if min(self.widths) < 1:
            raise ValueError(f"all layer widths must be >= 1, got {self.widths}")

    @property
    def widths(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, self.output_dim]

    @property
    def param_count(self) -> int:
        w = self.widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))


@dataclass(frozen=True)
class DeepONetConfig:
    """Architecture of an unstacked DeepONet.

    The separable variant has ``d`` sub-trunks with scalar input, each emitting
    ``p * r * n_fields`` features; the vanilla trunk maps ``d`` coordinates to
    ``p * n_fields`` features.
    """

    variant: str
    d: int
    p: int
    n_sensors: int
    branch_hidden: tuple[int, ...]
    trunk_hidden: tuple[int, ...]
    r: int = 1
    n_fields: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "branch_hidden", tuple(int(h) for h in self.branch_hidden))
        object.__setattr__(self, "trunk_hidden", tuple(int(h) for h in self.trunk_hidden))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("d", "p", "n_sensors", "r", "n_fields"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.variant == "vanilla" and self.r != 1:
            raise ValueError("rank r only applies to the separable variant")

    @property
    def branch_spec(self) -> MLPSpec:
        return MLPSpec(self.n_sensors, self.branch_hidden, self.p)

    @property
    def trunk_specs(self) -> list[MLPSpec]:
        if self.variant == "vanilla":
            return [MLPSpec(self.d, self.trunk_hidden, self.p * self.n_fields)]
        return [MLPSpec(1, self.trunk_hidden, self.p * self.r * self.n_fields) for _ in range(self.d)]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["branch_hidden"] = list(self.branch_hidden)
        out["trunk_hidden"] = list(self.trunk_hidden)
        return out


def count_params(config: DeepONetConfig) -> int:
    """Trainable parameters: branch, every trunk, and one output bias per field."""
    return (
        config.branch_spec.param_count
        + sum(s.param_count for s in config.trunk_specs)
        + config.n_fields
    )


@dataclass
class PassCounter:
    """Tally of MLP forward passes (one per input row)."""

    branch: int = 0
    trunk: int = 0

    @property
    def total(self) -> int:
        return self.branch + self.trunk


@dataclass
class DeepONetModel:
    config: DeepONetConfig
    params: dict = field(default_factory=dict)

    def with_params(self, params: dict) -> "DeepONetModel":
        return replace(self, params=params)

    def layers(self, prefix: str) -> list[tuple]:
        out = []
        i = 0
        while f"{prefix}.{i}.W" in self.params:
            out.append((self.params[f"{prefix}.{i}.W"], self.params[f"{prefix}.{i}.b"]))
            i += 1
        return out

    @property
    def trunk_prefixes(self) -> list[str]:
        return [f"trunk{j}" for j in range(len(self.config.trunk_specs))]

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=np.float64).reshape(-1) for v in self.params.values()])

    def param_count(self) -> int:
        return int(sum(np.size(ops.value_of(v)) for v in self.params.values()))


def _param_layout(config: DeepONetConfig) -> list[tuple[str, tuple]]:
    layout = []
    nets = [("branch", config.branch_spec)] + [
        (f"trunk{j}", s) for j, s in enumerate(config.trunk_specs)
    ]
    for prefix, spec in nets:
        w = spec.widths
        for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
            layout.append((f"{prefix}.{i}.W", (a, b)))
            layout.append((f"{prefix}.{i}.b", (b,)))
    layout.append(("bias", (config.n_fields,)))
    return layout


def init_params(config: DeepONetConfig, seed: int) -> DeepONetModel:
    """Glorot-uniform weights, zero biases, zero output biases."""
    rng = rng_stream(seed, "init")
    params = {}
    for name, shape in _param_layout(config):
        if name.endswith(".W"):
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    return DeepONetModel(config, params)


def mlp_forward(layers: Sequence[tuple], x):
    """``W_L tanh(... tanh(x W_1 + b_1) ...) + b_L`` with a linear output layer.

    ``x`` may be an array, a tape variable or a :class:`HyperDual`.
    """
    if not layers:
        raise ValueError("empty network")
    in_dim = np.shape(ops.value_of(layers[0][0]))[0]
    xs = x.shape if isinstance(x, HyperDual) else np.shape(ops.value_of(x))
    if len(xs) != 2 or xs[1] != in_dim:
        raise ShapeError(f"expected input [batch, {in_dim}], got {xs}")
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = h @ W
        if isinstance(h, HyperDual):
            h = HyperDual(ops.add(h.v, b), h.d1, h.d2, h.d12)
        else:
            h = ops.add(h, b)
        if i < last:
            h = hd_tanh(h)
    return h


def branch_forward(model: DeepONetModel, branch_in, counter: PassCounter | None = None):
    cfg = model.config
    u = branch_in
    shape = np.shape(ops.value_of(u))
    if len(shape) != 2 or shape[1] != cfg.n_sensors:
        raise ShapeError(f"branch input must be [N, {cfg.n_sensors}], got {shape}")
    if counter is not None:
        counter.branch += shape[0]
    return mlp_forward(model.layers("branch"), u)


def _field_bias(model: DeepONetModel, f: int):
    return ops.getitem(model.params["bias"], f)


# -- separable -----------------------------------------------------------------


def _axis_orders(d: int, keys: Sequence[DerivKey]) -> list[int]:
    orders = [0] * d
    for key in keys:
        for a in set(key):
            orders[a] = max(orders[a], key.count(a))
    return orders


def _subtrunk_jet(model: DeepONetModel, j: int, axis, order: int, counter: PassCounter | None):
    """Sub-trunk ``j`` on one coordinate axis with forward-mode derivatives up to ``order``.

    Returns a list ``[f, f', f'']`` truncated to ``order + 1`` entries, each
    reshaped to ``[n, p, r, F]``.
    """
    cfg = model.config
    x = np.asarray(axis, dtype=np.float64).reshape(-1, 1)
    n = x.shape[0]
    layers = model.layers(f"trunk{j}")
    if counter is not None:
        counter.trunk += n
    shape = (n, cfg.p, cfg.r, cfg.n_fields)
    if order == 0:
        return [ops.reshape(mlp_forward(layers, x), shape)]
    one = np.ones_like(x)
    seed = HyperDual(x, one, one if order == 2 else None)
    out = mlp_forward(layers, seed)
    jet = [out.v, out.d1] + ([out.d12] if order == 2 else [])
    return [ops.reshape(c, shape) if c is not None else np.zeros(shape) for c in jet]


def trunk_forward_separable(model: DeepONetModel, axes: Sequence, counter: PassCounter | None = None):
    """Trunk lattice features ``[n_1, ..., n_d, p]``, one array per output field."""
    cfg = model.config
    if cfg.variant != "separable":
        raise ValueError("model is not separable")
    if len(axes) != cfg.d:
        raise ShapeError(f"expected {cfg.d} coordinate axes, got {len(axes)}")
    feats = [_subtrunk_jet(model, j, ax, 0, counter)[0] for j, ax in enumerate(axes)]
    return [outer_combine([ops.getitem(f, (Ellipsis, k)) for f in feats]) for k in range(cfg.n_fields)]


# -- vanilla -------------------------------------------------------------------


def trunk_forward_vanilla(model: DeepONetModel, points, counter: PassCounter | None = None):
    """Trunk features ``[M, p]`` per output field, one MLP pass per point."""
    cfg = model.config
    if cfg.variant != "vanilla":
        raise ValueError("model is not vanilla")
    shape = points.shape if isinstance(points, HyperDual) else np.shape(ops.value_of(points))
    if len(shape) != 2 or shape[1] != cfg.d:
        raise ShapeError(f"points must be [M, {cfg.d}], got {shape}")
    if counter is not None:
        counter.trunk += shape[0]
    out = mlp_forward(model.layers("trunk0"), points)
    p = cfg.p
    if isinstance(out, HyperDual):
        return [out[:, k * p : (k + 1) * p] for k in range(cfg.n_fields)]
    return [ops.getitem(out, (slice(None), slice(k * p, (k + 1) * p))) for k in range(cfg.n_fields)]


def plan_seeds(keys: Sequence[DerivKey]) -> tuple[list[tuple], dict]:
    """Group derivative requests into hyper-dual passes.

    Returns ``(seeds, where)`` where ``seeds[i] = (axis1, axis2)`` (either may
    be ``None``) and ``where[key] = (pass index, component name)``.
    """
    seeds: list[tuple] = []
    where: dict = {}
    for key in sorted({tuple(sorted(k)) for k in keys}, key=len, reverse=True):
        if key in where:
            continue
        if len(key) == 2:
            seeds.append((key[0], key[1]))
            i = len(seeds) - 1
            where[key] = (i, "d12")
            where.setdefault((key[0],), (i, "d1"))
            where.setdefault((key[1],), (i, "d2"))
        elif len(key) == 1:
            seeds.append((key[0], None))
            i = len(seeds) - 1
            where[key] = (i, "d1")
        elif len(key) == 0:
            if where:
                continue
            seeds.append((None, None))
            where[key] = (len(seeds) - 1, "v")
            continue
        else:
            raise ValueError(f"derivative order above two requested: {key}")
        where.setdefault((), (i, "v"))
    return seeds, where


def seeded_points(points: np.ndarray, seed: tuple):
    a, b = seed
    if a is None:
        return points
    e1 = np.zeros_like(points)
    e1[:, a] = 1.0
    if b == a:
        return HyperDual(points, e1, e1)
    e2 = None
    if b is not None:
        e2 = np.zeros_like(points)
        e2[:, b] = 1.0
    return HyperDual(points, e1, e2)


def _component(out, name: str):
    if not isinstance(out, HyperDual):
        return out if name == "v" else None
    return getattr(out, name)


# -- evaluation entry points ---------------------------------------------------


def lattice_derivatives(
    model: DeepONetModel,
    branch_in,
    axes: Sequence,
    keys: Sequence[DerivKey],
    counter: PassCounter | None = None,
) -> list[dict]:
    """Solution and coordinate derivatives on the lattice spanned by ``axes``.

    Each returned dict (one per output field) maps a derivative key to an
    array ``[N, n_1, ..., n_d]``. Keys are sorted tuples of axis indices:
    ``()`` value, ``(a,)`` first derivative, ``(a, b)`` second derivative.
    """
    cfg = model.config
    if len(axes) != cfg.d:
        raise ShapeError(f"expected {cfg.d} coordinate axes, got {len(axes)}")
    keys = [tuple(sorted(k)) for k in keys]
    branch = branch_forward(model, branch_in, counter)
    out = [dict() for _ in range(cfg.n_fields)]
    if cfg.variant == "separable":
        orders = _axis_orders(cfg.d, keys)
        jets = [_subtrunk_jet(model, j, ax, orders[j], counter) for j, ax in enumerate(axes)]
        for key in keys:
            counts = [key.count(j) for j in range(cfg.d)]
            for f in range(cfg.n_fields):
                parts = [ops.getitem(jets[j][counts[j]], (Ellipsis, f)) for j in range(cfg.d)]
                bias = _field_bias(model, f) if key == () else 0.0
                out[f][key] = branch_trunk_contract(branch, outer_combine(parts), bias)
        return out
    points = meshgrid_points(axes)
    lattice = tuple(len(np.atleast_1d(a)) for a in axes)
    seeds, where = plan_seeds(keys)
    feats = [trunk_forward_vanilla(model, seeded_points(points, s), counter) for s in seeds]
    for key in keys:
        i, comp = where[key]
        for f in range(cfg.n_fields):
            tr = _component(feats[i][f], comp)
            if tr is None:
                out[f][key] = np.zeros((np.shape(ops.value_of(branch))[0],) + lattice)
                continue
            tr = ops.reshape(tr, lattice + (cfg.p,))
            bias = _field_bias(model, f) if key == () else 0.0
            out[f][key] = branch_trunk_contract(branch, tr, bias)
    return out


def pair_derivatives(
    model: DeepONetModel,
    branch_rows,
    points: np.ndarray,
    keys: Sequence[DerivKey],
    counter: PassCounter | None = None,
) -> list[dict]:
    """Vanilla evaluation on explicit (function, point) pairs.

    Row ``i`` pairs ``branch_rows[i]`` with ``points[i]``; both networks run
    once per pair. Values are arrays of shape ``[P]``.
    """
    cfg = model.config
    if cfg.variant != "vanilla":
        raise ValueError("pair evaluation is defined for the vanilla variant only")
    keys = [tuple(sorted(k)) for k in keys]
    branch = branch_forward(model, branch_rows, counter)
    seeds, where = plan_seeds(keys)
    feats = [trunk_forward_vanilla(model, seeded_points(points, s), counter) for s in seeds]
    out = [dict() for _ in range(cfg.n_fields)]
    for key in keys:
        i, comp = where[key]
        for f in range(cfg.n_fields):
            tr = _component(feats[i][f], comp)
            if tr is None:
                out[f][key] = np.zeros(points.shape[0])
                continue
            val = ops.sum_(ops.multiply(branch, tr), axis=1)
            if key == ():
                val = ops.add(val, _field_bias(model, f))
            out[f][key] = val
    return out


def deeponet_eval(model: DeepONetModel, branch_in, coords, counter: PassCounter | None = None):
    """Per-field solution arrays.

    Separable: ``coords`` is a list of ``d`` axes, output ``[N, n_1, ..., n_d]``.
    Vanilla: ``coords`` is a point array ``[M, d]``, output ``[N, M]``.
    """
    cfg = model.config
    branch = branch_forward(model, branch_in, counter)
    if cfg.variant == "separable":
        trunks = trunk_forward_separable(model, coords, counter)
    else:
        trunks = trunk_forward_vanilla(model, np.asarray(coords, dtype=np.float64), counter)
    return [branch_trunk_contract(branch, tr, _field_bias(model, f)) for f, tr in enumerate(trunks)]


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(model: DeepONetModel, path, *, seed: int | None = None, step: int = 0) -> Path:
    """Write ``manifest.json`` and ``params.f64`` (little-endian, branch then trunks)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = {k: np.asarray(ops.value_of(v), dtype=np.float64) for k, v in model.params.items()}
    blob = b"".join(v.astype("<f8").tobytes() for v in params.values())
    (path / "params.f64").write_bytes(blob)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "seed": seed,
        "step": int(step),
        "tensors": [[k, list(v.shape)] for k, v in params.items()],
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return path


def load_checkpoint(path) -> tuple[DeepONetModel, dict]:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {manifest.get('version')}")
    blob = (path / "params.f64").read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise CorruptionError(f"checkpoint blob checksum mismatch in {path}")
    config = DeepONetConfig(**manifest["config"])
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    expected = _param_layout(config)
    if [[k, list(s)] for k, s in expected] != manifest["tensors"]:
        raise FormatError("checkpoint tensor layout does not match its config")
    params = {}
    offset = 0
    for name, shape in expected:
        n = int(np.prod(shape))
        params[name] = flat[offset : offset + n].reshape(shape).copy()
        offset += n
    if offset != flat.size:
        raise FormatError("checkpoint blob length does not match manifest")
    return DeepONetModel(config, params), manifest
