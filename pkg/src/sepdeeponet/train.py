"""Adam with staircase learning-rate decay, the training loop and test evaluation."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import value_and_grad
from .data import Dataset, sampling_plan
from .errors import NumericError, ShapeError, UsageError
from .model import DeepONetModel, PassCounter, deeponet_eval, save_checkpoint
from .oracles import relative_l2
from .physics import CATEGORIES, ModelField, ProblemSpec, assemble, problem_terms, term_value
from .rng import rng_stream
from .tensor import meshgrid_points

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "lr", "loss_total", "loss_physics", "loss_ic", "loss_bc", "test_rel_l2", "ms_per_iter")


@dataclass
class TrainConfig:
    """Optimisation settings.

    ``batch_pairs`` (vanilla only) is the number of (function, point) pairs
    drawn per loss term and step; ``None`` means every pair every step.
    ``pair_chunk`` bounds the pairs recorded on one tape, with gradients
    accumulated across chunks. Cadences of 0 mean "only at the end".
    """

    epochs: int = 1000
    lr0: float = 1e-3
    decay_rate: float = 0.95
    decay_every: int = 1000
    seed: int = 0
    weights: dict | None = None
    batch_pairs: int | None = None
    pair_chunk: int = 20_000
    eval_every: int = 0
    checkpoint_every: int = 0
    log_every: int = 0
    eval_batch: int = 100

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must lie in (0, 1]")
        if self.decay_every < 1 or self.lr0 <= 0:
            raise ValueError("decay_every must be >= 1 and lr0 > 0")
        if self.batch_pairs is not None and self.batch_pairs < 1:
            raise ValueError("batch_pairs must be positive")
        if self.pair_chunk < 1:
            raise ValueError("pair_chunk must be positive")


@dataclass
class OptState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: dict) -> "OptState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class EvalReport:
    """Test errors plus the training record.

    ``aggregate`` is the relative L2 of all test predictions concatenated
    (equivalently a norm-weighted root mean of per-sample errors);
    ``per_sample_mean`` is the plain mean of ``per_sample``.
    """

    per_sample: np.ndarray
    aggregate: float
    per_sample_mean: float
    fields: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    ms_per_iter: list = field(default_factory=list)
    passes: dict = field(default_factory=dict)
    wall_time: float = 0.0


def lr_at(config: TrainConfig, step: int) -> float:
    if step < 0:
        raise ValueError("step must be >= 0")
    return config.lr0 * config.decay_rate ** (step // config.decay_every)


def adam_step(params: dict, grads: dict, state: OptState, lr: float) -> tuple[dict, OptState]:
    """Bias-corrected Adam; returns new dicts and leaves the inputs untouched."""
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"gradient for {name} has shape {np.shape(g)}, parameter {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, OptState(new_m, new_v, t, b1, b2, state.eps)


# -- evaluation --------------------------------------------------------------------


def _eval_lattice(model: DeepONetModel, branch, axes) -> list[np.ndarray]:
    if model.config.variant == "separable":
        return deeponet_eval(model, branch, axes)
    shape = (branch.shape[0],) + tuple(len(a) for a in axes)
    return [o.reshape(shape) for o in deeponet_eval(model, branch, meshgrid_points(axes))]


def predict_test(model: DeepONetModel, dataset: Dataset, batch: int = 100) -> dict[str, np.ndarray]:
    """Model predictions aligned with the dataset's reference arrays."""
    axes = [dataset[f"test_axis{i}"] for i in range(3 if dataset.kind == "heat" else 2)]
    branch = dataset.branch_test
    if dataset.kind == "heat":
        alpha = dataset["alpha_test"]
        out = [
            _eval_lattice(model, branch[i : i + 1], axes + [np.sqrt(alpha[i : i + 1])])[0][0, ..., 0]
            for i in range(len(alpha))
        ]
        return {"T": np.stack(out) if out else np.zeros((0,) + tuple(len(a) for a in axes))}
    chunks = [_eval_lattice(model, branch[i : i + batch], axes) for i in range(0, len(branch), batch)]
    if dataset.kind == "burgers":
        return {"s": np.concatenate([c[0] for c in chunks])}
    return {"u": np.concatenate([c[0] for c in chunks]), "p": np.concatenate([c[1] for c in chunks])}


def _references(dataset: Dataset) -> dict[str, np.ndarray]:
    if dataset.kind == "burgers":
        return {"s": dataset["s_test"]}
    if dataset.kind == "biot":
        return {"u": dataset["u_test"], "p": dataset["p_test"]}
    return {"T": dataset["T_test"]}


def evaluate(model: DeepONetModel, dataset: Dataset, problem: ProblemSpec | None = None, batch: int = 100) -> EvalReport:
    """Relative L2 on the test lattice, per sample and over everything at once.

    Multi-field problems concatenate the fields per sample.
    """
    pred = predict_test(model, dataset, batch)
    ref = _references(dataset)
    names = list(ref)
    n = ref[names[0]].shape[0]
    P = np.concatenate([pred[k].reshape(n, -1) for k in names], axis=1)
    R = np.concatenate([ref[k].reshape(n, -1) for k in names], axis=1)
    if P.shape != R.shape:
        raise ShapeError(f"prediction {P.shape} vs reference {R.shape}")
    per = np.array([relative_l2(P[i], R[i]) for i in range(n)])
    fields = {k: relative_l2(pred[k], ref[k]) for k in names}
    return EvalReport(per, relative_l2(P, R), float(per.mean()), fields)


# -- training --------------------------------------------------------------------


class _PairSampler:
    """Without-replacement cycling over the (function, point) pairs of each term."""

    def __init__(self, sizes: list[int], batch: int | None, seed: int) -> None:
        self.sizes = sizes
        self.batch = batch
        self.rng = rng_stream(seed, "pairs")
        self.perm = [None] * len(sizes)
        self.cursor = [0] * len(sizes)

    def draw(self, i: int) -> np.ndarray:
        size = self.sizes[i]
        if self.batch is None or self.batch >= size:
            return np.arange(size)
        out = []
        need = self.batch
        while need:
            if self.perm[i] is None or self.cursor[i] >= size:
                self.perm[i] = self.rng.permutation(size)
                self.cursor[i] = 0
            take = min(need, size - self.cursor[i])
            out.append(self.perm[i][self.cursor[i] : self.cursor[i] + take])
            self.cursor[i] += take
            need -= take
        return np.concatenate(out)


class Trainer:
    """One optimisation step at a time; :func:`train` drives it."""

    def __init__(self, problem: ProblemSpec, model: DeepONetModel, dataset: Dataset, config: TrainConfig, plan=None):
        if dataset.kind != problem.kind:
            raise UsageError(f"dataset holds {dataset.kind!r} data but the problem is {problem.kind!r}")
        if model.config.n_sensors != dataset.branch_train.shape[1]:
            raise UsageError(
                f"model expects {model.config.n_sensors} sensors, dataset has {dataset.branch_train.shape[1]}"
            )
        self.problem = problem
        self.model = model
        self.dataset = dataset
        self.config = config
        self.plan = plan if plan is not None else sampling_plan(problem, config.seed)
        self.branch = dataset.branch_train
        self.terms = problem_terms(problem, self.branch, self.plan, dataset.extras())
        self.weights = dict(problem.weights)
        if config.weights:
            self.weights.update({k: float(v) for k, v in config.weights.items()})
        self.pair_mode = model.config.variant == "vanilla"
        n = self.branch.shape[0]
        self.sampler = _PairSampler([n * t.n_points for t in self.terms], config.batch_pairs, config.seed)
        self.params = {k: np.array(v, dtype=np.float64) for k, v in model.params.items()}
        self.state = OptState.zeros(self.params)
        self.counter = PassCounter()

    def _loss(self, params, counter=None):
        field = ModelField(self.model.with_params(params), counter)
        b = assemble(field, self.branch, self.terms, self.weights)
        return b.total, b

    def loss_and_grad(self, params=None) -> tuple[dict, dict]:
        """Loss breakdown (floats) and gradient for one step."""
        params = self.params if params is None else params
        if not self.pair_mode:
            _, grads, b = value_and_grad(lambda p: self._loss(p, self.counter), params, aux=True)
            return b.as_floats(), grads
        n_points = [t.n_points for t in self.terms]
        cats = {c: 0.0 for c in CATEGORIES}
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        for i, term in enumerate(self.terms):
            idx = self.sampler.draw(i)
            s, q = np.divmod(idx, n_points[i])
            w = self.weights[term.category]
            for lo in range(0, len(idx), self.config.pair_chunk):
                sel = (s[lo : lo + self.config.pair_chunk], q[lo : lo + self.config.pair_chunk], len(idx))

                def chunk_loss(p, term=term, sel=sel):
                    field = ModelField(self.model.with_params(p), self.counter)
                    v = term_value(field, self.branch, term, sel)
                    return v * w, v

                _, g, v = value_and_grad(chunk_loss, params, aux=True)
                cats[term.category] += float(np.asarray(getattr(v, "value", v)))
                for k in grads:
                    grads[k] += g[k]
        total = sum(self.weights[c] * cats[c] for c in CATEGORIES)
        return {"total": total, **cats}, grads

    def step(self, step: int) -> tuple[dict, float]:
        lr = lr_at(self.config, step)
        losses, grads = self.loss_and_grad()
        self.params, self.state = adam_step(self.params, grads, self.state, lr)
        return losses, lr

    @property
    def current_model(self) -> DeepONetModel:
        return self.model.with_params(self.params)


def _write_metrics(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r[k]) for k in METRIC_COLUMNS})


def train(
    problem: ProblemSpec,
    model: DeepONetModel,
    dataset: Dataset,
    config: TrainConfig,
    plan=None,
    out_dir=None,
) -> tuple[DeepONetModel, EvalReport]:
    """Run ``config.epochs`` optimisation steps; one step is one "epoch".

    Separable models see every function and lattice point each step. Vanilla
    models draw ``batch_pairs`` pairs per term without replacement (a fresh
    permutation once a term's pairs are used up). ``ms_per_iter`` times the
    gradient and update only, not evaluation or I/O. With ``out_dir``,
    ``metrics.csv`` and checkpoints are written there; on a numeric failure
    the last checkpoint is kept and the error re-raised.
    """
    trainer = Trainer(problem, model, dataset, config, plan)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history: list[dict] = []
    times: list[float] = []
    t_start = time.perf_counter()
    try:
        for step in range(config.epochs):
            t0 = time.perf_counter()
            losses, lr = trainer.step(step)
            ms = 1e3 * (time.perf_counter() - t0)
            times.append(ms)
            row = {
                "step": step, "lr": lr, "loss_total": losses["total"], "loss_physics": losses["physics"],
                "loss_ic": losses["ic"], "loss_bc": losses["bc"], "test_rel_l2": None, "ms_per_iter": ms,
            }
            done = step + 1
            if config.eval_every and done % config.eval_every == 0 and done < config.epochs:
                row["test_rel_l2"] = evaluate(trainer.current_model, dataset, problem, config.eval_batch).aggregate
            history.append(row)
            if config.log_every and done % config.log_every == 0:
                log.info("step %d loss %.4e (%.1f ms)", done, losses["total"], ms)
            if out is not None and config.checkpoint_every and done % config.checkpoint_every == 0:
                save_checkpoint(trainer.current_model, out / "checkpoint", seed=config.seed, step=done)
    finally:
        if out is not None:
            _write_metrics(out / "metrics.csv", history)
    final = trainer.current_model
    report = evaluate(final, dataset, problem, config.eval_batch)
    if history:
        history[-1]["test_rel_l2"] = report.aggregate
    report.history = history
    report.ms_per_iter = times
    report.passes = {"branch": trainer.counter.branch, "trunk": trainer.counter.trunk}
    report.wall_time = time.perf_counter() - t_start
    if out is not None:
        _write_metrics(out / "metrics.csv", history)
        save_checkpoint(final, out / "checkpoint", seed=config.seed, step=config.epochs)
        summary = {
            "final_rel_l2": report.aggregate,
            "final_rel_l2_per_sample_mean": report.per_sample_mean,
            "field_rel_l2": report.fields,
            "wall_time_s": report.wall_time,
            "median_ms_per_iter": float(np.median(times)) if times else None,
            "param_count": final.param_count(),
            "epochs": config.epochs,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return final, report
