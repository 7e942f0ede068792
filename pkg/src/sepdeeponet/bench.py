"""Cost accounting and timing sweeps for the two DeepONet variants."""

from __future__ import annotations

import csv
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, GPKernelSpec, sample_gp_periodic_spectral, sampling_plan
from .model import VARIANTS, DeepONetConfig, init_params
from .physics import ProblemSpec
from .train import TrainConfig, Trainer

SWEEP_COLUMNS = ("n", "variant", "ms_per_iter", "passes", "jacobian_rows", "jacobian_cols")


def _paired_axis(role: str, axes: Sequence) -> int | None:
    """Boundary lattices with a two-point edge axis describe one condition per pair.

    The periodic Burgers condition compares ``x=0`` with ``x=1`` at the same
    ``t``; a pointwise (vanilla) network needs one evaluation per condition
    point in the published accounting, so the pair axis does not multiply.
    """
    if not role.startswith("bc"):
        return None
    for j, a in enumerate(axes):
        if len(a) == 2:
            return j
    return None


def count_passes(plan: dict, variant: str, n_functions: int) -> dict:
    """Forward passes needed to evaluate every loss term once.

    separable: ``N`` branch passes; per term, one sub-trunk pass per point of
    each axis (``sum_j n_j``). vanilla: branch and trunk both run once per
    (function, point) pair, ``N * prod_j n_j`` per term, with the pair axis of
    a boundary condition counted once. ``total`` counts trunk passes plus, for
    the separable variant, the ``N`` shared branch passes.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    by_term = {}
    for role, axes in plan.items():
        sizes = [len(a) for a in axes]
        if variant == "separable":
            by_term[role] = int(sum(sizes))
        else:
            skip = _paired_axis(role, axes)
            by_term[role] = int(n_functions * np.prod([s for j, s in enumerate(sizes) if j != skip], dtype=np.int64))
    trunk = sum(by_term.values())
    branch = n_functions if variant == "separable" else trunk
    total = branch + trunk if variant == "separable" else trunk
    return {"branch_passes": branch, "trunk_passes_by_term": by_term, "total": total}


def jacobian_dims(axes: Sequence, variant: str) -> tuple[int, int]:
    """Size of the trunk Jacobian over a lattice: ``(sum n_j, prod n_j)`` or ``(prod, prod)``."""
    sizes = [len(a) if hasattr(a, "__len__") else int(a) for a in axes]
    cols = int(np.prod(sizes, dtype=np.int64))
    if variant == "separable":
        return int(sum(sizes)), cols
    if variant == "vanilla":
        return cols, cols
    raise ValueError(f"unknown variant {variant!r}")


def growth_exponent(ns: Sequence[float], ms: Sequence[float]) -> float:
    """Least-squares slope of ``log ms`` against ``log n``."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(ms, float)), 1)[0])


def time_steps(trainer: Trainer, iters: int, warmup: int) -> list[float]:
    """Wall milliseconds of ``iters`` optimisation steps after ``warmup`` untimed ones."""
    for i in range(warmup):
        trainer.step(i)
    out = []
    for i in range(iters):
        t0 = time.perf_counter()
        trainer.step(warmup + i)
        out.append(1e3 * (time.perf_counter() - t0))
    return out


def _model_config(variant: str, problem: ProblemSpec, width: int, depth: int, p: int, r: int) -> DeepONetConfig:
    return DeepONetConfig(
        variant=variant, d=problem.d, p=p, n_sensors=problem.n_sensors,
        branch_hidden=[width] * depth, trunk_hidden=[width] * depth,
        r=r if variant == "separable" else 1, n_fields=problem.n_fields,
    )


def scaling_sweep(
    problem: ProblemSpec,
    n_list: Sequence[int],
    variant_list: Sequence[str],
    iters: int = 5,
    warmup: int = 10,
    n_functions: int = 20,
    width: int = 50,
    depth: int = 6,
    p: int = 20,
    r: int = 20,
    seed: int = 0,
    pair_chunk: int = 20_000,
) -> list[dict]:
    """Median ms per optimisation step with ``n`` points along every axis.

    Each variant is initialised from the same seed at every ``n``. Vanilla
    steps use all pairs (no mini-batching), so both variants see identical
    loss terms.
    """
    for v in variant_list:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    if problem.kind != "burgers":
        raise ValueError("the scaling sweep is defined on the Burgers problem")
    u = sample_gp_periodic_spectral(GPKernelSpec(), problem.n_sensors, n_functions, seed)
    ds = Dataset("burgers", {"u_train": u}, seed)
    rows = []
    for variant in variant_list:
        for n in n_list:
            prob = replace(problem, residual_points=(n, n), bc_points=n, ic_points=n)
            plan = sampling_plan(prob, seed)
            model = init_params(_model_config(variant, prob, width, depth, p, r), seed)
            trainer = Trainer(prob, model, ds, TrainConfig(epochs=iters + warmup, seed=seed, pair_chunk=pair_chunk), plan)
            ms = time_steps(trainer, iters, warmup)
            jr, jc = jacobian_dims(plan["residual"], variant)
            rows.append({
                "n": n, "variant": variant, "ms_per_iter": float(np.median(ms)),
                "passes": count_passes(plan, variant, n_functions)["total"],
                "jacobian_rows": jr, "jacobian_cols": jc,
            })
    return rows


def write_sweep_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in SWEEP_COLUMNS})
    return path


def sweep_exponents(rows: list[dict]) -> dict[str, float]:
    out = {}
    for v in sorted({r["variant"] for r in rows}):
        sel = sorted((r["n"], r["ms_per_iter"]) for r in rows if r["variant"] == v)
        if len(sel) >= 2:
            out[v] = growth_exponent([s[0] for s in sel], [s[1] for s in sel])
    return out
