"""Run configuration: TOML or JSON files, plus the bundled presets.

A config has up to five tables: ``problem`` (``kind`` plus ProblemSpec
overrides), ``data``, ``model``, ``train`` and ``bench``.
"""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

import tomli

from .data import GPKernelSpec
from .errors import UsageError
from .model import VARIANTS, DeepONetConfig
from .physics import KINDS, ProblemSpec
from .train import TrainConfig

PRESET_DIR = Path(__file__).with_name("presets")


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))


def load_config(path_or_name) -> dict:
    """Read a TOML/JSON file, or a bundled preset by name."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in preset_names():
        path = PRESET_DIR / f"{path_or_name}.toml"
    if not path.exists():
        raise UsageError(f"config {path_or_name!s} not found (presets: {', '.join(preset_names())})")
    text = path.read_text()
    try:
        if path.suffix == ".json":
            cfg = json.loads(text)
        else:
            cfg = tomli.loads(text)
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a table")
    cfg.setdefault("_source", str(path))
    return cfg


def _table(cfg: dict, name: str) -> dict:
    t = cfg.get(name, {})
    if not isinstance(t, dict):
        raise UsageError(f"[{name}] must be a table")
    return t


def _only_known(table: dict, allowed, where: str) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise UsageError(f"unknown field(s) in [{where}]: {', '.join(extra)}")


def problem_from(cfg: dict) -> ProblemSpec:
    t = dict(_table(cfg, "problem"))
    if "kind" not in t:
        raise UsageError("missing required field `kind` in [problem]")
    kind = t.pop("kind")
    if kind not in KINDS:
        raise UsageError(f"`kind` must be one of {KINDS}, got {kind!r}")
    _only_known(t, [f.name for f in fields(ProblemSpec)], "problem")
    try:
        return getattr(ProblemSpec, kind)(**t)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[problem]: {exc}") from exc


def model_from(cfg: dict, problem: ProblemSpec) -> DeepONetConfig:
    t = dict(_table(cfg, "model"))
    variant = t.get("variant", "separable")
    if variant not in VARIANTS:
        raise UsageError(f"`variant` must be one of {VARIANTS}, got {variant!r}")
    allowed = ("variant", "p", "r", "branch_hidden", "trunk_hidden")
    _only_known(t, allowed, "model")
    for key in ("p", "branch_hidden", "trunk_hidden"):
        if key not in t:
            raise UsageError(f"missing required field `{key}` in [model]")
    try:
        return DeepONetConfig(
            variant=variant, d=problem.d, p=int(t["p"]), n_sensors=problem.n_sensors,
            branch_hidden=t["branch_hidden"], trunk_hidden=t["trunk_hidden"],
            r=int(t.get("r", 1)) if variant == "separable" else 1, n_fields=problem.n_fields,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[model]: {exc}") from exc


def train_from(cfg: dict, seed: int | None = None) -> TrainConfig:
    t = dict(_table(cfg, "train"))
    _only_known(t, [f.name for f in fields(TrainConfig)], "train")
    if seed is not None:
        t["seed"] = seed
    try:
        return TrainConfig(**t)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[train]: {exc}") from exc


def data_from(cfg: dict, seed: int | None = None) -> dict:
    t = dict(_table(cfg, "data"))
    _only_known(t, ("n_train", "n_test", "seed", "path", "kernel", "T0_range"), "data")
    for key in ("n_train", "n_test"):
        if key not in t:
            raise UsageError(f"missing required field `{key}` in [data]")
    if seed is not None:
        t["seed"] = seed
    t.setdefault("seed", 0)
    kernel = t.get("kernel")
    if kernel is not None:
        try:
            t["kernel"] = GPKernelSpec(**kernel)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"[data.kernel]: {exc}") from exc
    return t


def bench_from(cfg: dict) -> dict:
    t = dict(_table(cfg, "bench"))
    allowed = ("n_list", "variants", "iters", "warmup", "n_functions", "width", "depth", "p", "r", "pair_chunk")
    _only_known(t, allowed, "bench")
    for v in t.get("variants", []):
        if v not in VARIANTS:
            raise UsageError(f"unknown variant {v!r} in [bench]; choose from {VARIANTS}")
    return t
