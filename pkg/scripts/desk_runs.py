"""Train the three desk-scale presets and print error, wall time and loss drop.

    python scripts/desk_runs.py [burgers_desk heat_desk biot_desk] [--out runs]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from sepdeeponet import init_params
from sepdeeponet.config import data_from, load_config, model_from, problem_from, train_from
from sepdeeponet.data import generate_dataset
from sepdeeponet.train import train


def run(preset: str, out: Path | None) -> dict:
    cfg = load_config(preset)
    problem = problem_from(cfg)
    mcfg, tcfg, d = model_from(cfg, problem), train_from(cfg), data_from(cfg)
    t0 = time.perf_counter()
    kwargs = {"kernel": d["kernel"]} if "kernel" in d else {}
    ds = generate_dataset(problem, d["n_train"], d["n_test"], d["seed"], **kwargs)
    _, rep = train(problem, init_params(mcfg, tcfg.seed), ds, tcfg, out_dir=out / preset if out else None)
    losses = np.array([h["loss_total"] for h in rep.history])
    tenth = max(1, len(losses) // 10)
    return {
        "preset": preset,
        "rel_l2": rep.aggregate,
        "per_sample_mean": rep.per_sample_mean,
        "seconds": time.perf_counter() - t0,
        "median_ms_per_iter": float(np.median(rep.ms_per_iter)) if rep.ms_per_iter else None,
        "loss_drop": float(np.median(losses[:tenth]) / np.median(losses[-tenth:])) if len(losses) else None,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", default=["burgers_desk", "heat_desk", "biot_desk"])
    ap.add_argument("--out", type=Path, default=None, help="write metrics and checkpoints per preset")
    args = ap.parse_args()
    for preset in args.presets:
        print(json.dumps(run(preset, args.out)))


if __name__ == "__main__":
    main()
