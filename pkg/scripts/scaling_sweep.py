"""Per-step time against points per axis, plus the full-size Burgers step comparison.

    python scripts/scaling_sweep.py [--n 10 20 40 80] [--out runs/bench] [--skip-full]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from sepdeeponet import init_params
from sepdeeponet.bench import scaling_sweep, sweep_exponents, time_steps, write_sweep_csv
from sepdeeponet.config import load_config, model_from, problem_from, train_from
from sepdeeponet.data import Dataset, GPKernelSpec, sample_gp_periodic_spectral
from sepdeeponet.physics import ProblemSpec
from sepdeeponet.train import Trainer


def full_step_ms(preset: str, u: np.ndarray, iters: int) -> float:
    cfg = load_config(preset)
    problem = problem_from(cfg)
    tcfg = train_from(cfg)
    tcfg.epochs = iters + 1
    trainer = Trainer(problem, init_params(model_from(cfg, problem), 0), Dataset("burgers", {"u_train": u}, 0), tcfg)
    return float(np.median(time_steps(trainer, iters, 1)))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[10, 20, 40, 80])
    ap.add_argument("--iters", type=int, default=5)
    ap.add_argument("--warmup", type=int, default=10)
    ap.add_argument("--out", type=Path, default=Path("runs/bench"))
    ap.add_argument("--skip-full", action="store_true", help="only run the small sweep")
    args = ap.parse_args()

    rows = scaling_sweep(ProblemSpec.burgers(), args.n, ["separable", "vanilla"], iters=args.iters, warmup=args.warmup)
    path = write_sweep_csv(rows, args.out / "scaling.csv")
    for r in rows:
        print(f"n={r['n']:4d} {r['variant']:9s} {r['ms_per_iter']:10.2f} ms/iter")
    for v, e in sweep_exponents(rows).items():
        print(f"growth exponent {v}: {e:.2f}")
    print(f"wrote {path}")
    if args.skip_full:
        return
    u = sample_gp_periodic_spectral(GPKernelSpec(), 101, 1000, seed=7)
    sep = full_step_ms("burgers_paper", u, 3)
    van = full_step_ms("burgers_paper_vanilla", u, 3)
    print(f"full-size Burgers step: separable {sep:.0f} ms, vanilla {van:.0f} ms, ratio {van / sep:.1f}")


if __name__ == "__main__":
    main()
