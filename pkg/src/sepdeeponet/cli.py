"""Command-line front end: ``gen-data``, ``train`` and ``bench``.

Exit codes: 0 success, 2 usage, 3 numeric failure, 4 I/O or corrupt files.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bench
from .config import bench_from, data_from, load_config, model_from, preset_names, problem_from, train_from
from .data import dataset_checksums, generate_dataset, load_dataset, sampling_plan, save_dataset
from .errors import CorruptionError, FormatError, NumericError, UsageError
from .model import count_params, init_params
from .train import train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("sepdeeponet")


def _dataset_dir(cfg: dict, args, problem_kind: str) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    d = cfg.get("data", {})
    if "path" in d:
        return Path(d["path"])
    return Path("data") / problem_kind


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    problem = problem_from(cfg)
    d = data_from(cfg, args.seed)
    out = Path(args.out) if args.out else _dataset_dir(cfg, args, problem.kind)
    kwargs = {"kernel": d["kernel"]} if "kernel" in d else {}
    if "T0_range" in d:
        kwargs["T0_range"] = tuple(d["T0_range"])
    ds = generate_dataset(problem, int(d["n_train"]), int(d["n_test"]), int(d["seed"]), **kwargs)
    save_dataset(ds, out)
    print(f"wrote {problem.kind} dataset to {out}: {ds.n_train} train / {ds.n_test} test (seed {d['seed']})")
    for name, digest in sorted(dataset_checksums(out).items()):
        print(f"  {name:12s} {digest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    problem = problem_from(cfg)
    mcfg = model_from(cfg, problem)
    tcfg = train_from(cfg, args.seed)
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    path = _dataset_dir(cfg, args, problem.kind)
    if not (path / "manifest.json").exists():
        raise UsageError(f"no dataset at {path}; run `gen-data` first or pass --data")
    ds = load_dataset(path)
    if ds.kind != problem.kind:
        raise UsageError(f"dataset at {path} is {ds.kind!r}, config asks for {problem.kind!r}")
    out = Path(args.out) if args.out else Path("runs") / Path(str(args.config)).stem
    model = init_params(mcfg, tcfg.seed)
    print(f"{problem.kind} / {mcfg.variant}: {count_params(mcfg):,} parameters, {tcfg.epochs} epochs -> {out}")
    _, report = train(problem, model, ds, tcfg, sampling_plan(problem, tcfg.seed), out_dir=out)
    print(f"final test relative L2 {report.aggregate:.4e} (per-sample mean {report.per_sample_mean:.4e})")
    print(f"wall time {report.wall_time:.1f} s; summary in {out / 'summary.json'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    problem = problem_from(cfg)
    b = bench_from(cfg)
    n_funcs = int(cfg.get("data", {}).get("n_train", 1000))
    plan = sampling_plan(problem, 0)
    for variant in ("separable", "vanilla"):
        c = bench.count_passes(plan, variant, n_funcs)
        terms = " / ".join(f"{k} {v:,}" for k, v in c["trunk_passes_by_term"].items())
        print(f"{variant:9s} branch {c['branch_passes']:,}; trunk {terms}; total {c['total']:,}")
    sep = bench.count_passes(plan, "separable", n_funcs)["total"]
    van = bench.count_passes(plan, "vanilla", n_funcs)["total"]
    print(f"vanilla/separable pass ratio {van / sep:,.1f}")
    if args.counts_only:
        return EXIT_OK
    variants = b.get("variants", ["separable", "vanilla"])
    rows = bench.scaling_sweep(
        problem, b.get("n_list", [10, 20, 40, 80]), variants,
        iters=int(b.get("iters", 5)), warmup=int(b.get("warmup", 10)),
        n_functions=int(b.get("n_functions", 20)), width=int(b.get("width", 50)),
        depth=int(b.get("depth", 6)), p=int(b.get("p", 20)), r=int(b.get("r", 20)),
        seed=args.seed or 0, pair_chunk=int(b.get("pair_chunk", 20_000)),
    )
    out = Path(args.out) if args.out else Path("runs") / "bench"
    csv_path = bench.write_sweep_csv(rows, out / "scaling.csv")
    for r in rows:
        print(f"n={r['n']:4d} {r['variant']:9s} {r['ms_per_iter']:10.2f} ms/iter  passes {r['passes']:,}")
    for v, e in bench.sweep_exponents(rows).items():
        print(f"growth exponent {v}: {e:.2f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sepdeeponet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help=f"TOML/JSON file or preset ({', '.join(preset_names())})")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--deterministic", action="store_true", help="single-threaded BLAS for bit-exact reruns")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    g = sub.add_parser("gen-data", parents=[common], help="sample inputs and compute references")
    g.set_defaults(func=cmd_gen_data)
    t = sub.add_parser("train", parents=[common], help="train a model and write metrics")
    t.add_argument("--data", default=None, help="dataset directory (default from config)")
    t.add_argument("--epochs", type=int, default=None, help="overrides [train].epochs")
    t.set_defaults(func=cmd_train)
    b = sub.add_parser("bench", parents=[common], help="pass counts and timing sweep")
    b.add_argument("--counts-only", action="store_true", help="print pass counts and skip the sweep")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    limit = threadpool_limits(limits=1) if args.deterministic else contextlib.nullcontext()
    try:
        with limit:
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorruptionError, FormatError, OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
