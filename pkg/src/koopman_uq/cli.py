"""Command-line front end: ``koopman-uq {fit,propagate,reach,benchmark,sample}``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 acceptance-threshold violation.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
from pathlib import Path
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import pipeline as pl
from .config import load_config
from .dynamics import Trajectory, builtin, sample_domain, simulate_batch, write_trajectories_csv
from .errors import ConfigError, DictionaryMismatch, KoopmanUQError, UnsupportedDictionary
from .operator import OperatorModel

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_THRESHOLD = 0, 2, 3, 4
U64_MAX = 2 ** 64 - 1

log = logging.getLogger("koopman_uq")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config JSON path or preset name (example1, example2a, ...)")
    common.add_argument("--seed", type=_seed, help="overrides the data seed; the MC seed becomes seed + 1")
    common.add_argument("--out", type=Path, help="output directory (default: the config's output_dir)")
    common.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="koopman-uq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit an operator and write operator.json")
    for name, text in (("propagate", "propagate moments and compare against Monte Carlo"),
                       ("reach", "reconstruct marginals and supports at the report times")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--operator", type=Path, help="operator file (default: <out>/operator.json)")
    sp = sub.add_parser("benchmark", parents=[common], help="run a bundled example end to end")
    sp.add_argument("example", choices=sorted(pl.BENCHMARKS))
    sp.add_argument("--repeats", type=int, help="timing repeats (default from the preset)")
    sub.add_parser("sample", parents=[common], help="simulate training trajectories to trajectories.csv")
    return p


def _load(args):
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, seed=args.seed),
                                  mc=dataclasses.replace(cfg.mc, seed=(args.seed + 1) % (U64_MAX + 1)))
    return cfg


def _out(args, cfg) -> Path:
    out = args.out if args.out is not None else Path(cfg.output_dir if cfg else "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _operator(args, out: Path) -> OperatorModel:
    path = args.operator or out / "operator.json"
    try:
        return OperatorModel.load(path)
    except OSError as exc:
        raise ConfigError(f"cannot read operator file {path}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed operator file {path}: {exc}") from None


def cmd_fit(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    model, pairs = pl.fit_operator(cfg)
    model.save(out / "operator.json")
    meta = model.meta
    print(f"K: {model.K.shape[0]}x{model.K.shape[1]}  pairs: {pairs.n_pairs}  "
          f"dropped trajectories: {meta['dropped']}")
    print(f"residual rms {model.residual:.3e}  p50 {meta['residual_p50']:.3e}  "
          f"p90 {meta['residual_p90']:.3e}  cond(G) {meta['condition_G']:.3e}")
    print(f"duality residual {model.duality_residual():.2e}  -> {out / 'operator.json'}")
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    model = _operator(args, out)
    res = pl.run_propagation(cfg, model)
    pl.write_propagation(out, res)
    r = res.report
    print(f"{r.example}: {len(res.estimated)} rows, max error {r.max_error:.4f}, "
          f"MC {r.mc_ms:.1f} ms, operator {r.op_ms:.2f} ms, speedup {r.speedup:.0f}x")
    return EXIT_OK


def cmd_reach(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    model = _operator(args, out)
    res = pl.run_reach(cfg, model)
    pl.write_reach(out, res)
    est = res.estimated_supports()
    for key, (lo, hi) in sorted(res.mc_supports.items()):
        elo, ehi = est[key]
        flag = "superset" if res.superset[key] else "NOT superset"
        print(f"t={key[0]:g} axis={key[1]}: estimated [{elo:.3f}, {ehi:.3f}]  "
              f"MC [{lo:.3f}, {hi:.3f}]  {flag}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    configs = None
    if args.config is not None or args.seed is not None:
        base = [args.config] if args.config is not None else pl.BENCHMARKS[args.example]
        configs = []
        for name in base:
            args.config = name
            configs.append(_load(args))
    out = args.out
    reports, passed = pl.benchmark(args.example, out, args.repeats, configs)
    if out is not None:
        with open(out / f"{args.example}_report.json", "w") as fh:
            json.dump(reports, fh, indent=1)
    json.dump(reports, sys.stdout, indent=1)
    print()
    for rep in reports:
        failed = [k for k, ok in rep["checks"].items() if not ok]
        print(f"{rep['example']}: {'PASS' if not failed else 'FAIL ' + ','.join(failed)}",
              file=sys.stderr)
    return EXIT_OK if passed else EXIT_THRESHOLD


def cmd_sample(args) -> int:
    cfg = _load(args)
    out = _out(args, cfg)
    system = builtin(cfg.system)
    pts = sample_domain(cfg.data_region(), cfg.data.n_traj, cfg.data.seed)
    states, ok = simulate_batch(system, pts, cfg.data.dt, cfg.data.horizon, cfg.data.substeps)
    trajs = [Trajectory(cfg.data.dt, states[:, i]) for i in np.flatnonzero(ok)]
    write_trajectories_csv(out / "trajectories.csv", trajs)
    steps = states.shape[0] - 1
    print(f"{len(trajs)} trajectories x {steps + 1} states ({len(trajs) * steps} pairs), "
          f"{int((~ok).sum())} dropped -> {out / 'trajectories.csv'}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "propagate": cmd_propagate, "reach": cmd_reach,
            "benchmark": cmd_benchmark, "sample": cmd_sample}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limit = threadpool_limits(args.threads) if args.threads else contextlib.nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except (ConfigError, DictionaryMismatch, UnsupportedDictionary) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KoopmanUQError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
