"""Command-line entry point for running and sweeping fusion experiments.

Subcommands mirror the samplers (``fuse-bm``, ``fuse-ou``, ``cmc``,
``approx-ou``, ``direct``) plus ``sweep-t`` for horizon/cost tables and
``surrogate`` for standalone preliminary-run estimates.  Flags can also be
supplied through a JSON file via ``--config``; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .config import ExperimentConfig, read_config_file
from .experiments import (
    build_problem,
    preliminary_surrogate,
    run_experiment,
    sweep_T,
)

_RUN_COMMANDS = {
    "fuse-bm": "bm",
    "fuse-ou": "ou",
    "cmc": "cmc",
    "approx-ou": "approx_ou",
    "direct": "direct",
}


def _parse_values(text: str) -> Union[float, List[float]]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError(f"no numbers in {text!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r} as numbers") from None
    return values[0] if len(values) == 1 else values


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with config fields (flags win)")
    parser.add_argument("--target", choices=("quartic", "beta52", "gaussian"))
    parser.add_argument("--c", type=int, help="number of factors")
    parser.add_argument("--t", type=_parse_values, help="horizon T")
    parser.add_argument("--n", type=int, help="number of samples to draw")
    parser.add_argument("--seed", type=int, help="RNG seed (default 0)")
    parser.add_argument("--bandwidth", type=float, help="KDE bandwidth")
    parser.add_argument(
        "--mu-hat", type=_parse_values, help="surrogate centre (scalar or list)"
    )
    parser.add_argument(
        "--lambda-hat",
        type=_parse_values,
        help="surrogate precision (scalar or one per factor)",
    )
    parser.add_argument(
        "--n-pre", type=int, help="preliminary draws per factor (default 10000)"
    )
    parser.add_argument(
        "--reference", help="samples.csv to compare against (two-sample KS)"
    )
    parser.add_argument("--out", help="output directory (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfusion",
        description="Sample from a product of factor densities and report diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _RUN_COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} sampler")
        _add_shared_flags(p)
    p = sub.add_parser("sweep-t", help="cost table over a grid of horizons")
    _add_shared_flags(p)
    p.add_argument(
        "--algorithm",
        choices=("bm", "ou", "cmc", "approx_ou"),
        default="bm",
        help="sampler to sweep (default bm)",
    )
    p = sub.add_parser("surrogate", help="preliminary surrogate estimates")
    _add_shared_flags(p)
    return parser


def _config_kwargs(args: argparse.Namespace, algorithm: str) -> dict:
    kwargs = read_config_file(args.config) if args.config else {}
    overrides = {
        "target": args.target,
        "c": args.c,
        "horizon": args.t,
        "n": args.n,
        "seed": args.seed,
        "bandwidth": args.bandwidth,
        "mu_hat": args.mu_hat,
        "lambda_hat": args.lambda_hat,
        "n_pre": args.n_pre,
        "reference": args.reference,
        "output_dir": args.out,
    }
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    kwargs["algorithm"] = algorithm
    kwargs.setdefault("seed", 0)
    missing = [k for k in ("target", "n") if kwargs.get(k) is None]
    if missing:
        raise ValueError(
            f"missing required option(s): {', '.join('--' + k for k in missing)} "
            "(give them as flags or in --config)"
        )
    return kwargs


def _horizon_grid(kwargs: dict) -> List[float]:
    grid = kwargs.pop("horizon", None)
    if grid is None:
        raise ValueError("sweep-t needs --t with a comma-separated horizon grid")
    if isinstance(grid, (int, float)):
        grid = [float(grid)]
    return [float(t) for t in grid]


def _cmd_run(args: argparse.Namespace, algorithm: str) -> int:
    kwargs = _config_kwargs(args, algorithm)
    if isinstance(kwargs.get("horizon"), list):
        raise ValueError("give a single horizon --t for a sampling run")
    config = ExperimentConfig(**kwargs)
    result = run_experiment(config)
    diag = result.diagnostics
    print(f"wrote {result.paths['samples']}")
    print(f"wrote {result.paths['diagnostics']}")
    print(f"wrote {result.paths['summary']}")
    print(
        f"{algorithm}: n={config.n} stage1_rate={diag.stage1_rate:.4f} "
        f"stage2_rate={diag.stage2_rate:.4f} "
        f"wall={diag.wall_clock_seconds:.2f}s"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    kwargs = _config_kwargs(args, args.algorithm)
    grid = _horizon_grid(kwargs)
    out = Path(kwargs.pop("output_dir", ".") or ".")
    out_path = out if out.suffix == ".csv" else out / "sweep.csv"
    kwargs["horizon"] = grid[0]
    config = ExperimentConfig(**kwargs)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = sweep_T(config, grid, out_path=out_path)
    print(f"wrote {out_path}")
    for row in rows:
        print(
            f"T={row['T']:g}: {row['seconds_per_sample']:.6f} s/sample, "
            f"{row['attempts_per_accept']:.2f} attempts/sample"
        )
    return 0


def _cmd_surrogate(args: argparse.Namespace) -> int:
    kwargs = _config_kwargs(args, "ou")
    if isinstance(kwargs.get("horizon"), list):
        raise ValueError("give a single horizon --t (it does not affect the surrogate)")
    n_pre = int(kwargs.get("n", 10_000))
    config = ExperimentConfig(**{**kwargs, "n": 1, "n_pre": max(n_pre, 2)})
    problem = build_problem(config)
    rng = np.random.default_rng(config.seed)
    mus, lams = [], []
    for factor in problem.factors:
        mu_c, lam_c = preliminary_surrogate(factor, config.n_pre, rng)
        mus.append([float(v) for v in mu_c])
        lams.append([float(v) for v in lam_c])
    lam_arr = np.array(lams)
    mu_arr = np.array(mus)
    pooled_mu = (lam_arr * mu_arr).sum(axis=0) / lam_arr.sum(axis=0)
    obj = {
        "target": config.target,
        "c": config.c,
        "n_pre": config.n_pre,
        "seed": config.seed,
        "mu_hat": [float(v) for v in pooled_mu],
        "lambda_hat": lams,
        "per_factor_mu": mus,
    }
    text = json.dumps(obj, sort_keys=True, indent=2)
    out = kwargs.get("output_dir")
    if out and out != ".":
        path = Path(out)
        if path.suffix != ".json":
            path = path / "surrogate.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        print(f"wrote {path}")
    else:
        print(text)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in _RUN_COMMANDS:
            return _cmd_run(args, _RUN_COMMANDS[args.command])
        if args.command == "sweep-t":
            return _cmd_sweep(args)
        return _cmd_surrogate(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
