"""Experiment runner: sampling, surrogates, summaries, and file artifacts.

One experiment produces three files in the output directory:

* ``samples.csv`` — one row per draw (index, coordinates, and the
  back-transformed value for the logit-Beta target);
* ``diagnostics.json`` — run counters plus the resolved configuration;
* ``summary.json`` — moments, the KDE on its reporting grid, and a KS
  comparison against a reference sample when one is supplied.

All randomness flows through one generator seeded from the config, so
identical (config, seed) pairs give byte-identical samples and summaries;
only the wall-clock entry of diagnostics.json varies between runs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from ..baselines import approx_ou_with_diagnostics, cmc_with_diagnostics
from ..diagnostics import RunDiagnostics
from ..fusion_bm import fuse_bm
from ..fusion_ou import _as_lam_matrix, _as_mu, fuse_ou
from ..model import FusionProblem, SubPosterior, inverse_logit, logit_transform
from ..targets import beta_logit_problem, gaussian_problem, quartic_problem
from .config import ExperimentConfig
from .kde import kde, kde_grid

__all__ = [
    "ExperimentResult",
    "build_problem",
    "preliminary_surrogate",
    "resolve_surrogate",
    "run_experiment",
    "sweep_T",
]

_BETA_A, _BETA_B = 5.0, 2.0


# ---------------------------------------------------------------------------
# problems and reference samplers


def build_problem(config: ExperimentConfig) -> FusionProblem:
    if config.target == "quartic":
        return quartic_problem(config.c, horizon=config.horizon)
    if config.target == "beta52":
        return beta_logit_problem(_BETA_A, _BETA_B, C=config.c, horizon=config.horizon)
    if config.target == "gaussian":
        return gaussian_problem(config.c, horizon=config.horizon)
    raise ValueError(
        "target 'custom' has no built-in factors; construct a FusionProblem "
        "programmatically and pass it to run_experiment(config, problem=...)"
    )


def _direct_sampler(
    config: ExperimentConfig, problem: FusionProblem
) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Exact sampler for the fused target, shape (n, d)."""
    if config.target == "quartic":
        factor = quartic_problem(1).factors[0]
        return lambda rng, n: np.asarray(factor.direct_sampler(rng, n)).reshape(n, 1)
    if config.target == "beta52":
        def draw(rng: np.random.Generator, n: int) -> np.ndarray:
            u = rng.beta(_BETA_A, _BETA_B, size=n)
            bad = (u <= 0.0) | (u >= 1.0)
            while np.any(bad):
                u[bad] = rng.beta(_BETA_A, _BETA_B, size=int(bad.sum()))
                bad = (u <= 0.0) | (u >= 1.0)
            return logit_transform(u).reshape(n, 1)

        return draw
    if config.target == "gaussian":
        lam = np.stack(
            [np.atleast_1d(f.surrogate_precision) for f in problem.factors]
        )
        mu = np.stack([np.atleast_1d(f.surrogate_mean) for f in problem.factors])
        pooled = 1.0 / lam.sum(axis=0)
        mean = pooled * (lam * mu).sum(axis=0)
        sd = np.sqrt(pooled)
        return lambda rng, n: mean[None, :] + sd[None, :] * rng.standard_normal(
            (n, problem.dim)
        )
    raise ValueError("target 'custom' has no built-in reference sampler")


# ---------------------------------------------------------------------------
# surrogates


def preliminary_surrogate(
    factor: SubPosterior, n_pre: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Surrogate centre and precision from ``n_pre`` direct factor draws.

    Returns the per-coordinate sample mean and the reciprocal of the
    per-coordinate sample variance (unbiased, n − 1 denominator).
    """
    if int(n_pre) != n_pre or n_pre < 2:
        raise ValueError(f"n_pre must be an integer >= 2, got {n_pre}")
    draws = np.asarray(factor.direct_sampler(rng, int(n_pre)), dtype=float)
    draws = draws.reshape(int(n_pre), factor.dim)
    mu = draws.mean(axis=0)
    var = draws.var(axis=0, ddof=1)
    if np.any(var <= 0.0) or not np.all(np.isfinite(var)):
        raise ValueError(
            f"factor {factor.name!r} produced sample variance {var} over "
            f"{n_pre} preliminary draws; a positive finite variance is needed "
            "for a surrogate precision"
        )
    return mu, 1.0 / var


def resolve_surrogate(
    config: ExperimentConfig,
    problem: FusionProblem,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Common surrogate centre (d,) and per-factor precisions (C, d).

    Explicit values win when both are supplied; otherwise every factor gets
    a preliminary run and the centre is the precision-weighted pool of the
    per-factor means.
    """
    C, d = problem.n_factors, problem.dim
    has_mu, has_lam = config.mu_hat is not None, config.lambda_hat is not None
    if has_mu != has_lam:
        raise ValueError(
            "explicit surrogates need both mu-hat and lambda-hat; got only one"
        )
    if has_mu:
        return _as_mu(config.mu_hat, d), _as_lam_matrix(config.lambda_hat, C, d)
    mus, lams = [], []
    for factor in problem.factors:
        mu_c, lam_c = preliminary_surrogate(factor, config.n_pre, rng)
        mus.append(mu_c)
        lams.append(lam_c)
    lam = np.stack(lams)
    mu = (lam * np.stack(mus)).sum(axis=0) / lam.sum(axis=0)
    return mu, lam


def _resolve_cmc_weights(
    config: ExperimentConfig,
    problem: FusionProblem,
    rng: np.random.Generator,
) -> np.ndarray:
    C, d = problem.n_factors, problem.dim
    if config.lambda_hat is not None:
        return _as_lam_matrix(config.lambda_hat, C, d)
    return np.stack(
        [preliminary_surrogate(f, config.n_pre, rng)[1] for f in problem.factors]
    )


# ---------------------------------------------------------------------------
# file writers


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.ravel()]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"cannot serialise {type(value).__name__} to JSON")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n",
        encoding="utf-8",
    )


def _write_samples_csv(
    path: Path, samples: np.ndarray, u: Optional[np.ndarray]
) -> None:
    n, d = samples.shape
    cols = ["index"] + [f"y{i}" for i in range(d)]
    if u is not None:
        cols.append("u")
    lines = [",".join(cols)]
    for i in range(n):
        row = [str(i)] + [repr(float(v)) for v in samples[i]]
        if u is not None:
            row.append(repr(float(u[i])))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_samples_csv(path: Union[str, Path], column: str = "y0") -> np.ndarray:
    """Load one column from a samples CSV written by this harness."""
    p = Path(path)
    if not p.exists():
        raise ValueError(f"samples file {p} does not exist")
    with p.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if column not in header:
            raise ValueError(
                f"samples file {p} has columns {header}; expected a {column!r} column"
            )
        idx = header.index(column)
        values = []
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                values.append(float(parts[idx]))
            except (IndexError, ValueError):
                raise ValueError(
                    f"samples file {p}, line {ln}: cannot read column "
                    f"{column!r} from {line!r}"
                ) from None
    return np.array(values)


# ---------------------------------------------------------------------------
# run_experiment


@dataclass(frozen=True)
class ExperimentResult:
    samples: np.ndarray
    diagnostics: RunDiagnostics
    summary: dict
    paths: Dict[str, Path]
    surrogate: Optional[Tuple[np.ndarray, np.ndarray]] = None


def _run_algorithm(
    config: ExperimentConfig,
    problem: FusionProblem,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, RunDiagnostics, Optional[Tuple[np.ndarray, np.ndarray]]]:
    if config.algorithm == "bm":
        samples, diag = fuse_bm(problem, config.n, rng)
        return samples, diag, None
    if config.algorithm == "ou":
        mu, lam = resolve_surrogate(config, problem, rng)
        samples, diag = fuse_ou(problem, mu, lam, config.n, rng)
        return samples, diag, (mu, lam)
    if config.algorithm == "approx_ou":
        mu, lam = resolve_surrogate(config, problem, rng)
        samples, diag = approx_ou_with_diagnostics(problem, mu, lam, config.n, rng)
        return samples, diag, (mu, lam)
    if config.algorithm == "cmc":
        lam = _resolve_cmc_weights(config, problem, rng)
        samples, diag = cmc_with_diagnostics(problem, lam, config.n, rng)
        return samples, diag, (None, lam)
    # direct
    t0 = time.perf_counter()
    samples = _direct_sampler(config, problem)(rng, config.n)
    diag = RunDiagnostics(
        algorithm="direct",
        stage1_attempts=config.n,
        stage1_accepts=config.n,
        stage2_attempts=config.n,
        stage2_accepts=config.n,
        wall_clock_seconds=time.perf_counter() - t0,
    )
    return samples, diag, None


def _summarise(
    config: ExperimentConfig, samples: np.ndarray, u: Optional[np.ndarray]
) -> dict:
    kde_samples = u if u is not None else samples[:, 0]
    grid = kde_grid(kde_samples, config.bandwidth)
    values = kde(kde_samples, config.bandwidth, grid)
    summary: dict = {
        "n": int(samples.shape[0]),
        "mean": [float(v) for v in samples.mean(axis=0)],
        "variance": [float(v) for v in samples.var(axis=0, ddof=1)],
        "kde": {
            "bandwidth": float(config.bandwidth),
            "column": "u" if u is not None else "y0",
            "grid": [float(v) for v in grid],
            "values": [float(v) for v in values],
        },
    }
    if u is not None:
        summary["u_mean"] = float(u.mean())
        summary["u_variance"] = float(u.var(ddof=1))
    if config.reference is not None:
        reference = read_samples_csv(config.reference, column="y0")
        res = stats.ks_2samp(samples[:, 0], reference)
        summary["ks"] = {
            "reference": str(config.reference),
            "statistic": float(res.statistic),
            "pvalue": float(res.pvalue),
        }
    return summary


def run_experiment(
    config: ExperimentConfig, problem: Optional[FusionProblem] = None
) -> ExperimentResult:
    """Run one configured experiment and write its three artifact files."""
    if problem is None:
        problem = build_problem(config)
    out_dir = Path(config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise ValueError(f"output directory {out_dir} is not writable: {exc}") from None

    rng = np.random.default_rng(config.seed)
    samples, diag, surrogate = _run_algorithm(config, problem, rng)
    diag = diag.with_seed(config.seed)

    u = inverse_logit(samples[:, 0]) if config.target == "beta52" else None
    summary = _summarise(config, samples, u)

    paths = {
        "samples": out_dir / "samples.csv",
        "diagnostics": out_dir / "diagnostics.json",
        "summary": out_dir / "summary.json",
    }
    _write_samples_csv(paths["samples"], samples, u)
    diag_obj = {"config": config.echo(), **diag.to_dict()}
    if surrogate is not None:
        mu, lam = surrogate
        diag_obj["surrogate"] = {
            "mu_hat": None if mu is None else [float(v) for v in mu],
            "lambda_hat": [[float(v) for v in row] for row in lam],
        }
    _write_json(paths["diagnostics"], diag_obj)
    _write_json(paths["summary"], summary)
    return ExperimentResult(
        samples=samples,
        diagnostics=diag,
        summary=summary,
        paths=paths,
        surrogate=surrogate,
    )


# ---------------------------------------------------------------------------
# sweep_T


_SWEEP_COLUMNS = (
    "T",
    "n",
    "wall_clock_seconds",
    "stage1_attempts",
    "stage1_accepts",
    "stage2_attempts",
    "stage2_accepts",
    "attempts_per_accept",
    "seconds_per_sample",
)


def sweep_T(
    config: ExperimentConfig,
    t_grid: Sequence[float],
    out_path: Optional[Union[str, Path]] = None,
) -> List[dict]:
    """Run the configured sampler once per horizon and tabulate the cost.

    Each grid point gets its own deterministic generator derived from
    (seed, index).  Returns one row per horizon; writes them as CSV when
    ``out_path`` is given.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("t_grid must contain at least one horizon")
    if any(not (math.isfinite(t) and t > 0.0) for t in t_grid):
        raise ValueError(f"every horizon must be positive and finite, got {t_grid}")
    rows: List[dict] = []
    for i, t in enumerate(t_grid):
        cfg = config.with_horizon(t)
        problem = build_problem(cfg)
        rng = np.random.default_rng((config.seed, i))
        samples, diag, _ = _run_algorithm(cfg, problem, rng)
        accepted = samples.shape[0]
        rows.append(
            {
                "T": t,
                "n": accepted,
                "wall_clock_seconds": diag.wall_clock_seconds,
                "stage1_attempts": diag.stage1_attempts,
                "stage1_accepts": diag.stage1_accepts,
                "stage2_attempts": diag.stage2_attempts,
                "stage2_accepts": diag.stage2_accepts,
                "attempts_per_accept": diag.stage1_attempts / max(accepted, 1),
                "seconds_per_sample": diag.wall_clock_seconds / max(accepted, 1),
            }
        )
    if out_path is not None:
        lines = [",".join(_SWEEP_COLUMNS)]
        for row in rows:
            lines.append(
                ",".join(
                    repr(float(row[c])) if isinstance(row[c], float) else str(row[c])
                    for c in _SWEEP_COLUMNS
                )
            )
        Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows
