"""Experiment configuration: validated fields, target defaults, file loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

TARGETS = ("quartic", "beta52", "gaussian", "custom")
ALGORITHMS = ("bm", "ou", "cmc", "approx_ou", "direct")

# per-target defaults: factor count, horizon, KDE bandwidth (target-scale)
_TARGET_DEFAULTS = {
    "quartic": (4, 1.0, 0.25),
    "beta52": (5, 3.0, 0.04),
    "gaussian": (3, 1.0, 0.25),
    "custom": (None, None, None),
}

Scalars = Union[float, Sequence[float]]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: which target, which sampler, and how to report it.

    ``c``, ``horizon`` and ``bandwidth`` fall back to per-target defaults
    when omitted.  A surrogate is taken from explicit ``mu_hat``/
    ``lambda_hat`` values when given, otherwise estimated from ``n_pre``
    preliminary draws per factor.
    """

    target: str
    algorithm: str
    n: int
    seed: int
    c: Optional[int] = None
    horizon: Optional[float] = None
    bandwidth: Optional[float] = None
    mu_hat: Optional[Scalars] = None
    lambda_hat: Optional[Scalars] = None
    n_pre: int = 10_000
    reference: Optional[str] = None
    output_dir: str = field(default=".")

    def __post_init__(self) -> None:
        if self.target not in TARGETS:
            raise ValueError(
                f"unknown target {self.target!r}; choose one of {', '.join(TARGETS)}"
            )
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; choose one of "
                f"{', '.join(ALGORITHMS)}"
            )
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        c_def, t_def, h_def = _TARGET_DEFAULTS[self.target]
        object.__setattr__(self, "c", c_def if self.c is None else int(self.c))
        object.__setattr__(
            self, "horizon", t_def if self.horizon is None else float(self.horizon)
        )
        object.__setattr__(
            self,
            "bandwidth",
            h_def if self.bandwidth is None else float(self.bandwidth),
        )
        if self.target != "custom":
            if self.c is None or self.c < 1:
                raise ValueError(f"c must be a positive factor count, got {self.c}")
            if self.horizon is None or not (
                math.isfinite(self.horizon) and self.horizon > 0.0
            ):
                raise ValueError(f"T must be positive and finite, got {self.horizon}")
            if self.bandwidth is None or self.bandwidth <= 0.0:
                raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if int(self.n_pre) != self.n_pre or self.n_pre < 2:
            raise ValueError(
                f"n_pre must be an integer >= 2 (need a variance), got {self.n_pre}"
            )

    @property
    def surrogate_source(self) -> str:
        explicit = self.mu_hat is not None and self.lambda_hat is not None
        return "explicit" if explicit else "preliminary-mc"

    def with_horizon(self, horizon: float) -> "ExperimentConfig":
        return replace(self, horizon=float(horizon))

    def echo(self) -> dict:
        """JSON-ready view of the resolved configuration."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                v = [float(x) for x in v]
            out[f.name] = v
        out["surrogate_source"] = self.surrogate_source
        return out


_KEY_ALIASES = {"t": "horizon", "out": "output_dir", "mu-hat": "mu_hat",
                "lambda-hat": "lambda_hat", "n-pre": "n_pre"}


def read_config_file(path: Union[str, Path]) -> dict:
    """Read a JSON config file into normalized ExperimentConfig kwargs."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValueError(f"config file {p} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config file {p} must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in raw.items():
        name = _KEY_ALIASES.get(key, key.replace("-", "_"))
        name = _KEY_ALIASES.get(name, name)
        if name not in known:
            raise ValueError(f"config file {p}: unknown key {key!r}")
        kwargs[name] = value
    return kwargs


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an ExperimentConfig from a JSON file keyed by field or flag name."""
    kwargs = read_config_file(path)
    missing = {"target", "algorithm", "n", "seed"} - set(kwargs)
    if missing:
        raise ValueError(f"config file {path}: missing keys {sorted(missing)}")
    return ExperimentConfig(**kwargs)
