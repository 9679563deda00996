"""Reproduction harness: configs, KDE summaries, experiment runner, CLI."""

from .config import ALGORITHMS, TARGETS, ExperimentConfig, load_config
from .experiments import (
    ExperimentResult,
    build_problem,
    preliminary_surrogate,
    resolve_surrogate,
    run_experiment,
    sweep_T,
)
from .kde import kde, kde_grid

__all__ = [
    "ALGORITHMS",
    "TARGETS",
    "ExperimentConfig",
    "ExperimentResult",
    "load_config",
    "build_problem",
    "preliminary_surrogate",
    "resolve_surrogate",
    "run_experiment",
    "sweep_T",
    "kde",
    "kde_grid",
]
