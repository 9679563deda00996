"""Exact Monte Carlo fusion of sub-posterior samples.

Combines independent draws from factor densities f_1, ..., f_C into exact
draws from the product f ∝ f_1···f_C via path-space rejection sampling, with
Brownian-bridge or Ornstein-Uhlenbeck proposal dynamics, plus approximate
baselines and a reproduction harness.
"""

from .model import (
    FusionProblem,
    SubPosterior,
    inverse_logit,
    logit_transform,
    make_power_decomposition,
    phi_dl,
)
from .targets import beta_logit_problem, gaussian_problem, quartic_problem

__all__ = [
    "FusionProblem",
    "SubPosterior",
    "phi_dl",
    "make_power_decomposition",
    "logit_transform",
    "inverse_logit",
    "quartic_problem",
    "gaussian_problem",
    "beta_logit_problem",
]

__version__ = "0.1.0"
