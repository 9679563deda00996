"""Path-space machinery: layered Brownian bridges and OU bridges."""

from .crossing import (
    DEFAULT_REFINEMENT_CAP,
    RefinementBudget,
    SeriesSeparationError,
    StayBracket,
    decide_band_event,
    decide_bernoulli,
    stay_probability,
)
from .ou import (
    ThinningTally,
    ou_moments,
    phi_ou,
    phi_ou_interval,
    sample_ou_bridge_gaussian,
    sample_ou_bridge_skeleton,
)
from .skeleton import (
    BesselLayer,
    BridgeEndpoints,
    BridgeSkeleton,
    brownian_bridge_marginal,
    default_layer_unit,
    reveal_bridge_points,
    sample_bessel_layer,
    sample_bessel_layers,
    sample_bridge_at_times,
    sample_point_given_layer,
)

__all__ = [
    "BridgeEndpoints",
    "BesselLayer",
    "BridgeSkeleton",
    "brownian_bridge_marginal",
    "sample_bridge_at_times",
    "sample_bessel_layer",
    "sample_bessel_layers",
    "sample_point_given_layer",
    "reveal_bridge_points",
    "default_layer_unit",
    "ou_moments",
    "phi_ou",
    "phi_ou_interval",
    "sample_ou_bridge_gaussian",
    "sample_ou_bridge_skeleton",
    "ThinningTally",
    "StayBracket",
    "RefinementBudget",
    "SeriesSeparationError",
    "stay_probability",
    "decide_bernoulli",
    "decide_band_event",
    "DEFAULT_REFINEMENT_CAP",
]
