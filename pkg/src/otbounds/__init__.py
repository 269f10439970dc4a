"""Sharp bounds on parameters of the joint distribution of potential outcomes.

The identified set for ``gamma = g(E[c(Y1, Y0)], eta)`` is an interval whose
endpoints are optimal transport values between the complier marginals.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundsResult,
    CdfCurve,
    ParameterSpec,
    aggregate_theta,
    cdf_bound_curve,
    estimate,
    gamma_bounds,
    grad_envelope,
    parameter,
    quantile_identified_set,
    theta_bounds_cell,
)
from .costs import IndicatorCost, SmoothCost, derive_class_bounds, smooth_cost
from .data import BinRule, Observation, Sample, Schema, load_sample, validate_assumptions
from .dual import (
    DualSolution,
    IntervalPair,
    approx_argmax_set,
    makarov_closed_form,
    solve_dual_indicator,
    solve_dual_smooth,
)
from .errors import OTBoundsError
from .inference import (
    BootstrapConfig,
    InferenceResult,
    bootstrap_draws,
    confidence_set,
    gen_bootstrap_weights,
    quantile_confidence_set,
)
from .measures import SignedMeasure, cell_probabilities, complier_measure, complier_share, first_stage
from .primal import primal_oracle

__all__ = [
    "BinRule",
    "BootstrapConfig",
    "BoundsResult",
    "CdfCurve",
    "DualSolution",
    "IndicatorCost",
    "InferenceResult",
    "IntervalPair",
    "OTBoundsError",
    "Observation",
    "ParameterSpec",
    "Sample",
    "Schema",
    "SignedMeasure",
    "SmoothCost",
    "aggregate_theta",
    "approx_argmax_set",
    "bootstrap_draws",
    "cdf_bound_curve",
    "cell_probabilities",
    "complier_measure",
    "complier_share",
    "confidence_set",
    "derive_class_bounds",
    "estimate",
    "first_stage",
    "gamma_bounds",
    "gen_bootstrap_weights",
    "grad_envelope",
    "load_sample",
    "makarov_closed_form",
    "parameter",
    "primal_oracle",
    "quantile_confidence_set",
    "quantile_identified_set",
    "smooth_cost",
    "solve_dual_indicator",
    "solve_dual_smooth",
    "theta_bounds_cell",
    "validate_assumptions",
]
