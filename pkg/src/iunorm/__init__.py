"""Integral-uniform norms of step functions and random polynomials."""
from .coeffs import CoeffModel, effective_dimension, parse_model, sample_coeffs
from .norms import (
    ConcaveProfile,
    NormKind,
    chain_report,
    integral_uniform,
    lp_norm,
    marcinkiewicz,
    relative_prime,
    relative_star,
)
from .stepfn import StepFunction, distribution, make_step, rearrangement
from .systems import (
    FunctionSystem,
    check_condition,
    indicator_system,
    make_system,
    mixed_system,
    rademacher_system,
    trig_system,
)

__version__ = "0.1.0"
