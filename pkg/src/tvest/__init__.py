"""Total-variation distance estimation between structured distributions.

The core estimator averages ``max(0, 1 - q(x)/p(x))`` over draws from ``P``
using (approximate) evaluators of both densities; the family modules build
samplers and evaluators for Bayesian networks, Ising models, Gaussians and
interventional distributions of causal networks.
"""

from .core import (
    DiscreteDistribution,
    EvalApproximator,
    Sampler,
    TvEstimate,
    estimate_tv,
    exact_kl,
    exact_tv,
    required_samples,
)
from .errors import (
    EstimationError,
    FamilyMismatchError,
    ParameterError,
    PreconditionError,
    SizeError,
    TvestError,
)

__all__ = [
    "DiscreteDistribution",
    "EstimationError",
    "EvalApproximator",
    "FamilyMismatchError",
    "ParameterError",
    "PreconditionError",
    "Sampler",
    "SizeError",
    "TvEstimate",
    "TvestError",
    "estimate_tv",
    "exact_kl",
    "exact_tv",
    "required_samples",
]
__version__ = "0.1.0"
