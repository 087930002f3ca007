"""Randomized infinite urn schemes and their self-similar stable limits."""
from .errors import (DecompositionUnavailable, NumericalError, ParameterError,
                     UnsupportedLawError)
from .freq import FrequencyModel, make_finite, make_log_perturbed, make_power_law
from .heavytail import EpsilonLaw, exact_sas, rademacher, symmetric_pareto
from .urnsim import OccupancyTrace, ParityPattern, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "DecompositionUnavailable", "NumericalError", "ParameterError", "UnsupportedLawError",
    "FrequencyModel", "make_finite", "make_log_perturbed", "make_power_law",
    "EpsilonLaw", "exact_sas", "rademacher", "symmetric_pareto",
    "OccupancyTrace", "ParityPattern", "TimeGrid", "__version__",
]
