"""Variational solver for spherical vector spin glasses.

Evaluates and minimizes the Crisanti-Sommers and Parisi functionals over
matrix-valued order parameters at finite and zero temperature, checks the
optimality equations and replica-symmetry criteria of the minimizers, and
cross-checks the variational ground-state energy against direct
maximization of sampled Gaussian Hamiltonians at small system size.
"""

from . import errors
from .functionals import (
    DiscreteOrderParam,
    MatrixPath,
    MeasureFn,
    PathSegment,
    ZeroTempTriple,
    continuous_cs,
    continuous_cs_rewritten,
    continuous_parisi,
    discrete_cs,
    discrete_parisi,
    gse_functional,
    linear_path,
    sine_interpolate,
)
from .model import MixedModel, cosh_model, model_from_dict, model_to_dict

__version__ = "0.1.0"

__all__ = [
    "errors",
    "MixedModel",
    "cosh_model",
    "model_from_dict",
    "model_to_dict",
    "DiscreteOrderParam",
    "MatrixPath",
    "MeasureFn",
    "PathSegment",
    "ZeroTempTriple",
    "linear_path",
    "sine_interpolate",
    "discrete_cs",
    "discrete_parisi",
    "continuous_cs",
    "continuous_cs_rewritten",
    "continuous_parisi",
    "gse_functional",
    "__version__",
]
