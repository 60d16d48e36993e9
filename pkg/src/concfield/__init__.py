"""Deviation bounds for suprema of smooth random fields.

Submodules: ``model`` (parameter records), ``quadform`` (quadratic forms of
sub-Gaussian vectors), ``chaining`` (entropy and upper functions), ``bound``
(the supremum bound), ``eigenmax`` (top-eigenvalue application), ``mc``
(Monte Carlo verification) and ``cli``.
"""

from .bound import BoundConditionError, BoundReport, sup_bound
from .model import EffDim, FieldModel, effective_dims, validate_model
from .quadform import deviation_quantile, tail_bound

__version__ = "0.1.0"

__all__ = [
    "BoundConditionError",
    "BoundReport",
    "EffDim",
    "FieldModel",
    "deviation_quantile",
    "effective_dims",
    "sup_bound",
    "tail_bound",
    "validate_model",
]
