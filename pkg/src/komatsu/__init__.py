"""Komatsu-class global hypoellipticity and solvability toolkit for vector fields on T^1 x S^3 style products."""

from .diophantine import ContinuedFraction, approximation_profile, convergents, named_pattern
from .duals import SU2, TORUS, ProductFrequency, RepIndex, enumerate_dual
from .weights import AssociatedFunction, WeightSequence, associated_value, check_conditions

__version__ = "0.1.0"

__all__ = [
    "AssociatedFunction",
    "ContinuedFraction",
    "ProductFrequency",
    "RepIndex",
    "SU2",
    "TORUS",
    "WeightSequence",
    "approximation_profile",
    "associated_value",
    "check_conditions",
    "convergents",
    "enumerate_dual",
    "named_pattern",
    "__version__",
]
