"""Numerical lab for intrinsic square functions, BMO commutators and
weighted amalgam norms on uniform grids."""

from .grid_core import Ball, Grid, GridFunction
from .intrinsic_sq import ConeQuadrature, TestDictionary, build_dictionary
from .norms import NormParams
from .weights import BallFamily, Weight

__all__ = [
    "Ball",
    "BallFamily",
    "ConeQuadrature",
    "Grid",
    "GridFunction",
    "NormParams",
    "TestDictionary",
    "Weight",
    "build_dictionary",
]
__version__ = "0.1.0"
