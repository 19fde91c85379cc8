"""Constrained sparse MIMO array design with the random-phase Weiss-Weinstein bound."""

from .geometry import (ArrayGeometry, PlacementConstraints, check_constraints, dilate,
                       load_geometry, save_geometry, uniform_mimo, virtual_array)

__version__ = "0.1.0"

__all__ = ["ArrayGeometry", "PlacementConstraints", "check_constraints", "dilate",
           "load_geometry", "save_geometry", "uniform_mimo", "virtual_array"]
