"""Linear graph sketches, sparse recovery and expander decompositions."""

from __future__ import annotations

from .errors import ContractViolation, GraphParseError, NumericalFailure, SketchLabError
from .graph import Graph

__all__ = ["ContractViolation", "Graph", "GraphParseError", "NumericalFailure", "SketchLabError"]
__version__ = "0.1.0"
