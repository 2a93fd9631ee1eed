"""Meshless solver for natural convection of power-law fluids in cavities."""

from .geometry import DensityField, Domain, distance_to_boundary, eval_density
from .nodes import NodeSet, NodeType, discretize_boundary, fill_interior, generate_nodes
from .operators import OperatorWeights, batch_weights, shape_weights
from .stencils import StencilTable, build_stencils

__all__ = [
    "DensityField",
    "Domain",
    "NodeSet",
    "NodeType",
    "OperatorWeights",
    "StencilTable",
    "batch_weights",
    "build_stencils",
    "discretize_boundary",
    "distance_to_boundary",
    "eval_density",
    "fill_interior",
    "generate_nodes",
    "shape_weights",
]
