"""Figure scripts consuming cavityflow CSV outputs."""

from .data import PlotSpec, SchemaError
from .render import plot_convergence, plot_field, plot_profile, plot_series

__all__ = [
    "PlotSpec",
    "SchemaError",
    "plot_convergence",
    "plot_field",
    "plot_profile",
    "plot_series",
]
