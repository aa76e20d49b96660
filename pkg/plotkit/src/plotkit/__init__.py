"""Deterministic figure rendering for twinmig CSV outputs."""

__version__ = "0.1.0"

from plotkit.figures import FIGURE_IDS, FigureSpec, SchemaError, build_figure, render

__all__ = ["FIGURE_IDS", "FigureSpec", "SchemaError", "build_figure", "render"]
