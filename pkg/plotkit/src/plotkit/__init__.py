"""Rendering for dual-caching experiment reports.

Consumes only the published CSV contracts (curves.csv / grid.csv); shares
no code with the engine that produces them.
"""

from .csvio import CurveSeries, CurveSet, FormatError, GridCell, read_curves, read_grid
from .render import render_ablation_grid, render_error_curves

__version__ = "0.1.0"
