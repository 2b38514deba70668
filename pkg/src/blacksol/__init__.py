"""Numerical analysis of the black soliton of an NLS model with intensity-dependent dispersion."""

from __future__ import annotations

__version__ = "0.1.0"

from .grid import Grid, GridError, make_grid  # noqa: E402

__all__ = ["Grid", "GridError", "make_grid", "__version__"]
