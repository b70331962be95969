"""Renderers turning the donor-memory CLI's CSV/JSON artifacts into figures.

This package only reads the emitted files; it never imports the simulator.
"""

from .render import FigureSpec, render

__all__ = ["FigureSpec", "render"]
__version__ = "0.1.0"
