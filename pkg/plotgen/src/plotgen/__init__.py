"""Figure generation for simulator sweep CSVs."""

from .figures import (FIGURE_KINDS, FigureSpec, PlotgenError, SweepTable,
                      collect_points, render)

__version__ = "0.1.0"
