"""Figure kit for quditcal artifacts."""

from .figures import FIGURE_KINDS, FigureInputError, FigureSpec, read_table, render

__version__ = "0.1.0"
