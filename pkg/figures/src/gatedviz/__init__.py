"""Figure renderer for gatednet report exports."""

__version__ = "0.1.0"

from .render import KINDS, FigureSpec, render
from .schemas import MissingInputError, SchemaError

__all__ = ["KINDS", "FigureSpec", "render", "SchemaError", "MissingInputError"]
