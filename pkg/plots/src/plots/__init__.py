"""Figure regeneration for the experiment CSV outputs."""

from .figures import KINDS, FigureSpec, SchemaError, from_json, render

__all__ = ["KINDS", "FigureSpec", "SchemaError", "from_json", "render"]
