"""Static figure rendering for ehsoc experiment CSV outputs."""

from .render import (KINDS, DataError, FigureSpec, SchemaError, load_table,
                     render)

__all__ = ["KINDS", "DataError", "FigureSpec", "SchemaError", "load_table",
           "render"]

__version__ = "0.1.0"
