from .figures import FigureSpec, SchemaError, read_result_csv, render

__all__ = ["FigureSpec", "SchemaError", "read_result_csv", "render"]
__version__ = "0.1.0"
