"""Linear estimation over spectratopes with certified risk bounds."""

__version__ = "0.1.0"
