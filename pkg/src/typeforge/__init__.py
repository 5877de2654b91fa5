"""Type-oriented PGAS interpreter for a subset of the Mesham language."""

__version__ = "0.1.0"
