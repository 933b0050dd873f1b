"""Oseledets splittings of transfer-operator cocycles for piecewise-affine Markov maps."""

__version__ = "0.1.0"
