"""Linear connections for second-order systems, with and without velocity constraints.

Everything is evaluated pointwise with truncated multivariate Taylor series
(:mod:`sode_geometry.jets`), so derivatives are exact up to rounding.
"""

__version__ = "0.1.0"
