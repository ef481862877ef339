"""Numerics for cotangent bundles of flat and curved tori.

Closed geodesics and stable norms, explicit holomorphic cylinders, the
linearized Cauchy-Riemann operator, index computations, Poisson bracket
bounds and graph Lagrangians.
"""

__version__ = "0.1.0"

from .errors import ClabError  # noqa: E402

__all__ = ["ClabError", "__version__"]
