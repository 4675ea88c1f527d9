"""Slow-bond exclusion process workbench: growth-model constants, hydrodynamic
formulas and particle simulation."""

from slowbond.errors import (DomainError, MarginError, OracleCapError, ParameterError,
                             PreconditionError)

__version__ = "0.1.0"

__all__ = ["DomainError", "MarginError", "OracleCapError", "ParameterError",
           "PreconditionError", "__version__"]
