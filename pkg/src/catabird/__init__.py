"""Birth-death processes with total catastrophes.

Transient, first-visit, effective-catastrophe and stationary statistics,
cross-validated by three independent routes: truncated-generator numerics,
closed forms, and exact Monte Carlo simulation.
"""

from ._backend import current_backend, set_backend
from .model import (GeneratorVariant, HAT, MODIFIED_M, ProcessSpec,
                    TimeVaryingSpec, TruncationWindow, WITH_CATASTROPHES,
                    taboo_absorbing, truncated_generator, validate_spec,
                    zoo_preset)

__version__ = "0.1.0"

__all__ = [
    "GeneratorVariant",
    "HAT",
    "MODIFIED_M",
    "ProcessSpec",
    "TimeVaryingSpec",
    "TruncationWindow",
    "WITH_CATASTROPHES",
    "current_backend",
    "set_backend",
    "taboo_absorbing",
    "truncated_generator",
    "validate_spec",
    "zoo_preset",
    "__version__",
]
