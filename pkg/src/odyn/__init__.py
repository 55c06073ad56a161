"""Object-pushing dynamics: simulator, predictive models, and training tools."""

__version__ = "0.1.0"

from .errors import (
    DataError,
    DomainError,
    NumericalError,
    OdynError,
    PlacementError,
    ShapeError,
    UsageError,
)

__all__ = [
    "__version__",
    "OdynError",
    "ShapeError",
    "DomainError",
    "NumericalError",
    "PlacementError",
    "DataError",
    "UsageError",
]
