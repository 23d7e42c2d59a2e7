"""Four-body Rydberg parity gate simulation, calibration, and parity-QAOA toolkit."""

__version__ = "0.1.0"

from .errors import InfeasibleError, InputError, NumericalError, RydparityError, TrackingError

__all__ = [
    "InfeasibleError",
    "InputError",
    "NumericalError",
    "RydparityError",
    "TrackingError",
    "__version__",
]
