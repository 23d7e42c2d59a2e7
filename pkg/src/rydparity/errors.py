"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: InputError -> 2, InfeasibleError -> 3,
NumericalError -> 4.
"""


class RydparityError(Exception):
    """Base class for all toolkit errors."""


class InputError(RydparityError):
    """Malformed or inconsistent user input (files, shapes, ranges)."""


class InfeasibleError(RydparityError):
    """No solution exists within the allowed search window."""


class NumericalError(RydparityError):
    """Integration, tracking, or conditioning failure."""


class TrackingError(NumericalError):
    """Eigenstate tracking became ambiguous (overlap dropped too low)."""
