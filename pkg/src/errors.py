# src/errors.py
"""Exception types shared by every stage of the lab."""


class ShapeError(ValueError):
    """An array reached a layer or routine with an incompatible shape."""


class ModelStateError(RuntimeError):
    """A network was used out of order (e.g. backward before forward)."""


class NumericalError(RuntimeError):
    """Non-finite values or a singular system stopped a computation."""


class FormatError(ValueError):
    """A binary dataset or weight file is malformed or has the wrong version."""
