"""Exception types raised across the package."""


class MLBCDError(Exception):
    """Base class for all package errors."""


class DimensionError(MLBCDError, ValueError):
    """Array shapes or lengths do not match what the operation expects."""


class GeometryError(MLBCDError, ValueError):
    """Malformed sampling box or degenerate geometry."""


class NotSPDError(MLBCDError, ValueError):
    """Cholesky factorization met a non-positive pivot."""

    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value!r}")


class RankDeficientError(MLBCDError, ValueError):
    """Prolongation operator does not have full column rank."""


class NonFiniteError(MLBCDError, FloatingPointError):
    """A NaN or infinity appeared during evaluation.

    ``layer`` is the index of the first layer producing a non-finite value
    when it could be located, ``trace`` holds the partial run trace when the
    error aborts a training run.
    """

    def __init__(self, message, layer=None, trace=None):
        self.layer = layer
        self.trace = trace
        if layer is not None:
            message = f"{message} (layer {layer})"
        super().__init__(message)


class SelectionError(MLBCDError, RuntimeError):
    """No block satisfies the selection rule."""


class DescentError(MLBCDError, RuntimeError):
    """The monotone descent contract was violated in theory mode."""


class ConfigError(MLBCDError, ValueError):
    """Experiment configuration failed validation."""
